// SPDX-License-Identifier: Apache-2.0
//
// Multi-run experiment protocols over matched seeds. Every comparison pairs
// runs that share (seed, dataset, width), hence identical initial weights
// and batch order. Runs execute on a bounded worker pool; each run is
// deterministic on its own, so results do not depend on the pool size.
//
// With an output directory, each run lands in <out>/<config hash>/ and a
// run whose summary.json already exists is loaded instead of recomputed.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "randomout/config.hpp"
#include "randomout/training.hpp"

namespace randomout {

namespace stats {
double mean(std::span<const double> xs);
double median(std::vector<double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double stddev(std::span<const double> xs);
/// Pearson correlation; NaN when either side has zero variance.
double correlation(std::span<const double> xs, std::span<const double> ys);
}  // namespace stats

struct SweepOptions {
  std::size_t jobs = 1;
  std::optional<std::filesystem::path> out_dir;
  /// RandomOut settings for the "randomout" condition (seed sweep, width sweep).
  RandomOutConfig randomout;
  LogSink log;
};

/// Runs every config (resuming from out_dir when possible) and returns
/// summaries in input order.
std::vector<RunSummary> run_all(const std::vector<TrainConfig>& configs, const SweepOptions& opts);

struct ConditionStats {
  Condition condition;
  std::size_t runs = 0;
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;
  std::size_t failures = 0;     // chance-level or divergent
  std::size_t divergences = 0;  // non-finite loss
  double failure_rate = 0.0;
  /// Paired against base at the same seed; empty for base itself.
  std::vector<double> gains;
  double mean_gain = 0.0;
  double median_gain = 0.0;
};

struct SeedSweepResult {
  std::vector<std::uint64_t> seeds;
  std::vector<RunSummary> runs;  // condition-major, then seed order
  std::vector<ConditionStats> conditions;

  const ConditionStats& stats_for(Condition c) const;
  std::string to_json() const;
  std::string to_csv() const;
};

/// Runs each (condition, seed) pair. The base condition is always included
/// so gains can be paired.
SeedSweepResult seed_sweep(const TrainConfig& base_cfg, const std::vector<std::uint64_t>& seeds,
                           const std::vector<Condition>& conditions, const SweepOptions& opts);

struct GridResult {
  std::vector<double> taus;
  std::vector<double> ps;
  std::vector<std::uint64_t> seeds;
  /// gain[t][p] = mean over seeds of (acc_randomout - acc_base).
  std::vector<std::vector<double>> gain;
  std::vector<RunSummary> base_runs;
  std::vector<RunSummary> randomout_runs;  // tau-major, then p, then seed
  /// Correlation of gain with p along the smallest-tau row.
  double p_gain_correlation_at_min_tau = 0.0;

  /// (tau index, p index) of the largest gain; ties go to the smaller tau,
  /// then the larger p.
  std::pair<std::size_t, std::size_t> best_cell() const;
  /// Header "tau,<p0>,<p1>,..." then one row per tau.
  std::string to_csv() const;
  std::string to_json() const;
};

GridResult grid_search(const TrainConfig& base_cfg, const std::vector<double>& taus,
                       const std::vector<double>& ps, const std::vector<std::uint64_t>& seeds,
                       const SweepOptions& opts);

std::vector<double> default_grid_taus();
std::vector<double> default_grid_ps();

struct WidthSweepResult {
  std::vector<std::size_t> widths;
  std::vector<std::uint64_t> seeds;
  std::vector<double> base_mean;
  std::vector<double> randomout_mean;
  /// For width k: smallest swept width k' with base(k') >= randomout(k),
  /// reported as k' - k; nullopt if no swept width qualifies.
  std::vector<std::optional<long>> extra_filters;
  bool base_non_decreasing = false;
  bool randomout_non_decreasing = false;
  std::vector<RunSummary> runs;

  std::string to_csv() const;
  std::string to_json() const;
};

WidthSweepResult width_sweep(const TrainConfig& base_cfg, const std::vector<std::size_t>& widths,
                             const std::vector<std::uint64_t>& seeds, const SweepOptions& opts);

}  // namespace randomout
