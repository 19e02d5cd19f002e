// SPDX-License-Identifier: Apache-2.0
//
// The training loop. Per minibatch: forward, backward, CGN telemetry,
// optional filter scan and reset, optimizer step. Per epoch: test accuracy
// in eval mode. A non-finite loss or gradient ends the run early and marks
// it divergent; the run still produces a result.
#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "randomout/config.hpp"
#include "randomout/data.hpp"
#include "randomout/metrics.hpp"
#include "randomout/nn.hpp"
#include "randomout/regularizer.hpp"

namespace randomout {

using LogSink = std::function<void(const std::string&)>;

struct PreparedData {
  Dataset train;
  Dataset test;
};

/// Loads or generates the dataset and applies the seeded 50/50 split.
PreparedData prepare_data(const DatasetSpec& spec);

/// The model a run starts from: architecture from cfg.model, input shape and
/// class count from `train`, Xavier weights from the run's init stream, and
/// the optional dead_init bias offset.
Model initial_model(const TrainConfig& cfg, const Dataset& train);

double evaluate_accuracy(Model& model, const Dataset& data);
double batch_accuracy(const Tensor& logits, std::span<const int> labels);

struct RunResult {
  TrainConfig config;
  std::string hash;
  std::vector<MetricsRecord> metrics;
  std::vector<ResetEvent> resets;
  std::vector<double> epoch_test_acc;
  double final_test_acc = 0.0;
  double chance = 0.5;
  bool diverged = false;
  Model final_model;
};

RunResult run_training(const TrainConfig& cfg, const PreparedData& data, const LogSink& log = {});
RunResult run_training(const TrainConfig& cfg, const LogSink& log = {});

/// Compact description of a finished run, enough for sweep statistics.
struct RunSummary {
  std::string hash;
  TrainConfig config;
  double final_test_acc = 0.0;
  double chance = 0.5;
  bool diverged = false;
  std::size_t total_resets = 0;
  std::size_t batches = 0;
  /// Mean below-threshold count over the first and last quarter of batches.
  double early_below_mean = 0.0;
  double late_below_mean = 0.0;
  double mean_cgn = 0.0;

  /// Final test accuracy below chance + 5 points, or divergence.
  bool failed() const { return diverged || final_test_acc < chance + 0.05; }
};

RunSummary summarize(const RunResult& run);

/// Writes config.json, metrics.csv, resets.csv, params.json and summary.json
/// into `dir` (created if needed). summary.json is written last and marks
/// the run complete.
void write_run(const RunResult& run, const std::filesystem::path& dir);
/// Reads summary.json from a completed run directory, or nullopt if absent.
std::optional<RunSummary> read_run_summary(const std::filesystem::path& dir);

std::string summary_to_json(const RunSummary& s);
RunSummary summary_from_json(const std::string& text);

}  // namespace randomout
