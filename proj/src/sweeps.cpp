// SPDX-License-Identifier: Apache-2.0
#include "randomout/sweeps.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "randomout/error.hpp"
#include "randomout/metrics.hpp"

namespace randomout {

using nlohmann::json;

namespace stats {

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace stats

std::vector<RunSummary> run_all(const std::vector<TrainConfig>& configs, const SweepOptions& opts) {
  for (const TrainConfig& c : configs) c.validate();

  std::map<std::string, PreparedData> data;
  std::vector<std::optional<RunSummary>> results(configs.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (opts.out_dir) {
      results[i] = read_run_summary(*opts.out_dir / configs[i].hash());
      if (results[i]) continue;
    }
    pending.push_back(i);
    const std::string key = configs[i].dataset.canonical();
    if (!data.contains(key)) data.emplace(key, prepare_data(configs[i].dataset));
  }

  std::mutex log_mutex;
  auto log = [&](const std::string& line) {
    if (!opts.log) return;
    std::lock_guard lock(log_mutex);
    opts.log(line);
  };

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= pending.size()) return;
      const std::size_t i = pending[slot];
      const TrainConfig& cfg = configs[i];
      try {
        const RunResult run = run_training(cfg, data.at(cfg.dataset.canonical()));
        if (opts.out_dir) write_run(run, *opts.out_dir / run.hash);
        results[i] = summarize(run);
        log("run " + run.hash + " seed=" + std::to_string(cfg.seed) + " condition=" +
            std::string(to_string(cfg.condition)) + " width=" + std::to_string(cfg.model.width) +
            " test_acc=" + format_real(run.final_test_acc) + (run.diverged ? " diverged" : ""));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(pending.size());
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, pending.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<RunSummary> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

namespace {

json summary_entry(const RunSummary& s) {
  json j{{"hash", s.hash},
         {"seed", s.config.seed},
         {"condition", to_string(s.config.condition)},
         {"width", s.config.model.width},
         {"final_test_acc", s.final_test_acc},
         {"diverged", s.diverged},
         {"failed", s.failed()},
         {"total_resets", s.total_resets},
         {"early_below_mean", s.early_below_mean},
         {"late_below_mean", s.late_below_mean},
         {"mean_cgn", s.mean_cgn}};
  if (s.config.randomout) {
    j["tau"] = s.config.randomout->tau;
    j["p_active"] = s.config.randomout->p_active;
  }
  return j;
}

json nan_safe(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::vector<double> accuracies(std::span<const RunSummary> runs) {
  std::vector<double> out;
  for (const RunSummary& r : runs) out.push_back(r.final_test_acc);
  return out;
}

bool non_decreasing(const std::vector<double>& xs) {
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] < xs[i - 1]) return false;
  }
  return true;
}

}  // namespace

const ConditionStats& SeedSweepResult::stats_for(Condition c) const {
  for (const ConditionStats& s : conditions) {
    if (s.condition == c) return s;
  }
  throw InvalidArgument("condition " + std::string(to_string(c)) + " not in sweep");
}

SeedSweepResult seed_sweep(const TrainConfig& base_cfg, const std::vector<std::uint64_t>& seeds,
                           const std::vector<Condition>& conditions, const SweepOptions& opts) {
  if (seeds.size() < 2) throw InvalidArgument("seed sweep needs at least 2 seeds");
  std::vector<Condition> conds{Condition::base};
  for (Condition c : conditions) {
    if (std::find(conds.begin(), conds.end(), c) == conds.end()) conds.push_back(c);
  }
  std::vector<TrainConfig> configs;
  for (Condition c : conds) {
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = with_condition(base_cfg, c, opts.randomout);
      cfg.seed = seed;
      configs.push_back(cfg);
    }
  }
  SeedSweepResult result{seeds, run_all(configs, opts), {}};

  const std::size_t n = seeds.size();
  const std::vector<double> base_acc =
      accuracies(std::span<const RunSummary>(result.runs).subspan(0, n));
  for (std::size_t ci = 0; ci < conds.size(); ++ci) {
    std::span<const RunSummary> runs = std::span<const RunSummary>(result.runs).subspan(ci * n, n);
    const std::vector<double> acc = accuracies(runs);
    ConditionStats st;
    st.condition = conds[ci];
    st.runs = n;
    st.mean = stats::mean(acc);
    st.median = stats::median(acc);
    st.std = stats::stddev(acc);
    for (const RunSummary& r : runs) {
      st.failures += r.failed() ? 1 : 0;
      st.divergences += r.diverged ? 1 : 0;
    }
    st.failure_rate = static_cast<double>(st.failures) / static_cast<double>(n);
    if (conds[ci] != Condition::base) {
      for (std::size_t s = 0; s < n; ++s) st.gains.push_back(acc[s] - base_acc[s]);
      st.mean_gain = stats::mean(st.gains);
      st.median_gain = stats::median(st.gains);
    }
    result.conditions.push_back(std::move(st));
  }
  return result;
}

std::string SeedSweepResult::to_json() const {
  json j;
  j["kind"] = "seed_sweep";
  j["seeds"] = seeds;
  if (!runs.empty()) {
    TrainConfig base = runs.front().config;
    j["base_config_hash"] = base.hash();
  }
  json conds = json::array();
  for (const ConditionStats& s : conditions) {
    conds.push_back({{"condition", to_string(s.condition)},
                     {"runs", s.runs},
                     {"mean", s.mean},
                     {"median", s.median},
                     {"std", s.std},
                     {"failures", s.failures},
                     {"divergences", s.divergences},
                     {"failure_rate", s.failure_rate},
                     {"mean_gain", s.mean_gain},
                     {"median_gain", s.median_gain}});
  }
  j["conditions"] = conds;
  json rs = json::array();
  for (const RunSummary& r : runs) rs.push_back(summary_entry(r));
  j["runs"] = rs;
  return j.dump(2);
}

std::string SeedSweepResult::to_csv() const {
  std::ostringstream os;
  os << "condition,seed,hash,final_test_acc,diverged,failed,total_resets\n";
  for (const RunSummary& r : runs) {
    os << to_string(r.config.condition) << ',' << r.config.seed << ',' << r.hash << ','
       << format_real(r.final_test_acc) << ',' << (r.diverged ? 1 : 0) << ','
       << (r.failed() ? 1 : 0) << ',' << r.total_resets << '\n';
  }
  return os.str();
}

std::vector<double> default_grid_taus() { return {1e-14, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4}; }
std::vector<double> default_grid_ps() { return {0.25, 0.5, 0.75, 1.0}; }

GridResult grid_search(const TrainConfig& base_cfg, const std::vector<double>& taus,
                       const std::vector<double>& ps, const std::vector<std::uint64_t>& seeds,
                       const SweepOptions& opts) {
  if (taus.empty() || ps.empty() || seeds.empty()) {
    throw InvalidArgument("grid search needs at least one tau, p and seed");
  }
  std::vector<TrainConfig> configs;
  for (std::uint64_t seed : seeds) {
    TrainConfig cfg = with_condition(base_cfg, Condition::base, opts.randomout);
    cfg.seed = seed;
    configs.push_back(cfg);
  }
  for (double tau : taus) {
    for (double p : ps) {
      for (std::uint64_t seed : seeds) {
        RandomOutConfig ro = opts.randomout;
        ro.tau = tau;
        ro.p_active = p;
        TrainConfig cfg = with_condition(base_cfg, Condition::randomout, ro);
        cfg.seed = seed;
        configs.push_back(cfg);
      }
    }
  }
  std::vector<RunSummary> all = run_all(configs, opts);
  const std::size_t ns = seeds.size();

  GridResult g;
  g.taus = taus;
  g.ps = ps;
  g.seeds = seeds;
  g.base_runs.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(ns));
  g.randomout_runs.assign(all.begin() + static_cast<std::ptrdiff_t>(ns), all.end());
  g.gain.assign(taus.size(), std::vector<double>(ps.size(), 0.0));
  for (std::size_t t = 0; t < taus.size(); ++t) {
    for (std::size_t p = 0; p < ps.size(); ++p) {
      std::vector<double> gains;
      for (std::size_t s = 0; s < ns; ++s) {
        const RunSummary& r = g.randomout_runs[(t * ps.size() + p) * ns + s];
        gains.push_back(r.final_test_acc - g.base_runs[s].final_test_acc);
      }
      g.gain[t][p] = stats::mean(gains);
    }
  }
  const auto min_tau = static_cast<std::size_t>(
      std::min_element(taus.begin(), taus.end()) - taus.begin());
  g.p_gain_correlation_at_min_tau = stats::correlation(ps, g.gain[min_tau]);
  return g;
}

std::pair<std::size_t, std::size_t> GridResult::best_cell() const {
  std::vector<std::size_t> order(taus.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return taus[a] < taus[b]; });
  std::pair<std::size_t, std::size_t> best{order.front(), 0};
  double best_gain = -std::numeric_limits<double>::infinity();
  for (std::size_t t : order) {
    for (std::size_t p = ps.size(); p-- > 0;) {
      if (gain[t][p] > best_gain) {
        best_gain = gain[t][p];
        best = {t, p};
      }
    }
  }
  return best;
}

std::string GridResult::to_csv() const {
  std::ostringstream os;
  os << "tau";
  for (double p : ps) os << ',' << format_real(p);
  os << '\n';
  for (std::size_t t = 0; t < taus.size(); ++t) {
    os << format_real(taus[t]);
    for (std::size_t p = 0; p < ps.size(); ++p) os << ',' << format_real(gain[t][p]);
    os << '\n';
  }
  return os.str();
}

std::string GridResult::to_json() const {
  json j;
  j["kind"] = "grid_search";
  j["taus"] = taus;
  j["ps"] = ps;
  j["seeds"] = seeds;
  j["gain"] = gain;
  const auto [bt, bp] = best_cell();
  j["best_cell"] = {{"tau", taus[bt]}, {"p_active", ps[bp]}, {"gain", gain[bt][bp]}};
  j["p_gain_correlation_at_min_tau"] = nan_safe(p_gain_correlation_at_min_tau);
  if (!base_runs.empty()) j["base_config_hash"] = base_runs.front().config.hash();
  json rs = json::array();
  for (const RunSummary& r : base_runs) rs.push_back(summary_entry(r));
  for (const RunSummary& r : randomout_runs) rs.push_back(summary_entry(r));
  j["runs"] = rs;
  return j.dump(2);
}

WidthSweepResult width_sweep(const TrainConfig& base_cfg, const std::vector<std::size_t>& widths,
                             const std::vector<std::uint64_t>& seeds, const SweepOptions& opts) {
  if (widths.empty() || seeds.empty()) throw InvalidArgument("width sweep needs widths and seeds");
  if (base_cfg.model.name != ModelName::cratercnn) {
    throw ConfigError("width sweep is defined for the cratercnn model");
  }
  std::vector<TrainConfig> configs;
  for (std::size_t w : widths) {
    for (Condition c : {Condition::base, Condition::randomout}) {
      for (std::uint64_t seed : seeds) {
        TrainConfig cfg = with_condition(base_cfg, c, opts.randomout);
        cfg.model.width = w;
        cfg.seed = seed;
        configs.push_back(cfg);
      }
    }
  }
  WidthSweepResult r;
  r.widths = widths;
  r.seeds = seeds;
  r.runs = run_all(configs, opts);
  const std::size_t ns = seeds.size();
  for (std::size_t wi = 0; wi < widths.size(); ++wi) {
    std::span<const RunSummary> all(r.runs);
    r.base_mean.push_back(stats::mean(accuracies(all.subspan((2 * wi) * ns, ns))));
    r.randomout_mean.push_back(stats::mean(accuracies(all.subspan((2 * wi + 1) * ns, ns))));
  }
  for (std::size_t wi = 0; wi < widths.size(); ++wi) {
    std::optional<long> extra;
    std::optional<std::size_t> smallest;
    for (std::size_t wj = 0; wj < widths.size(); ++wj) {
      if (r.base_mean[wj] >= r.randomout_mean[wi] && (!smallest || widths[wj] < *smallest)) {
        smallest = widths[wj];
      }
    }
    if (smallest) extra = static_cast<long>(*smallest) - static_cast<long>(widths[wi]);
    r.extra_filters.push_back(extra);
  }
  r.base_non_decreasing = non_decreasing(r.base_mean);
  r.randomout_non_decreasing = non_decreasing(r.randomout_mean);
  return r;
}

std::string WidthSweepResult::to_csv() const {
  std::ostringstream os;
  os << "width,base_mean,randomout_mean,extra_filters\n";
  for (std::size_t i = 0; i < widths.size(); ++i) {
    os << widths[i] << ',' << format_real(base_mean[i]) << ',' << format_real(randomout_mean[i])
       << ',' << (extra_filters[i] ? std::to_string(*extra_filters[i]) : "") << '\n';
  }
  return os.str();
}

std::string WidthSweepResult::to_json() const {
  json j;
  j["kind"] = "width_sweep";
  j["widths"] = widths;
  j["seeds"] = seeds;
  j["base_mean"] = base_mean;
  j["randomout_mean"] = randomout_mean;
  json extra = json::array();
  for (const auto& e : extra_filters) extra.push_back(e ? json(*e) : json(nullptr));
  j["extra_filters"] = extra;
  j["base_non_decreasing"] = base_non_decreasing;
  j["randomout_non_decreasing"] = randomout_non_decreasing;
  if (!runs.empty()) j["base_config_hash"] = runs.front().config.hash();
  json rs = json::array();
  for (const RunSummary& s : runs) rs.push_back(summary_entry(s));
  j["runs"] = rs;
  return j.dump(2);
}

}  // namespace randomout
