// SPDX-License-Identifier: Apache-2.0
#include "randomout/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <sstream>

#include "randomout/error.hpp"
#include "randomout/optim.hpp"

namespace randomout {

using nlohmann::json;

PreparedData prepare_data(const DatasetSpec& spec) {
  Dataset full = [&] {
    switch (spec.kind) {
      case DatasetSpec::Kind::synth: return synth_craters(spec.n_pos, spec.n_neg, spec.seed);
      case DatasetSpec::Kind::idx: return load_idx(spec.images, spec.labels);
      case DatasetSpec::Kind::cifar10: return load_cifar10_binary(spec.path, spec.max_per_class);
    }
    throw ConfigError("unknown dataset kind");
  }();
  full.validate();
  auto [train, test] = split_50_50(full, spec.seed);
  return {std::move(train), std::move(test)};
}

Model initial_model(const TrainConfig& cfg, const Dataset& train) {
  ModelSpec spec;
  spec.name = cfg.model.name;
  spec.width = cfg.model.width;
  spec.with_batchnorm = cfg.model.batchnorm;
  spec.num_classes = train.num_classes;
  spec.input_shape = train.sample_shape();
  RngStream rng = derive_stream(cfg.seed, StreamPurpose::init, 0);
  Model model = build_model(spec, rng);
  if (cfg.dead_init) {
    std::size_t seen = 0;
    bool applied = false;
    for (std::size_t id = 0; id < model.layer_count() && !applied; ++id) {
      auto* conv = dynamic_cast<Conv2d*>(&model.layer(static_cast<int>(id)));
      if (conv == nullptr) continue;
      if (seen++ == cfg.dead_init->conv_layer) {
        conv->bias().value.fill(cfg.dead_init->bias);
        applied = true;
      }
    }
    if (!applied) throw ConfigError("dead_init.conv_layer exceeds the model's conv layer count");
  }
  return model;
}

namespace {

std::size_t correct_count(const Tensor& logits, std::span<const int> labels) {
  const std::size_t n = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.raw() + i * k;
    const auto pred = static_cast<int>(std::max_element(row, row + k) - row);
    if (pred == labels[i]) ++hits;
  }
  return hits;
}

}  // namespace

double batch_accuracy(const Tensor& logits, std::span<const int> labels) {
  return static_cast<double>(correct_count(logits, labels)) /
         static_cast<double>(logits.shape()[0]);
}

double evaluate_accuracy(Model& model, const Dataset& data) {
  constexpr std::size_t kChunk = 256;
  std::size_t hits = 0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t end = std::min(data.size(), begin + kChunk);
    idx.clear();
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    const Dataset chunk = data.subset(idx);
    const ForwardPass pass = model.forward(chunk.images, Mode::eval);
    hits += correct_count(pass.logits(), chunk.labels);
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace {

std::unique_ptr<Optimizer> make_optimizer(const OptimizerSpec& spec) {
  if (spec.kind == OptimizerSpec::Kind::sgd) return std::make_unique<Sgd>(spec.lr);
  AdamHyper h;
  h.lr = spec.lr;
  return std::make_unique<Adam>(h);
}

}  // namespace

RunResult run_training(const TrainConfig& cfg, const PreparedData& data, const LogSink& log) {
  cfg.validate();
  Model model = initial_model(cfg, data.train);
  std::unique_ptr<Optimizer> optimizer = make_optimizer(cfg.optimizer);
  const BatchPlan plan(data.train.size(), cfg.batch_size, cfg.seed);
  RngStream reset_rng = derive_stream(cfg.seed, StreamPurpose::randomout, 0);
  const std::vector<FilterGroup> groups = model.filter_groups();
  const std::vector<ParamNode*> params = model.params();
  const double tau = cfg.telemetry_tau;
  const std::size_t per_epoch = plan.batches_per_epoch();
  const std::size_t total_batches = cfg.epochs * per_epoch;

  std::vector<MetricsRecord> metrics;
  metrics.reserve(total_batches);
  std::vector<ResetEvent> resets;
  std::vector<double> epoch_acc;
  bool diverged = false;
  std::size_t done = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs && !diverged; ++epoch) {
    const auto batches = plan.batches(epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Dataset batch = data.train.subset(batches[b]);
      model.zero_grads();
      const ForwardPass pass = model.forward(batch.images, Mode::train);
      const double loss = model.backward(pass, batch.labels);

      MetricsRecord rec;
      rec.epoch = static_cast<int>(epoch);
      rec.batch = static_cast<int>(b);
      rec.train_loss = loss;
      rec.train_acc = batch_accuracy(pass.logits(), batch.labels);

      double cgn_sum = 0.0;
      int below = 0;
      for (const FilterGroup& g : groups) {
        const double s = cgn(g);
        cgn_sum += s;
        if (s < tau) ++below;
      }
      rec.mean_cgn = groups.empty() ? 0.0 : cgn_sum / static_cast<double>(groups.size());
      rec.below_thresh = below;

      if (!std::isfinite(loss) || !grads_finite(params)) {
        rec.diverged = true;
        metrics.push_back(rec);
        diverged = true;
        break;
      }

      if (cfg.randomout && done % static_cast<std::size_t>(cfg.randomout->check_every) == 0) {
        const double progress = static_cast<double>(done) / static_cast<double>(total_batches);
        auto events = scan_and_reset(model, *optimizer, *cfg.randomout, progress, reset_rng,
                                     rec.epoch, rec.batch);
        rec.resets = static_cast<int>(events.size());
        resets.insert(resets.end(), events.begin(), events.end());
      }

      if (!optimizer->step(params)) {
        rec.diverged = true;
        metrics.push_back(rec);
        diverged = true;
        break;
      }
      metrics.push_back(rec);
      ++done;
    }
    if (diverged) break;
    const double acc = evaluate_accuracy(model, data.test);
    epoch_acc.push_back(acc);
    metrics.back().test_acc = acc;
    if (log) {
      std::ostringstream os;
      os << "epoch " << epoch + 1 << "/" << cfg.epochs << " loss=" << format_real(metrics.back().train_loss)
         << " test_acc=" << format_real(acc) << " resets=" << resets.size();
      log(os.str());
    }
  }

  double final_acc = 0.0;
  if (diverged) {
    final_acc = evaluate_accuracy(model, data.test);
    if (log) log("run diverged at epoch " + std::to_string(metrics.back().epoch + 1));
  } else if (!epoch_acc.empty()) {
    final_acc = epoch_acc.back();
  } else {
    final_acc = evaluate_accuracy(model, data.test);
  }

  return RunResult{cfg,
                   cfg.hash(),
                   std::move(metrics),
                   std::move(resets),
                   std::move(epoch_acc),
                   final_acc,
                   1.0 / static_cast<double>(data.train.num_classes),
                   diverged,
                   std::move(model)};
}

RunResult run_training(const TrainConfig& cfg, const LogSink& log) {
  cfg.validate();
  return run_training(cfg, prepare_data(cfg.dataset), log);
}

RunSummary summarize(const RunResult& run) {
  RunSummary s;
  s.hash = run.hash;
  s.config = run.config;
  s.final_test_acc = run.final_test_acc;
  s.chance = run.chance;
  s.diverged = run.diverged;
  s.total_resets = run.resets.size();
  s.batches = run.metrics.size();
  const std::size_t q = s.batches / 4;
  if (q > 0) {
    double early = 0.0;
    double late = 0.0;
    for (std::size_t i = 0; i < q; ++i) {
      early += run.metrics[i].below_thresh;
      late += run.metrics[s.batches - q + i].below_thresh;
    }
    s.early_below_mean = early / static_cast<double>(q);
    s.late_below_mean = late / static_cast<double>(q);
  }
  double cgn_total = 0.0;
  for (const MetricsRecord& r : run.metrics) cgn_total += r.mean_cgn;
  s.mean_cgn = s.batches ? cgn_total / static_cast<double>(s.batches) : 0.0;
  return s;
}

std::string summary_to_json(const RunSummary& s) {
  json j{{"hash", s.hash},
         {"config", json::parse(s.config.to_json())},
         {"final_test_acc", s.final_test_acc},
         {"chance", s.chance},
         {"diverged", s.diverged},
         {"failed", s.failed()},
         {"total_resets", s.total_resets},
         {"batches", s.batches},
         {"early_below_mean", s.early_below_mean},
         {"late_below_mean", s.late_below_mean},
         {"mean_cgn", s.mean_cgn}};
  return j.dump(2);
}

RunSummary summary_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RunSummary s;
    s.hash = j.at("hash").get<std::string>();
    s.config = TrainConfig::from_json(j.at("config").dump());
    s.final_test_acc = j.at("final_test_acc").get<double>();
    s.chance = j.at("chance").get<double>();
    s.diverged = j.at("diverged").get<bool>();
    s.total_resets = j.at("total_resets").get<std::size_t>();
    s.batches = j.at("batches").get<std::size_t>();
    s.early_below_mean = j.at("early_below_mean").get<double>();
    s.late_below_mean = j.at("late_below_mean").get<double>();
    s.mean_cgn = j.at("mean_cgn").get<double>();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed run summary: ") + e.what(), 0);
  }
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_run(const RunResult& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.json", json::parse(run.config.to_json()).dump(2) + "\n");
  write_metrics(dir / "metrics.csv", run.metrics);

  std::ostringstream ev;
  ev << "epoch,batch,layer_id,filter_index,cgn_before\n";
  for (const ResetEvent& e : run.resets) {
    ev << e.epoch << ',' << e.batch << ',' << e.layer_id << ',' << e.filter_index << ','
       << format_real(e.cgn_before) << '\n';
  }
  write_text(dir / "resets.csv", ev.str());

  // Row-major tensors, one entry per ParamNode in id order.
  json params = json::array();
  for (const ParamNode* p : run.final_model.params()) {
    params.push_back({{"id", p->id},
                      {"role", to_string(p->role)},
                      {"shape", p->value.shape().dims()},
                      {"data", std::vector<double>(p->value.data().begin(), p->value.data().end())}});
  }
  write_text(dir / "params.json", params.dump() + "\n");
  write_text(dir / "summary.json", summary_to_json(summarize(run)) + "\n");
}

std::optional<RunSummary> read_run_summary(const std::filesystem::path& dir) {
  const auto path = dir / "summary.json";
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return summary_from_json(ss.str());
}

}  // namespace randomout
