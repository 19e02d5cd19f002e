// SPDX-License-Identifier: Apache-2.0
#include "randomout.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <new>
#include <sstream>
#include <string>

#include "randomout/config.hpp"
#include "randomout/data.hpp"
#include "randomout/error.hpp"
#include "randomout/gradcheck.hpp"
#include "randomout/models.hpp"
#include "randomout/sweeps.hpp"
#include "randomout/training.hpp"

struct ro_dataset {
  randomout::Dataset ds;
};

struct ro_model {
  randomout::Model model;
};

struct ro_run {
  randomout::RunResult run;
};

namespace {

using namespace randomout;

thread_local std::string g_last_error;
thread_local std::size_t g_last_position = 0;

std::mutex g_log_mutex;
ro_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

LogSink current_logger() {
  std::lock_guard lock(g_log_mutex);
  if (g_log_fn == nullptr) return {};
  ro_log_fn fn = g_log_fn;
  void* user = g_log_user;
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

ro_status fail(ro_status status, const std::string& message, std::size_t position = 0) {
  g_last_error = message;
  g_last_position = position;
  return status;
}

template <typename F>
ro_status guarded(F&& body) {
  g_last_error.clear();
  g_last_position = 0;
  try {
    body();
    return RO_OK;
  } catch (const FormatError& e) {
    return fail(RO_ERR_FORMAT, e.what(), e.position());
  } catch (const ShapeError& e) {
    return fail(RO_ERR_SHAPE, e.what());
  } catch (const ConfigError& e) {
    return fail(RO_ERR_CONFIG, e.what());
  } catch (const IoError& e) {
    return fail(RO_ERR_IO, e.what());
  } catch (const InvalidArgument& e) {
    return fail(RO_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(RO_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(RO_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(RO_ERR_RUNTIME, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(bool cond, const char* what) {
  if (!cond) throw InvalidArgument(what);
}

RandomOutConfig parse_randomout(const char* text) {
  RandomOutConfig r;
  if (text == nullptr) return r;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("randomout settings are not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("randomout settings must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "tau") {
        r.tau = value.get<double>();
      } else if (key == "p_active") {
        r.p_active = value.get<double>();
      } else if (key == "check_every") {
        r.check_every = value.get<int>();
      } else {
        throw ConfigError("unknown field '" + key + "' in randomout settings");
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("field '" + key + "' in randomout settings has the wrong type");
    }
  }
  r.validate();
  return r;
}

std::vector<Condition> parse_conditions(const char* text) {
  std::vector<Condition> out;
  if (text == nullptr) return {Condition::base, Condition::randomout};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(condition_from_string(item));
  }
  if (out.empty()) throw InvalidArgument("no conditions given");
  return out;
}

SweepOptions sweep_options(std::size_t jobs, const char* out_dir, const char* randomout_json) {
  SweepOptions o;
  o.jobs = jobs == 0 ? 1 : jobs;
  if (out_dir != nullptr) o.out_dir = std::filesystem::path(out_dir);
  o.randomout = parse_randomout(randomout_json);
  o.log = current_logger();
  return o;
}

}  // namespace

extern "C" {

const char* ro_version(void) { return "1.0.0"; }

const char* ro_last_error(void) { return g_last_error.c_str(); }

size_t ro_last_error_position(void) { return g_last_position; }

const char* ro_status_name(ro_status status) {
  switch (status) {
    case RO_OK: return "ok";
    case RO_ERR_INVALID_ARGUMENT: return "invalid argument";
    case RO_ERR_SHAPE: return "shape mismatch";
    case RO_ERR_FORMAT: return "malformed input";
    case RO_ERR_IO: return "i/o error";
    case RO_ERR_CONFIG: return "invalid configuration";
    case RO_ERR_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

void ro_string_free(char* s) { std::free(s); }

void ro_set_log_callback(ro_log_fn fn, void* user) {
  std::lock_guard lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

ro_status ro_config_canonicalize(const char* config_json, char** canonical_out, char** hash_out) {
  return guarded([&] {
    require(config_json != nullptr, "config_json is NULL");
    const TrainConfig cfg = TrainConfig::from_json(config_json);
    if (canonical_out != nullptr) *canonical_out = dup_string(cfg.to_json());
    if (hash_out != nullptr) *hash_out = dup_string(cfg.hash());
  });
}

ro_status ro_dataset_synth(size_t n_pos, size_t n_neg, uint64_t seed, ro_dataset** out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    *out = new ro_dataset{synth_craters(n_pos, n_neg, seed)};
  });
}

ro_status ro_dataset_load_idx(const char* images_path, const char* labels_path, ro_dataset** out) {
  return guarded([&] {
    require(images_path && labels_path && out, "NULL argument");
    *out = new ro_dataset{load_idx(images_path, labels_path)};
  });
}

ro_status ro_dataset_load_cifar10(const char* path, size_t max_per_class, ro_dataset** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    *out = new ro_dataset{load_cifar10_binary(path, max_per_class)};
  });
}

ro_status ro_dataset_write_idx(const ro_dataset* ds, const char* images_path,
                               const char* labels_path) {
  return guarded([&] {
    require(ds && images_path && labels_path, "NULL argument");
    write_idx(ds->ds, images_path, labels_path);
  });
}

ro_status ro_dataset_shape(const ro_dataset* ds, size_t dims_out[4]) {
  return guarded([&] {
    require(ds && dims_out, "NULL argument");
    for (std::size_t i = 0; i < 4; ++i) dims_out[i] = ds->ds.images.shape()[i];
  });
}

ro_status ro_dataset_labels(const ro_dataset* ds, int* labels_out, size_t capacity) {
  return guarded([&] {
    require(ds && labels_out, "NULL argument");
    require(capacity >= ds->ds.size(), "labels buffer too small");
    std::copy(ds->ds.labels.begin(), ds->ds.labels.end(), labels_out);
  });
}

ro_status ro_dataset_pixels(const ro_dataset* ds, double* pixels_out, size_t capacity) {
  return guarded([&] {
    require(ds && pixels_out, "NULL argument");
    require(capacity >= ds->ds.images.size(), "pixel buffer too small");
    std::copy(ds->ds.images.data().begin(), ds->ds.images.data().end(), pixels_out);
  });
}

void ro_dataset_free(ro_dataset* ds) { delete ds; }

ro_status ro_model_create(const char* name, size_t width, int with_batchnorm, size_t channels,
                          size_t height, size_t width_px, size_t num_classes, uint64_t seed,
                          ro_model** out) {
  return guarded([&] {
    require(name && out, "NULL argument");
    ModelSpec spec;
    spec.name = model_name_from_string(name);
    spec.width = width;
    spec.with_batchnorm = with_batchnorm != 0;
    spec.num_classes = num_classes;
    spec.input_shape = Shape{channels, height, width_px};
    RngStream rng = derive_stream(seed, StreamPurpose::init, 0);
    *out = new ro_model{build_model(spec, rng)};
  });
}

ro_status ro_model_filter_count(const ro_model* m, size_t* out) {
  return guarded([&] {
    require(m && out, "NULL argument");
    *out = const_cast<Model&>(m->model).filter_groups().size();
  });
}

ro_status ro_model_param_count(const ro_model* m, size_t* out) {
  return guarded([&] {
    require(m && out, "NULL argument");
    std::size_t n = 0;
    for (const ParamNode* p : m->model.params()) n += p->value.size();
    *out = n;
  });
}

ro_status ro_model_forward(ro_model* m, const double* input, size_t batch, double* logits_out) {
  return guarded([&] {
    require(m && input && logits_out, "NULL argument");
    require(batch >= 1, "batch must be >= 1");
    const Shape shape = m->model.input_shape().with_batch(batch);
    Tensor x(shape, std::vector<double>(input, input + shape.numel()));
    const ForwardPass pass = m->model.forward(x, Mode::eval);
    std::copy(pass.logits().data().begin(), pass.logits().data().end(), logits_out);
  });
}

void ro_model_free(ro_model* m) { delete m; }

ro_status ro_run_train(const char* config_json, const char* out_dir, ro_run** out) {
  return guarded([&] {
    require(config_json && out, "NULL argument");
    const TrainConfig cfg = TrainConfig::from_json(config_json);
    RunResult run = run_training(cfg, current_logger());
    if (out_dir != nullptr) write_run(run, std::filesystem::path(out_dir) / run.hash);
    *out = new ro_run{std::move(run)};
  });
}

ro_status ro_run_hash(const ro_run* r, char** hash_out) {
  return guarded([&] {
    require(r && hash_out, "NULL argument");
    *hash_out = dup_string(r->run.hash);
  });
}

ro_status ro_run_final_test_acc(const ro_run* r, double* out) {
  return guarded([&] {
    require(r && out, "NULL argument");
    *out = r->run.final_test_acc;
  });
}

ro_status ro_run_diverged(const ro_run* r, int* out) {
  return guarded([&] {
    require(r && out, "NULL argument");
    *out = r->run.diverged ? 1 : 0;
  });
}

ro_status ro_run_reset_count(const ro_run* r, size_t* out) {
  return guarded([&] {
    require(r && out, "NULL argument");
    *out = r->run.resets.size();
  });
}

ro_status ro_run_record_count(const ro_run* r, size_t* out) {
  return guarded([&] {
    require(r && out, "NULL argument");
    *out = r->run.metrics.size();
  });
}

ro_status ro_run_metrics_csv(const ro_run* r, char** csv_out) {
  return guarded([&] {
    require(r && csv_out, "NULL argument");
    std::ostringstream os;
    write_metrics(os, r->run.metrics);
    *csv_out = dup_string(os.str());
  });
}

void ro_run_free(ro_run* r) { delete r; }

ro_status ro_sweep_seeds(const char* config_json, const uint64_t* seeds, size_t n_seeds,
                         const char* conditions, const char* randomout_json, size_t jobs,
                         const char* out_dir, char** summary_json_out) {
  return guarded([&] {
    require(config_json && seeds && summary_json_out, "NULL argument");
    const TrainConfig cfg = TrainConfig::from_json(config_json);
    const SweepOptions opts = sweep_options(jobs, out_dir, randomout_json);
    const SeedSweepResult r = seed_sweep(cfg, std::vector<std::uint64_t>(seeds, seeds + n_seeds),
                                         parse_conditions(conditions), opts);
    if (opts.out_dir) {
      std::filesystem::create_directories(*opts.out_dir);
      std::ofstream(*opts.out_dir / "seed_sweep_summary.json") << r.to_json() << '\n';
      std::ofstream(*opts.out_dir / "seed_sweep.csv") << r.to_csv();
    }
    *summary_json_out = dup_string(r.to_json());
  });
}

ro_status ro_grid_search(const char* config_json, const double* taus, size_t n_taus,
                         const double* ps, size_t n_ps, const uint64_t* seeds, size_t n_seeds,
                         size_t jobs, const char* out_dir, char** summary_json_out,
                         char** heatmap_csv_out) {
  return guarded([&] {
    require(config_json && taus && ps && seeds && summary_json_out, "NULL argument");
    const TrainConfig cfg = TrainConfig::from_json(config_json);
    SweepOptions opts = sweep_options(jobs, out_dir, nullptr);
    if (cfg.randomout) opts.randomout.check_every = cfg.randomout->check_every;
    const GridResult g = grid_search(cfg, std::vector<double>(taus, taus + n_taus),
                                     std::vector<double>(ps, ps + n_ps),
                                     std::vector<std::uint64_t>(seeds, seeds + n_seeds), opts);
    if (opts.out_dir) {
      std::filesystem::create_directories(*opts.out_dir);
      std::ofstream(*opts.out_dir / "grid_summary.json") << g.to_json() << '\n';
      std::ofstream(*opts.out_dir / "heatmap.csv") << g.to_csv();
    }
    *summary_json_out = dup_string(g.to_json());
    if (heatmap_csv_out != nullptr) *heatmap_csv_out = dup_string(g.to_csv());
  });
}

ro_status ro_width_sweep(const char* config_json, const size_t* widths, size_t n_widths,
                         const uint64_t* seeds, size_t n_seeds, const char* randomout_json,
                         size_t jobs, const char* out_dir, char** summary_json_out,
                         char** table_csv_out) {
  return guarded([&] {
    require(config_json && widths && seeds && summary_json_out, "NULL argument");
    const TrainConfig cfg = TrainConfig::from_json(config_json);
    const SweepOptions opts = sweep_options(jobs, out_dir, randomout_json);
    const WidthSweepResult w =
        width_sweep(cfg, std::vector<std::size_t>(widths, widths + n_widths),
                    std::vector<std::uint64_t>(seeds, seeds + n_seeds), opts);
    if (opts.out_dir) {
      std::filesystem::create_directories(*opts.out_dir);
      std::ofstream(*opts.out_dir / "width_sweep_summary.json") << w.to_json() << '\n';
      std::ofstream(*opts.out_dir / "width_sweep.csv") << w.to_csv();
    }
    *summary_json_out = dup_string(w.to_json());
    if (table_csv_out != nullptr) *table_csv_out = dup_string(w.to_csv());
  });
}

ro_status ro_gradcheck(char** report_json_out, int* all_passed_out) {
  return guarded([&] {
    require(report_json_out && all_passed_out, "NULL argument");
    nlohmann::json j = nlohmann::json::array();
    bool all = true;
    for (const GradcheckEntry& e : run_gradcheck()) {
      j.push_back({{"suite", e.suite},
                   {"max_relative_error", e.max_relative_error},
                   {"checked", e.checked},
                   {"skipped_kinks", e.skipped_kinks},
                   {"passed", e.passed()}});
      all = all && e.passed();
    }
    *report_json_out = dup_string(j.dump(2));
    *all_passed_out = all ? 1 : 0;
  });
}

}  // extern "C"
