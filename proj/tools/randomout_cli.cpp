// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end over the C API. Flags resolve as: explicit flag,
// then the --config file, then the built-in default.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "randomout.h"

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CString {
  char* p = nullptr;
  ~CString() { ro_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

void check(ro_status s) {
  if (s != RO_OK) {
    throw RuntimeFailure(std::string(ro_status_name(s)) + ": " + ro_last_error());
  }
}

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string seeds = "0..10";
  std::string model = "cratercnn";
  std::string dataset = "synth";
  std::size_t n_pos = 500;
  std::size_t n_neg = 500;
  std::size_t max_per_class = 100;
  std::uint64_t data_seed = 0;
  std::size_t width = 4;
  std::size_t epochs = 100;
  std::size_t batch_size = 50;
  double lr = 0.05;
  std::string optimizer = "sgd";
  bool randomout = false;
  double tau = 1e-12;
  double p_active = 1.0;
  int check_every = 1;
  bool batchnorm = false;
  std::string out;
  std::size_t jobs = 1;
  std::string conditions = "base,randomout";
  std::vector<double> taus{1e-14, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4};
  std::vector<double> ps{0.25, 0.5, 0.75, 1.0};
  std::vector<std::size_t> widths{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
};

struct Options {
  CLI::Option* config = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* model = nullptr;
  CLI::Option* dataset = nullptr;
  CLI::Option* n_pos = nullptr;
  CLI::Option* n_neg = nullptr;
  CLI::Option* max_per_class = nullptr;
  CLI::Option* data_seed = nullptr;
  CLI::Option* width = nullptr;
  CLI::Option* epochs = nullptr;
  CLI::Option* batch_size = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* optimizer = nullptr;
  CLI::Option* randomout = nullptr;
  CLI::Option* tau = nullptr;
  CLI::Option* p_active = nullptr;
  CLI::Option* check_every = nullptr;
  CLI::Option* batchnorm = nullptr;
};

bool given(const CLI::Option* o) { return o != nullptr && o->count() > 0; }

void add_run_flags(CLI::App* sub, Flags& f, Options& o, bool condition_flags) {
  o.config = sub->add_option("--config", f.config, "Run config JSON file")->check(CLI::ExistingFile);
  o.model = sub->add_option("--model", f.model, "Model: cratercnn or mini-inception")
                ->capture_default_str();
  o.width = sub->add_option("--width", f.width, "Filters per conv layer (base width for mini-inception)")
                ->capture_default_str();
  o.dataset = sub->add_option("--dataset", f.dataset,
                              "synth, idx:IMAGES,LABELS or cifar10:PATH")
                  ->capture_default_str();
  o.n_pos = sub->add_option("--n-pos", f.n_pos, "Synthetic positives")->capture_default_str();
  o.n_neg = sub->add_option("--n-neg", f.n_neg, "Synthetic negatives")->capture_default_str();
  o.max_per_class = sub->add_option("--max-per-class", f.max_per_class, "CIFAR-10 cap per class")
                        ->capture_default_str();
  o.data_seed = sub->add_option("--data-seed", f.data_seed,
                                "Dataset generation and split seed")
                    ->capture_default_str();
  o.epochs = sub->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
  o.batch_size = sub->add_option("--batch-size", f.batch_size, "Minibatch size")->capture_default_str();
  o.optimizer = sub->add_option("--optimizer", f.optimizer,
                                "sgd or adam [default: sgd for cratercnn, adam for mini-inception]")
                    ->check(CLI::IsMember({"sgd", "adam"}));
  o.lr = sub->add_option("--lr", f.lr, "Learning rate [default: 0.05 sgd, 0.001 adam]");
  if (condition_flags) {
    o.randomout = sub->add_flag("--randomout", f.randomout, "Enable RandomOut");
    o.batchnorm = sub->add_flag("--batchnorm", f.batchnorm, "Insert BatchNorm after each conv");
  }
  o.tau = sub->add_option("--tau", f.tau, "RandomOut CGN threshold")->capture_default_str();
  o.p_active = sub->add_option("--p-active", f.p_active, "Fraction of training with resets active")
                   ->capture_default_str();
  o.check_every = sub->add_option("--check-every", f.check_every, "Scan every N batches")
                      ->capture_default_str();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_dataset_flag(const std::string& text) {
  if (text == "synth") return {{"kind", "synth"}};
  if (text.rfind("idx:", 0) == 0) {
    const std::string rest = text.substr(4);
    const auto comma = rest.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == rest.size()) {
      throw UsageError("--dataset idx: expects idx:IMAGES,LABELS");
    }
    return {{"kind", "idx"}, {"images", rest.substr(0, comma)}, {"labels", rest.substr(comma + 1)}};
  }
  if (text.rfind("cifar10:", 0) == 0 && text.size() > 8) {
    return {{"kind", "cifar10"}, {"path", text.substr(8)}};
  }
  throw UsageError("--dataset must be synth, idx:IMAGES,LABELS or cifar10:PATH, got '" + text + "'");
}

json randomout_overlay(const json& base, const Flags& f, const Options& o) {
  json r = base.is_object() ? base : json::object();
  if (given(o.tau)) r["tau"] = f.tau;
  if (given(o.p_active)) r["p_active"] = f.p_active;
  if (given(o.check_every)) r["check_every"] = f.check_every;
  return r;
}

// Config file overlaid with explicit flags. Fields nobody set are left
// out so the library fills its own defaults.
json resolve_config(const Flags& f, const Options& o) {
  if (given(o.randomout) && given(o.batchnorm)) {
    throw UsageError("--randomout conflicts with --batchnorm: the two methods cannot be combined");
  }
  json j = json::object();
  if (given(o.config)) {
    try {
      j = json::parse(read_text(f.config));
    } catch (const json::parse_error& e) {
      throw RuntimeFailure("config " + f.config + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw RuntimeFailure("config " + f.config + " must be a JSON object");
  }
  auto sub = [&j](const char* key) -> json& {
    if (!j.contains(key) || !j[key].is_object()) j[key] = json::object();
    return j[key];
  };
  if (given(o.seed)) j["seed"] = f.seed;
  if (given(o.model)) sub("model")["name"] = f.model;
  if (given(o.width)) sub("model")["width"] = f.width;
  if (given(o.dataset)) {
    json d = parse_dataset_flag(f.dataset);
    if (j.contains("dataset") && j["dataset"].is_object() && j["dataset"].contains("seed")) {
      d["seed"] = j["dataset"]["seed"];
    }
    j["dataset"] = d;
  }
  if (given(o.n_pos)) sub("dataset")["n_pos"] = f.n_pos;
  if (given(o.n_neg)) sub("dataset")["n_neg"] = f.n_neg;
  if (given(o.max_per_class)) sub("dataset")["max_per_class"] = f.max_per_class;
  if (given(o.data_seed)) sub("dataset")["seed"] = f.data_seed;
  if (given(o.epochs)) j["epochs"] = f.epochs;
  if (given(o.batch_size)) j["batch_size"] = f.batch_size;
  if (given(o.optimizer)) {
    json& opt = sub("optimizer");
    if (opt.value("kind", f.optimizer) != f.optimizer) opt.erase("lr");
    opt["kind"] = f.optimizer;
  }
  if (given(o.lr)) sub("optimizer")["lr"] = f.lr;
  if (given(o.randomout)) {
    j["randomout"] = randomout_overlay(j.value("randomout", json()), f, o);
    j["condition"] = "randomout";
    if (j.contains("model")) j["model"]["batchnorm"] = false;
  } else if (given(o.batchnorm)) {
    sub("model")["batchnorm"] = true;
    j["randomout"] = nullptr;
    j["condition"] = "batchnorm";
  } else if (given(o.tau) || given(o.p_active) || given(o.check_every)) {
    const json existing = j.value("randomout", json());
    if (o.randomout != nullptr && !existing.is_object()) {
      throw UsageError("--tau, --p-active and --check-every require --randomout");
    }
    if (existing.is_object()) j["randomout"] = randomout_overlay(existing, f, o);
  }
  return j;
}

struct Canonical {
  std::string json;
  std::string hash;
};

Canonical canonicalize(const json& j) {
  CString canon;
  CString hash;
  check(ro_config_canonicalize(j.dump().c_str(), &canon.p, &hash.p));
  return {canon.str(), hash.str()};
}

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    std::size_t used = 0;
    if (dots == std::string::npos) {
      const auto v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      return {v};
    }
    const std::string a = text.substr(0, dots);
    const std::string b = text.substr(dots + 2);
    const auto lo = std::stoull(a, &used);
    if (used != a.size()) throw std::invalid_argument("trailing");
    const auto hi = std::stoull(b, &used);
    if (used != b.size()) throw std::invalid_argument("trailing");
    if (hi <= lo) throw UsageError("--seeds range " + text + " is empty (A..B is half-open)");
    std::vector<std::uint64_t> out;
    for (auto s = lo; s < hi; ++s) out.push_back(s);
    return out;
  } catch (const std::logic_error&) {
    throw UsageError("--seeds expects A..B or N, got '" + text + "'");
  }
}

// Sweeps take the base condition; RandomOut settings travel separately.
json sweep_base(json j) {
  j["randomout"] = nullptr;
  j["condition"] = "base";
  if (j.contains("model") && j["model"].is_object()) j["model"]["batchnorm"] = false;
  return j;
}

std::string sweep_randomout_json(const json& resolved, const Flags& f, const Options& o) {
  return randomout_overlay(resolved.value("randomout", json()), f, o).dump();
}

void log_to_stderr(const char* line, void*) {
  std::fprintf(stderr, "%s\n", line);
  std::fflush(stderr);
}

std::optional<std::string> out_dir(const Flags& f) {
  if (f.out.empty()) return std::nullopt;
  return f.out;
}

int cmd_train(const Flags& f, const Options& o) {
  const Canonical c = canonicalize(resolve_config(f, o));
  std::printf("config hash: %s\n", c.hash.c_str());
  std::fflush(stdout);
  const auto out = out_dir(f);
  ro_run* run = nullptr;
  check(ro_run_train(c.json.c_str(), out ? out->c_str() : nullptr, &run));
  std::unique_ptr<ro_run, decltype(&ro_run_free)> guard(run, ro_run_free);
  double acc = 0.0;
  int diverged = 0;
  std::size_t resets = 0;
  check(ro_run_final_test_acc(run, &acc));
  check(ro_run_diverged(run, &diverged));
  check(ro_run_reset_count(run, &resets));
  std::printf("final test accuracy: %.4f\n", acc);
  std::printf("resets: %zu\n", resets);
  std::printf("diverged: %s\n", diverged ? "yes" : "no");
  if (out) std::printf("artifact: %s\n", (std::filesystem::path(*out) / c.hash).c_str());
  return 0;
}

int cmd_sweep_seeds(const Flags& f, const Options& o) {
  const json resolved = resolve_config(f, o);
  const Canonical c = canonicalize(sweep_base(resolved));
  std::printf("config hash: %s\n", c.hash.c_str());
  std::fflush(stdout);
  const auto seeds = parse_seed_range(f.seeds);
  const std::string ro = sweep_randomout_json(resolved, f, o);
  const auto out = out_dir(f);
  CString summary;
  check(ro_sweep_seeds(c.json.c_str(), seeds.data(), seeds.size(), f.conditions.c_str(), ro.c_str(),
                       f.jobs, out ? out->c_str() : nullptr, &summary.p));
  std::printf("%s\n", summary.str().c_str());
  return 0;
}

int cmd_grid(const Flags& f, const Options& o) {
  json resolved = resolve_config(f, o);
  json base = sweep_base(resolved);
  const Canonical c = canonicalize(base);
  std::printf("config hash: %s\n", c.hash.c_str());
  std::fflush(stdout);
  // check_every travels inside the config for the grid.
  json with_ro = base;
  with_ro["randomout"] = json::parse(sweep_randomout_json(resolved, f, o));
  with_ro["condition"] = "randomout";
  const auto seeds = parse_seed_range(f.seeds);
  const auto out = out_dir(f);
  CString summary;
  CString heatmap;
  check(ro_grid_search(canonicalize(with_ro).json.c_str(), f.taus.data(), f.taus.size(),
                       f.ps.data(), f.ps.size(), seeds.data(), seeds.size(), f.jobs,
                       out ? out->c_str() : nullptr, &summary.p, &heatmap.p));
  std::printf("%s", heatmap.str().c_str());
  return 0;
}

int cmd_width_sweep(const Flags& f, const Options& o) {
  const json resolved = resolve_config(f, o);
  const Canonical c = canonicalize(sweep_base(resolved));
  std::printf("config hash: %s\n", c.hash.c_str());
  std::fflush(stdout);
  const auto seeds = parse_seed_range(f.seeds);
  const std::string ro = sweep_randomout_json(resolved, f, o);
  const auto out = out_dir(f);
  CString summary;
  CString table;
  check(ro_width_sweep(c.json.c_str(), f.widths.data(), f.widths.size(), seeds.data(), seeds.size(),
                       ro.c_str(), f.jobs, out ? out->c_str() : nullptr, &summary.p, &table.p));
  std::printf("%s", table.str().c_str());
  return 0;
}

int cmd_gen_data(const Flags& f) {
  if (f.out.empty()) throw UsageError("gen-data requires --out DIR");
  ro_dataset* ds = nullptr;
  check(ro_dataset_synth(f.n_pos, f.n_neg, f.data_seed, &ds));
  std::unique_ptr<ro_dataset, decltype(&ro_dataset_free)> guard(ds, ro_dataset_free);
  std::filesystem::create_directories(f.out);
  const auto images = std::filesystem::path(f.out) / "craters-images-idx3-ubyte";
  const auto labels = std::filesystem::path(f.out) / "craters-labels-idx1-ubyte";
  check(ro_dataset_write_idx(ds, images.c_str(), labels.c_str()));
  std::printf("%s\n%s\n", images.c_str(), labels.c_str());
  return 0;
}

int cmd_gradcheck() {
  CString report;
  int all = 0;
  check(ro_gradcheck(&report.p, &all));
  for (const json& e : json::parse(report.str())) {
    std::printf("%-26s max_rel_err=%.3e checked=%zu skipped_kinks=%zu %s\n",
                e["suite"].get<std::string>().c_str(), e["max_relative_error"].get<double>(),
                e["checked"].get<std::size_t>(), e["skipped_kinks"].get<std::size_t>(),
                e["passed"].get<bool>() ? "PASS" : "FAIL");
  }
  return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RandomOut CNN training engine", "randomout"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ro_version());

  Flags f;
  Options train_opts;
  Options sweep_opts;
  Options grid_opts;
  Options width_opts;

  CLI::App* train = app.add_subcommand("train", "Train one model and write its run artifact");
  add_run_flags(train, f, train_opts, true);
  train_opts.seed = train->add_option("--seed", f.seed, "Run seed")->capture_default_str();
  train->add_option("--out", f.out, "Output directory (artifact goes to DIR/<hash>)");

  CLI::App* sweep = app.add_subcommand("sweep-seeds", "Paired base/RandomOut/BatchNorm runs over seeds");
  add_run_flags(sweep, f, sweep_opts, false);
  sweep->add_option("--seeds", f.seeds, "Seed range A..B (half-open)")->capture_default_str();
  sweep->add_option("--conditions", f.conditions, "Comma-separated subset of base,randomout,batchnorm")
      ->capture_default_str();
  sweep->add_option("--out", f.out, "Output directory");
  sweep->add_option("--jobs", f.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  CLI::App* grid = app.add_subcommand("grid", "tau x p-active gain heatmap against matched base runs");
  add_run_flags(grid, f, grid_opts, false);
  grid->add_option("--seeds", f.seeds, "Seed range A..B (half-open)")->capture_default_str();
  grid->add_option("--taus", f.taus, "Thresholds")->delimiter(',')->capture_default_str();
  grid->add_option("--ps", f.ps, "p-active values")->delimiter(',')->capture_default_str();
  grid->add_option("--out", f.out, "Output directory");
  grid->add_option("--jobs", f.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  CLI::App* width = app.add_subcommand("width-sweep", "Mean accuracy per CraterCNN width, base vs RandomOut");
  add_run_flags(width, f, width_opts, false);
  width->add_option("--seeds", f.seeds, "Seed range A..B (half-open)")->capture_default_str();
  width->add_option("--widths", f.widths, "Widths to sweep")->delimiter(',')->capture_default_str();
  width->add_option("--out", f.out, "Output directory");
  width->add_option("--jobs", f.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  CLI::App* gen = app.add_subcommand("gen-data", "Write the synthetic crater set as IDX files");
  gen->add_option("--n-pos", f.n_pos, "Positives")->capture_default_str();
  gen->add_option("--n-neg", f.n_neg, "Negatives")->capture_default_str();
  gen->add_option("--data-seed", f.data_seed, "Generation seed")->capture_default_str();
  gen->add_option("--out", f.out, "Output directory")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer and model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  ro_set_log_callback(log_to_stderr, nullptr);
  try {
    if (train->parsed()) return cmd_train(f, train_opts);
    if (sweep->parsed()) return cmd_sweep_seeds(f, sweep_opts);
    if (grid->parsed()) return cmd_grid(f, grid_opts);
    if (width->parsed()) return cmd_width_sweep(f, width_opts);
    if (gen->parsed()) return cmd_gen_data(f);
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
