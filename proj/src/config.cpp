// SPDX-License-Identifier: Apache-2.0
#include "randomout/config.hpp"

#include <cstdio>
#include <initializer_list>
#include <json.hpp>

#include "randomout/error.hpp"

namespace randomout {

using nlohmann::json;

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::base: return "base";
    case Condition::randomout: return "randomout";
    case Condition::batchnorm: return "batchnorm";
  }
  return "unknown";
}

Condition condition_from_string(std::string_view s) {
  if (s == "base") return Condition::base;
  if (s == "randomout") return Condition::randomout;
  if (s == "batchnorm") return Condition::batchnorm;
  throw ConfigError("unknown condition '" + std::string(s) + "'");
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

OptimizerSpec default_optimizer(ModelName name) {
  if (name == ModelName::mini_inception) return {OptimizerSpec::Kind::adam, 1e-3};
  return {OptimizerSpec::Kind::sgd, 0.05};
}

namespace {

std::string_view kind_name(DatasetSpec::Kind k) {
  switch (k) {
    case DatasetSpec::Kind::synth: return "synth";
    case DatasetSpec::Kind::idx: return "idx";
    case DatasetSpec::Kind::cifar10: return "cifar10";
  }
  return "unknown";
}

void reject_unknown(const json& obj, std::string_view where,
                    std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown field '" + key + "' in " + std::string(where));
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + std::string(key) + "' in " + std::string(where) +
                      " has the wrong type");
  }
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
    throw ConfigError("field '" + std::string(key) + "' in " + std::string(where) +
                      " must be a non-negative integer");
  }
  return it->get<std::size_t>();
}

json dataset_json(const DatasetSpec& d) {
  json j{{"kind", kind_name(d.kind)}, {"seed", d.seed}};
  switch (d.kind) {
    case DatasetSpec::Kind::synth:
      j["n_pos"] = d.n_pos;
      j["n_neg"] = d.n_neg;
      break;
    case DatasetSpec::Kind::idx:
      j["images"] = d.images;
      j["labels"] = d.labels;
      break;
    case DatasetSpec::Kind::cifar10:
      j["path"] = d.path;
      j["max_per_class"] = d.max_per_class;
      break;
  }
  return j;
}

DatasetSpec dataset_from_json(const json& j) {
  DatasetSpec d;
  const std::string kind = get_or<std::string>(j, "kind", "synth", "dataset");
  d.seed = get_or<std::uint64_t>(j, "seed", 0, "dataset");
  if (kind == "synth") {
    reject_unknown(j, "dataset", {"kind", "seed", "n_pos", "n_neg"});
    d.kind = DatasetSpec::Kind::synth;
    d.n_pos = get_count(j, "n_pos", d.n_pos, "dataset");
    d.n_neg = get_count(j, "n_neg", d.n_neg, "dataset");
  } else if (kind == "idx") {
    reject_unknown(j, "dataset", {"kind", "seed", "images", "labels"});
    d.kind = DatasetSpec::Kind::idx;
    d.images = get_or<std::string>(j, "images", "", "dataset");
    d.labels = get_or<std::string>(j, "labels", "", "dataset");
  } else if (kind == "cifar10") {
    reject_unknown(j, "dataset", {"kind", "seed", "path", "max_per_class"});
    d.kind = DatasetSpec::Kind::cifar10;
    d.path = get_or<std::string>(j, "path", "", "dataset");
    d.max_per_class = get_count(j, "max_per_class", d.max_per_class, "dataset");
  } else {
    throw ConfigError("unknown dataset kind '" + kind + "'");
  }
  return d;
}

json config_json(const TrainConfig& c) {
  json j;
  j["condition"] = to_string(c.condition);
  j["model"] = {{"name", to_string(c.model.name)},
                {"width", c.model.width},
                {"batchnorm", c.model.batchnorm}};
  j["dataset"] = dataset_json(c.dataset);
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["optimizer"] = {{"kind", c.optimizer.kind == OptimizerSpec::Kind::sgd ? "sgd" : "adam"},
                    {"lr", c.optimizer.lr}};
  if (c.randomout) {
    j["randomout"] = {{"tau", c.randomout->tau},
                      {"p_active", c.randomout->p_active},
                      {"check_every", c.randomout->check_every}};
  } else {
    j["randomout"] = nullptr;
  }
  j["telemetry_tau"] = c.telemetry_tau;
  if (c.dead_init) {
    j["dead_init"] = {{"conv_layer", c.dead_init->conv_layer}, {"bias", c.dead_init->bias}};
  } else {
    j["dead_init"] = nullptr;
  }
  return j;
}

}  // namespace

std::string DatasetSpec::canonical() const { return dataset_json(*this).dump(); }

void TrainConfig::validate() const {
  if (model.width < 1) throw ConfigError("model width must be >= 1");
  if (model.name == ModelName::mini_inception && model.width < 2) {
    throw ConfigError("mini_inception width must be >= 2");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(optimizer.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(telemetry_tau >= 0.0)) throw ConfigError("telemetry_tau must be >= 0");
  if (randomout) randomout->validate();
  if (randomout && model.batchnorm) {
    throw ConfigError("randomout and batchnorm are mutually exclusive");
  }
  switch (condition) {
    case Condition::base:
      if (randomout || model.batchnorm) {
        throw ConfigError("condition 'base' requires randomout = null and batchnorm = false");
      }
      break;
    case Condition::randomout:
      if (!randomout) throw ConfigError("condition 'randomout' requires randomout settings");
      break;
    case Condition::batchnorm:
      if (!model.batchnorm) throw ConfigError("condition 'batchnorm' requires model.batchnorm = true");
      break;
  }
  if (dataset.kind == DatasetSpec::Kind::synth && (dataset.n_pos < 1 || dataset.n_neg < 1)) {
    throw ConfigError("synthetic dataset needs n_pos, n_neg >= 1");
  }
  if (dataset.kind == DatasetSpec::Kind::idx && (dataset.images.empty() || dataset.labels.empty())) {
    throw ConfigError("idx dataset needs images and labels paths");
  }
  if (dataset.kind == DatasetSpec::Kind::cifar10 && dataset.path.empty()) {
    throw ConfigError("cifar10 dataset needs a path");
  }
}

std::string TrainConfig::to_json() const { return config_json(*this).dump(); }

std::string TrainConfig::hash() const { return fnv1a_hex(to_json()); }

TrainConfig TrainConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, "config",
                 {"condition", "model", "dataset", "seed", "epochs", "batch_size", "optimizer",
                  "randomout", "telemetry_tau", "dead_init"});
  TrainConfig c;
  if (auto it = j.find("model"); it != j.end()) {
    reject_unknown(*it, "model", {"name", "width", "batchnorm"});
    c.model.name = model_name_from_string(get_or<std::string>(*it, "name", "cratercnn", "model"));
    c.model.width = get_count(*it, "width", c.model.width, "model");
    c.model.batchnorm = get_or<bool>(*it, "batchnorm", false, "model");
  }
  if (auto it = j.find("dataset"); it != j.end()) c.dataset = dataset_from_json(*it);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, "config");
  c.epochs = get_count(j, "epochs", c.epochs, "config");
  c.batch_size = get_count(j, "batch_size", c.batch_size, "config");
  c.optimizer = default_optimizer(c.model.name);
  if (auto it = j.find("optimizer"); it != j.end()) {
    reject_unknown(*it, "optimizer", {"kind", "lr"});
    const std::string kind = get_or<std::string>(*it, "kind",
                                                 c.optimizer.kind == OptimizerSpec::Kind::sgd ? "sgd" : "adam",
                                                 "optimizer");
    if (kind == "sgd") {
      c.optimizer = {OptimizerSpec::Kind::sgd, 0.05};
    } else if (kind == "adam") {
      c.optimizer = {OptimizerSpec::Kind::adam, 1e-3};
    } else {
      throw ConfigError("unknown optimizer '" + kind + "'");
    }
    c.optimizer.lr = get_or<double>(*it, "lr", c.optimizer.lr, "optimizer");
  }
  if (auto it = j.find("randomout"); it != j.end() && !it->is_null()) {
    reject_unknown(*it, "randomout", {"tau", "p_active", "check_every"});
    RandomOutConfig r;
    r.tau = get_or<double>(*it, "tau", r.tau, "randomout");
    r.p_active = get_or<double>(*it, "p_active", r.p_active, "randomout");
    r.check_every = get_or<int>(*it, "check_every", r.check_every, "randomout");
    c.randomout = r;
  }
  c.telemetry_tau = get_or<double>(j, "telemetry_tau", c.telemetry_tau, "config");
  if (auto it = j.find("dead_init"); it != j.end() && !it->is_null()) {
    reject_unknown(*it, "dead_init", {"conv_layer", "bias"});
    DeadInit d;
    d.conv_layer = get_count(*it, "conv_layer", d.conv_layer, "dead_init");
    d.bias = get_or<double>(*it, "bias", d.bias, "dead_init");
    c.dead_init = d;
  }
  if (auto it = j.find("condition"); it != j.end()) {
    c.condition = condition_from_string(get_or<std::string>(j, "condition", "base", "config"));
  } else {
    c.condition = c.randomout        ? Condition::randomout
                  : c.model.batchnorm ? Condition::batchnorm
                                      : Condition::base;
  }
  c.validate();
  return c;
}

TrainConfig with_condition(TrainConfig base, Condition condition, const RandomOutConfig& randomout) {
  base.condition = condition;
  base.randomout.reset();
  base.model.batchnorm = false;
  if (condition == Condition::randomout) base.randomout = randomout;
  if (condition == Condition::batchnorm) base.model.batchnorm = true;
  return base;
}

}  // namespace randomout
