// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration. A TrainConfig round-trips through JSON; its
// canonical form (every field present, keys sorted, compact) names the run
// via a 64-bit FNV-1a hash printed as 16 hex digits.
//
// JSON layout (unknown keys are rejected at every level):
//   {
//     "condition": "base" | "randomout" | "batchnorm",
//     "model": {"name": "cratercnn" | "mini_inception", "width": 4, "batchnorm": false},
//     "dataset": {"kind": "synth", "n_pos": 500, "n_neg": 500, "seed": 0}
//              | {"kind": "idx", "images": PATH, "labels": PATH, "seed": 0}
//              | {"kind": "cifar10", "path": PATH, "max_per_class": 100, "seed": 0},
//     "seed": 0, "epochs": 100, "batch_size": 50,
//     "optimizer": {"kind": "sgd" | "adam", "lr": 0.05},
//     "randomout": null | {"tau": 1e-12, "p_active": 1.0, "check_every": 1},
//     "telemetry_tau": 1e-12,
//     "dead_init": null | {"conv_layer": 0, "bias": -10.0}
//   }
// The dataset seed fixes generation and the train/test split; the run seed
// drives weight init, batch order and filter redraws.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "randomout/models.hpp"
#include "randomout/regularizer.hpp"

namespace randomout {

enum class Condition { base, randomout, batchnorm };
std::string_view to_string(Condition c);
Condition condition_from_string(std::string_view s);

struct DatasetSpec {
  enum class Kind { synth, idx, cifar10 };
  Kind kind = Kind::synth;
  std::size_t n_pos = 500;
  std::size_t n_neg = 500;
  std::string images;
  std::string labels;
  std::string path;
  std::size_t max_per_class = 100;
  std::uint64_t seed = 0;

  std::string canonical() const;
};

struct OptimizerSpec {
  enum class Kind { sgd, adam };
  Kind kind = Kind::sgd;
  double lr = 0.05;
};

/// Adversarial initialization: every bias of the `conv_layer`-th conv layer
/// (0-based, in layer order) is set to `bias` after Xavier init.
struct DeadInit {
  std::size_t conv_layer = 0;
  double bias = -10.0;
};

struct ModelChoice {
  ModelName name = ModelName::cratercnn;
  std::size_t width = 4;
  bool batchnorm = false;
};

struct TrainConfig {
  Condition condition = Condition::base;
  ModelChoice model;
  DatasetSpec dataset;
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
  std::size_t batch_size = 50;
  OptimizerSpec optimizer;
  std::optional<RandomOutConfig> randomout;
  double telemetry_tau = 1e-12;  // below_thresh column; same for every condition
  std::optional<DeadInit> dead_init;

  /// Throws ConfigError on inconsistent settings (RandomOut with BatchNorm,
  /// condition label not matching the settings, ...).
  void validate() const;

  std::string to_json() const;  // canonical
  std::string hash() const;
  /// Parses and validates. Missing keys take defaults; unknown keys throw.
  static TrainConfig from_json(std::string_view text);
};

/// Default learning rate for a model: SGD 0.05 for CraterCNN, Adam 1e-3 for MiniInception.
OptimizerSpec default_optimizer(ModelName name);

std::string fnv1a_hex(std::string_view bytes);

/// The config for `condition` derived from `base`, sharing seed, data and
/// model width. RandomOut settings come from `randomout`.
TrainConfig with_condition(TrainConfig base, Condition condition, const RandomOutConfig& randomout);

}  // namespace randomout
