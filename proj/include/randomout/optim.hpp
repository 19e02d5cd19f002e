// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>

#include "randomout/nn.hpp"

namespace randomout {

/// Contiguous element range [offset, offset + length) of one ParamNode.
struct Slice {
  std::size_t offset;
  std::size_t length;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;

  /// Applies one update to every param. Returns false, leaving all values
  /// untouched, if any gradient element is non-finite.
  [[nodiscard]] virtual bool step(std::span<ParamNode* const> params) = 0;

  /// Forgets any per-element state on `slice` of `param`.
  virtual void reset_state_slice(const ParamNode& param, Slice slice) = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr);

  [[nodiscard]] bool step(std::span<ParamNode* const> params) override;
  void reset_state_slice(const ParamNode&, Slice) override {}

  double lr() const { return lr_; }

 private:
  double lr_;
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. State is created lazily on the first step for
/// each ParamNode id. The step count t is per ParamNode.
class Adam final : public Optimizer {
 public:
  struct Moments {
    Tensor m;
    Tensor v;
    std::int64_t t = 0;
  };

  explicit Adam(AdamHyper hyper);

  [[nodiscard]] bool step(std::span<ParamNode* const> params) override;
  void reset_state_slice(const ParamNode& param, Slice slice) override;

  /// Creates zeroed state for params that have none yet.
  void init_state(std::span<ParamNode* const> params);
  const Moments* state(int param_id) const;
  const AdamHyper& hyper() const { return hyper_; }

 private:
  AdamHyper hyper_;
  std::map<int, Moments> state_;
};

bool grads_finite(std::span<ParamNode* const> params);

}  // namespace randomout
