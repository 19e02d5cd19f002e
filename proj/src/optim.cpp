// SPDX-License-Identifier: Apache-2.0
#include "randomout/optim.hpp"

#include <cmath>

#include "randomout/error.hpp"

namespace randomout {

bool grads_finite(std::span<ParamNode* const> params) {
  for (const ParamNode* p : params) {
    if (!p->grad.all_finite()) return false;
  }
  return true;
}

Sgd::Sgd(double lr) : lr_(lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("sgd learning rate must be positive");
}

bool Sgd::step(std::span<ParamNode* const> params) {
  if (!grads_finite(params)) return false;
  for (ParamNode* p : params) {
    double* w = p->value.raw();
    const double* g = p->grad.raw();
    for (std::size_t i = 0; i < p->value.size(); ++i) w[i] -= lr_ * g[i];
  }
  return true;
}

Adam::Adam(AdamHyper hyper) : hyper_(hyper) {
  if (!(hyper.lr > 0.0)) throw InvalidArgument("adam learning rate must be positive");
  if (hyper.beta1 < 0.0 || hyper.beta1 >= 1.0 || hyper.beta2 < 0.0 || hyper.beta2 >= 1.0) {
    throw InvalidArgument("adam betas must lie in [0, 1)");
  }
  if (!(hyper.epsilon > 0.0)) throw InvalidArgument("adam epsilon must be positive");
}

void Adam::init_state(std::span<ParamNode* const> params) {
  for (const ParamNode* p : params) {
    state_.try_emplace(p->id, Moments{Tensor(p->value.shape()), Tensor(p->value.shape()), 0});
  }
}

const Adam::Moments* Adam::state(int param_id) const {
  auto it = state_.find(param_id);
  return it == state_.end() ? nullptr : &it->second;
}

bool Adam::step(std::span<ParamNode* const> params) {
  if (!grads_finite(params)) return false;
  init_state(params);
  const double b1 = hyper_.beta1;
  const double b2 = hyper_.beta2;
  for (ParamNode* p : params) {
    Moments& s = state_.at(p->id);
    ++s.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    double* w = p->value.raw();
    const double* g = p->grad.raw();
    double* m = s.m.raw();
    double* v = s.v.raw();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= hyper_.lr * m_hat / (std::sqrt(v_hat) + hyper_.epsilon);
    }
  }
  return true;
}

void Adam::reset_state_slice(const ParamNode& param, Slice slice) {
  auto it = state_.find(param.id);
  if (it == state_.end()) return;
  if (slice.offset + slice.length > param.value.size()) {
    throw InvalidArgument("state slice exceeds parameter " + std::to_string(param.id));
  }
  for (std::size_t i = slice.offset; i < slice.offset + slice.length; ++i) {
    it->second.m[i] = 0.0;
    it->second.v[i] = 0.0;
  }
}

}  // namespace randomout
