// SPDX-License-Identifier: Apache-2.0
#include "randomout/regularizer.hpp"

#include <cmath>

#include "randomout/error.hpp"

namespace randomout {

void RandomOutConfig::validate() const {
  if (!(tau >= 0.0)) throw ConfigError("randomout tau must be >= 0");
  if (!(p_active >= 0.0 && p_active <= 1.0)) throw ConfigError("randomout p_active must lie in [0,1]");
  if (check_every < 1) throw ConfigError("randomout check_every must be >= 1");
}

double cgn(const FilterGroup& group) {
  const double* g = group.kernel_param->grad.raw() + group.kernel_offset;
  double sum = 0.0;
  for (std::size_t i = 0; i < group.kernel_length; ++i) sum += std::abs(g[i]);
  return sum + std::abs(group.bias_param->grad[group.bias_index]);
}

std::vector<double> cgn_all(const std::vector<FilterGroup>& groups) {
  std::vector<double> out;
  out.reserve(groups.size());
  for (const FilterGroup& g : groups) out.push_back(cgn(g));
  return out;
}

std::size_t count_below_threshold(const std::vector<FilterGroup>& groups, double tau) {
  std::size_t n = 0;
  for (const FilterGroup& g : groups) {
    if (cgn(g) < tau) ++n;
  }
  return n;
}

std::size_t count_below_threshold(Model& model, double tau) {
  return count_below_threshold(model.filter_groups(), tau);
}

void reinitialize_filter(const FilterGroup& group, Optimizer& optimizer, RngStream& rng) {
  ParamNode& kernel = *group.kernel_param;
  ParamNode& bias = *group.bias_param;
  xavier_fill(kernel.value.data().subspan(group.kernel_offset, group.kernel_length), group.fan_in,
              group.fan_out, rng);
  for (std::size_t i = 0; i < group.kernel_length; ++i) kernel.grad[group.kernel_offset + i] = 0.0;
  bias.value[group.bias_index] = 0.0;
  bias.grad[group.bias_index] = 0.0;
  optimizer.reset_state_slice(kernel, {group.kernel_offset, group.kernel_length});
  optimizer.reset_state_slice(bias, {group.bias_index, 1});
}

std::vector<ResetEvent> scan_and_reset(Model& model, Optimizer& optimizer,
                                       const RandomOutConfig& cfg, double progress,
                                       RngStream& rng, int epoch, int batch) {
  std::vector<ResetEvent> events;
  if (progress >= cfg.p_active) return events;
  for (const FilterGroup& g : model.filter_groups()) {
    const double score = cgn(g);
    if (score < cfg.tau) {
      reinitialize_filter(g, optimizer, rng);
      events.push_back({epoch, batch, g.layer_id, static_cast<int>(g.filter_index), score});
    }
  }
  return events;
}

}  // namespace randomout
