// SPDX-License-Identifier: Apache-2.0
//
// Convolutional gradient norm (CGN) scoring and filter reinitialization.
//
// CGN(k) is the sum of |dL/dw| over filter k's kernel slab and bias element
// for the current minibatch. While training progress is below p_active,
// every filter with CGN strictly below tau is redrawn from its layer's Xavier
// distribution, its bias is set to 0, its gradient is cleared so the pending
// optimizer step leaves it alone, and its optimizer moments are zeroed.
#pragma once

#include <cstddef>
#include <vector>

#include "randomout/init.hpp"
#include "randomout/nn.hpp"
#include "randomout/optim.hpp"

namespace randomout {

struct RandomOutConfig {
  double tau = 1e-12;
  double p_active = 1.0;
  int check_every = 1;

  /// Throws ConfigError if tau < 0, p_active outside [0,1] or check_every < 1.
  void validate() const;
};

struct ResetEvent {
  int epoch;
  int batch;
  int layer_id;
  int filter_index;
  double cgn_before;

  friend bool operator==(const ResetEvent&, const ResetEvent&) = default;
};

double cgn(const FilterGroup& group);

std::vector<double> cgn_all(const std::vector<FilterGroup>& groups);

std::size_t count_below_threshold(const std::vector<FilterGroup>& groups, double tau);
std::size_t count_below_threshold(Model& model, double tau);

/// Redraws one filter in place and clears its grads and optimizer state.
void reinitialize_filter(const FilterGroup& group, Optimizer& optimizer, RngStream& rng);

/// Scores every filter (in layer, filter order) and resets those below tau.
/// Does nothing when progress >= p_active. Only `rng` is consumed.
std::vector<ResetEvent> scan_and_reset(Model& model, Optimizer& optimizer,
                                       const RandomOutConfig& cfg, double progress,
                                       RngStream& rng, int epoch = 0, int batch = 0);

}  // namespace randomout
