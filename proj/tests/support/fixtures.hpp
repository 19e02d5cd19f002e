// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "randomout/data.hpp"
#include "randomout/init.hpp"
#include "randomout/models.hpp"
#include "randomout/nn.hpp"

namespace fixture {

// (conv layer index in model, filter index) pairs killed by the fixture.
inline const std::vector<std::pair<int, std::size_t>> kDeadFilters{{0, 1}, {0, 3}, {2, 2}};

// Width-4 CraterCNN with three filters forced dead: their bias is so
// negative that no input in [0,1] can activate them, so their kernel and
// bias gradients are exactly zero. Every other conv bias starts at 0.5 so
// the remaining filters are not dead by accident of the draw.
inline randomout::Model three_dead_filters(std::uint64_t seed) {
  randomout::RngStream rng = randomout::derive_stream(seed, randomout::StreamPurpose::init, 0);
  randomout::Model m = randomout::build_cratercnn(4, rng);
  for (int layer : {0, 2}) {
    auto& conv = static_cast<randomout::Conv2d&>(m.layer(layer));
    for (double& b : conv.bias().value.data()) b = 0.5;
  }
  for (const auto& [layer, filter] : kDeadFilters) {
    auto& conv = static_cast<randomout::Conv2d&>(m.layer(layer));
    conv.bias().value[filter] = -100.0;
  }
  return m;
}

inline randomout::Dataset small_batch(std::uint64_t seed, std::size_t per_class = 8) {
  return randomout::synth_craters(per_class, per_class, seed);
}

}  // namespace fixture
