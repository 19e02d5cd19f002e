// SPDX-License-Identifier: Apache-2.0
//
// Concrete architectures.
//
// CraterCNN: conv(w, 4x4, s1) -> ReLU -> conv(w, 4x4, s1) -> ReLU -> flatten
//            -> dense(classes). For 1x15x15 inputs: [w,12,12] -> [w,9,9] -> 2.
//
// MiniInception: a small stand-in with inception-style branching, NOT the
// 28x28 Inception-V3. Stem conv(w, 3x3) then two blocks, each
//   branch A: avgpool(3x3, s1) -> conv(w, 1x1) -> ReLU
//   branch B: conv(w, 1x1) -> ReLU -> conv(w, 3x3) -> ReLU
//   concat(A, B) -> 2w channels, spatial extent shrinks by 2
// followed by global average pooling and a dense head. Filter total is 7w.
//
// With batchnorm enabled a BatchNorm layer follows every convolution
// (before its ReLU). All conv and dense weights use Xavier draws from the
// supplied stream in layer order; biases start at 0.
#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "randomout/init.hpp"
#include "randomout/nn.hpp"

namespace randomout {

enum class ModelName { cratercnn, mini_inception };
std::string_view to_string(ModelName name);
ModelName model_name_from_string(std::string_view s);

struct ModelSpec {
  ModelName name = ModelName::cratercnn;
  std::size_t width = 4;
  bool with_batchnorm = false;
  std::size_t num_classes = 2;
  Shape input_shape{1, 15, 15};

  /// Number of conv filters the architecture declares.
  std::size_t declared_filter_count() const;
};

Model build_cratercnn(std::size_t width, RngStream& rng, bool with_batchnorm = false,
                      Shape input_shape = Shape{1, 15, 15}, std::size_t num_classes = 2);

Model build_mini_inception(std::size_t base_width, bool with_batchnorm, RngStream& rng,
                           Shape input_shape = Shape{3, 32, 32}, std::size_t num_classes = 10);

Model build_model(const ModelSpec& spec, RngStream& rng);

}  // namespace randomout
