// SPDX-License-Identifier: Apache-2.0
//
// Seeded random streams and Xavier initialization.
//
// Generator (fixed, part of the reproducibility contract):
//
//   mix64(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//              return z ^ (z >> 31)
//
//   key      = mix64(mix64(seed + tag * 0x9E3779B97F4A7C15) ^ (index * 0xD1B54A32D192ED03 + 1))
//   draw[i]  = mix64(key + (i + 1) * 0x9E3779B97F4A7C15)          (i = 0, 1, 2, ...)
//
// `tag` is the numeric value of StreamPurpose. Uniform reals use the top 53
// bits: u = (draw >> 11) * 2^-53 in [0, 1). Bounded integers use the high
// 64 bits of draw * n. Normals use Box-Muller on two consecutive uniforms
// (cosine branch only): sqrt(-2 ln(1 - u1)) * cos(2 pi u2).
#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "randomout/tensor.hpp"

namespace randomout {

enum class StreamPurpose : std::uint64_t {
  init = 1,
  data_order = 2,
  randomout = 3,
  data_gen = 4,
  data_split = 5,
};

std::string_view to_string(StreamPurpose purpose);

std::uint64_t mix64(std::uint64_t z) noexcept;

class RngStream {
 public:
  RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be >= 1.
  std::uint64_t index(std::uint64_t n) noexcept;
  double normal() noexcept;

  StreamPurpose purpose() const noexcept { return purpose_; }
  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  StreamPurpose purpose_;
};

RngStream derive_stream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index = 0);

/// sqrt(6 / (fan_in + fan_out)).
double xavier_bound(std::size_t fan_in, std::size_t fan_out);

/// I.i.d. uniform draws on [-b, b] with b = xavier_bound(fan_in, fan_out),
/// consumed from `rng` in row-major order.
Tensor xavier_init(const Shape& shape, std::size_t fan_in, std::size_t fan_out, RngStream& rng);

/// Fills `out` in place with Xavier draws (used to redraw one filter slab).
void xavier_fill(std::span<double> out, std::size_t fan_in, std::size_t fan_out, RngStream& rng);

}  // namespace randomout
