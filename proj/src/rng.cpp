// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "randomout/error.hpp"
#include "randomout/init.hpp"

namespace randomout {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kIndexMul = 0xD1B54A32D192ED03ULL;
}  // namespace

std::string_view to_string(StreamPurpose purpose) {
  switch (purpose) {
    case StreamPurpose::init: return "init";
    case StreamPurpose::data_order: return "data_order";
    case StreamPurpose::randomout: return "randomout";
    case StreamPurpose::data_gen: return "data_gen";
    case StreamPurpose::data_split: return "data_split";
  }
  return "unknown";
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index) noexcept
    : key_(mix64(mix64(seed + static_cast<std::uint64_t>(purpose) * kGolden) ^
                 (index * kIndexMul + 1))),
      purpose_(purpose) {}

std::uint64_t RngStream::next_u64() noexcept {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::index(std::uint64_t n) noexcept {
  const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

double RngStream::normal() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream derive_stream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index) {
  return RngStream(seed, purpose, index);
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  if (fan_in == 0 || fan_out == 0) throw InvalidArgument("xavier fans must be >= 1");
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void xavier_fill(std::span<double> out, std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  const double b = xavier_bound(fan_in, fan_out);
  for (double& x : out) x = rng.uniform(-b, b);
}

Tensor xavier_init(const Shape& shape, std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  Tensor t(shape);
  xavier_fill(t.data(), fan_in, fan_out, rng);
  return t;
}

}  // namespace randomout
