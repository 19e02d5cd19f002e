// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>

#include "randomout/init.hpp"
#include "randomout/tensor.hpp"

using namespace randomout;

namespace {

// The documented generator, written out independently.
std::uint64_t ref_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t ref_draw(std::uint64_t seed, std::uint64_t tag, std::uint64_t index, std::uint64_t i) {
  const std::uint64_t golden = 0x9E3779B97F4A7C15ULL;
  const std::uint64_t key = ref_mix(ref_mix(seed + tag * golden) ^ (index * 0xD1B54A32D192ED03ULL + 1));
  return ref_mix(key + (i + 1) * golden);
}

}  // namespace

TEST_CASE("mix64 known value") {
  // SplitMix64 finalizer of 0 is 0; of 1 it is a fixed constant.
  CHECK(mix64(0) == 0);
  CHECK(mix64(1) == ref_mix(1));
  CHECK(mix64(0x9E3779B97F4A7C15ULL) == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("stream draws follow the documented construction") {
  for (std::uint64_t seed : {0ULL, 7ULL, 123456789ULL}) {
    for (auto purpose : {StreamPurpose::init, StreamPurpose::data_order, StreamPurpose::randomout}) {
      RngStream s(seed, purpose, 3);
      for (std::uint64_t i = 0; i < 5; ++i) {
        CHECK(s.next_u64() == ref_draw(seed, static_cast<std::uint64_t>(purpose), 3, i));
      }
      CHECK(s.draws() == 5);
    }
  }
}

TEST_CASE("streams with different purposes are distinct") {
  std::set<std::uint64_t> firsts;
  for (auto p : {StreamPurpose::init, StreamPurpose::data_order, StreamPurpose::randomout,
                 StreamPurpose::data_gen, StreamPurpose::data_split}) {
    firsts.insert(derive_stream(5, p).next_u64());
  }
  CHECK(firsts.size() == 5);
}

TEST_CASE("uniform uses the top 53 bits") {
  RngStream a(11, StreamPurpose::init, 0);
  RngStream b(11, StreamPurpose::init, 0);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u == static_cast<double>(b.next_u64() >> 11) * 0x1.0p-53);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("bounded index stays in range and covers it") {
  RngStream s(3, StreamPurpose::data_order, 0);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = s.index(7);
    REQUIRE(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("normal draws have unit moments") {
  RngStream s(9, StreamPurpose::data_gen, 1);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("xavier bound and range") {
  CHECK(xavier_bound(16, 32) == doctest::Approx(std::sqrt(6.0 / 48.0)));
  RngStream rng(0, StreamPurpose::init, 0);
  const Tensor w = xavier_init(Shape{4, 4, 4, 4}, 64, 64, rng);
  const double b = xavier_bound(64, 64);
  for (double x : w.data()) {
    CHECK(x >= -b);
    CHECK(x <= b);
  }
  CHECK(rng.draws() == 256);
}

TEST_CASE("xavier sample moments within CLT bounds") {
  // Uniform(-b, b): mean 0, variance b^2 / 3. With n draws the sample mean
  // has sd b / sqrt(3 n); allow 5 sd. The sample variance of a uniform has
  // sd b^2 * sqrt(4 / (45 n)); allow 5 sd as well.
  const std::size_t fan_in = 27, fan_out = 48;
  const double b = std::sqrt(6.0 / (fan_in + fan_out));
  RngStream rng(2024, StreamPurpose::init, 0);
  const std::size_t n = 100000;
  const Tensor w = xavier_init(Shape{n}, fan_in, fan_out, rng);
  double sum = 0.0, sq = 0.0;
  for (double x : w.data()) {
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 5.0 * b / std::sqrt(3.0 * n));
  CHECK(std::abs(var - b * b / 3.0) < 5.0 * b * b * std::sqrt(4.0 / (45.0 * n)));
}

TEST_CASE("xavier_fill consumes the stream like xavier_init") {
  RngStream a(1, StreamPurpose::randomout, 0);
  RngStream b(1, StreamPurpose::randomout, 0);
  const Tensor t = xavier_init(Shape{10}, 5, 6, a);
  std::vector<double> v(10);
  xavier_fill(v, 5, 6, b);
  for (std::size_t i = 0; i < 10; ++i) CHECK(v[i] == t[i]);
}
