// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "randomout/error.hpp"
#include "randomout/optim.hpp"
#include "randomout/regularizer.hpp"
#include "support/fixtures.hpp"

using namespace randomout;

namespace {

struct Prepared {
  Model model;
  Adam adam{AdamHyper{}};
};

// Fixture model after two Adam steps (so optimizer state is non-trivial)
// and a fresh backward pass, ready to be scanned.
Prepared prepare(std::uint64_t seed) {
  Prepared p{fixture::three_dead_filters(seed)};
  const Dataset ds = fixture::small_batch(seed + 100);
  for (int step = 0; step < 3; ++step) {
    p.model.zero_grads();
    p.model.backward(p.model.forward(ds.images, Mode::train), ds.labels);
    if (step < 2) REQUIRE(p.adam.step(p.model.params()));
  }
  return p;
}

bool is_dead(int layer, std::size_t filter) {
  for (const auto& [l, f] : fixture::kDeadFilters) {
    if (l == layer && f == filter) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("cgn is the L1 norm of the filter's kernel and bias grads") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Prepared p = prepare(seed);
    for (const FilterGroup& g : p.model.filter_groups()) {
      double expect = 0.0;
      for (std::size_t i = 0; i < g.kernel_length; ++i) expect += std::abs(g.kernel_param->grad[g.kernel_offset + i]);
      expect += std::abs(g.bias_param->grad[g.bias_index]);
      CHECK(cgn(g) == expect);
      INFO("seed ", seed, " layer ", g.layer_id, " filter ", g.filter_index);
      if (is_dead(g.layer_id, g.filter_index)) {
        CHECK(cgn(g) == 0.0);
      } else {
        CHECK(cgn(g) > 1e-8);
      }
    }
  }
}

TEST_CASE("count below threshold is strict") {
  Prepared p = prepare(2);
  CHECK(count_below_threshold(p.model, 1e-8) == 3);
  CHECK(count_below_threshold(p.model, 0.0) == 0);  // CGN 0 is not < 0
  CHECK(count_below_threshold(p.model, 1e9) == 8);
}

TEST_CASE("scan resets exactly the dead filters and nothing else") {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    Prepared p = prepare(seed);
    const Model before = p.model;
    Adam adam_before = p.adam;
    RngStream rng = derive_stream(seed, StreamPurpose::randomout, 0);
    const auto events = scan_and_reset(p.model, p.adam, RandomOutConfig{1e-8, 1.0, 1}, 0.0, rng, 1, 7);
    REQUIRE(events.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(events[i].layer_id == fixture::kDeadFilters[i].first);
      CHECK(static_cast<std::size_t>(events[i].filter_index) == fixture::kDeadFilters[i].second);
      CHECK(events[i].cgn_before == 0.0);
      CHECK(events[i].epoch == 1);
      CHECK(events[i].batch == 7);
    }
    // Three redraws of 16 and 64 kernel elements respectively.
    CHECK(rng.draws() == 16 + 16 + 64);

    auto groups_after = p.model.filter_groups();
    auto groups_before = const_cast<Model&>(before).filter_groups();
    const auto params_after = p.model.params();
    const auto params_before = before.params();
    REQUIRE(params_after.size() == params_before.size());
    // Mark every element owned by a reset group.
    std::vector<std::vector<bool>> touched(params_after.size());
    for (std::size_t i = 0; i < params_after.size(); ++i) touched[i].assign(params_after[i]->value.size(), false);
    for (std::size_t gi = 0; gi < groups_after.size(); ++gi) {
      const FilterGroup& g = groups_after[gi];
      if (!is_dead(g.layer_id, g.filter_index)) continue;
      const double bound = xavier_bound(g.fan_in, g.fan_out);
      bool changed = false;
      for (std::size_t i = 0; i < g.kernel_length; ++i) {
        const double v = g.kernel_param->value[g.kernel_offset + i];
        CHECK(std::abs(v) <= bound);
        CHECK(g.kernel_param->grad[g.kernel_offset + i] == 0.0);
        changed = changed || v != groups_before[gi].kernel_param->value[g.kernel_offset + i];
        touched[static_cast<std::size_t>(g.kernel_param->id)][g.kernel_offset + i] = true;
      }
      CHECK(changed);
      CHECK(g.bias_param->value[g.bias_index] == 0.0);
      CHECK(g.bias_param->grad[g.bias_index] == 0.0);
      touched[static_cast<std::size_t>(g.bias_param->id)][g.bias_index] = true;
      const auto* km = p.adam.state(g.kernel_param->id);
      for (std::size_t i = 0; i < g.kernel_length; ++i) {
        CHECK(km->m[g.kernel_offset + i] == 0.0);
        CHECK(km->v[g.kernel_offset + i] == 0.0);
      }
    }
    for (std::size_t pi = 0; pi < params_after.size(); ++pi) {
      REQUIRE(params_after[pi]->id == static_cast<int>(pi));
      const auto* sa = p.adam.state(params_after[pi]->id);
      const auto* sb = adam_before.state(params_after[pi]->id);
      REQUIRE(sa != nullptr);
      CHECK(sa->t == sb->t);
      for (std::size_t i = 0; i < params_after[pi]->value.size(); ++i) {
        if (touched[pi][i]) continue;
        CHECK(params_after[pi]->value[i] == params_before[pi]->value[i]);
        CHECK(params_after[pi]->grad[i] == params_before[pi]->grad[i]);
        CHECK(sa->m[i] == sb->m[i]);
        CHECK(sa->v[i] == sb->v[i]);
      }
    }
  }
}

TEST_CASE("scan is inert past p_active and at tau 0") {
  Prepared p = prepare(6);
  const Model before = p.model;
  RngStream rng = derive_stream(6, StreamPurpose::randomout, 0);
  CHECK(scan_and_reset(p.model, p.adam, RandomOutConfig{1e-8, 0.5, 1}, 0.5, rng).empty());
  CHECK(scan_and_reset(p.model, p.adam, RandomOutConfig{1e-8, 0.0, 1}, 0.0, rng).empty());
  CHECK(scan_and_reset(p.model, p.adam, RandomOutConfig{0.0, 1.0, 1}, 0.0, rng).empty());
  CHECK(rng.draws() == 0);
  const auto a = p.model.params();
  const auto b = before.params();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
}

TEST_CASE("a freshly reset filter receives gradient again") {
  Prepared p = prepare(7);
  RngStream rng = derive_stream(7, StreamPurpose::randomout, 0);
  REQUIRE(scan_and_reset(p.model, p.adam, RandomOutConfig{1e-8, 1.0, 1}, 0.0, rng).size() == 3);
  const Dataset ds = fixture::small_batch(107);
  p.model.zero_grads();
  p.model.backward(p.model.forward(ds.images, Mode::train), ds.labels);
  CHECK(count_below_threshold(p.model, 1e-8) < 3);
}

TEST_CASE("randomout config validation") {
  CHECK_THROWS_AS((RandomOutConfig{-1.0, 1.0, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((RandomOutConfig{1e-8, 1.5, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((RandomOutConfig{1e-8, 1.0, 0}.validate()), ConfigError);
  CHECK_NOTHROW((RandomOutConfig{0.0, 0.0, 1}.validate()));
  const RandomOutConfig d;
  CHECK(d.tau == 1e-12);
  CHECK(d.p_active == 1.0);
}
