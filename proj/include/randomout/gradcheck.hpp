// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of every layer kind and both models.
// Layer suites score a random linear projection of the layer output; model
// suites score the mean cross-entropy loss. Every parameter element and
// every input element is perturbed by +-epsilon. Probes that flip the sign of
// any relu output straddle a kink; they are skipped and counted.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace randomout {

inline constexpr double kGradcheckEpsilon = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;
/// Denominator floor of the relative error, so exact zeros compare cleanly.
inline constexpr double kGradcheckFloor = 1e-6;

/// |a - n| / max(|a|, |n|, kGradcheckFloor).
double relative_error(double analytic, double numeric);

struct GradcheckEntry {
  std::string suite;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;

  /// A suite passes when every checked probe is within tolerance and at most
  /// 1% of probes were skipped.
  bool passed() const {
    return checked > 0 && max_relative_error < kGradcheckTolerance &&
           skipped_kinks * 100 <= checked + skipped_kinks;
  }
};

std::vector<GradcheckEntry> run_gradcheck(std::uint64_t seed = 0);

}  // namespace randomout
