// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations used by the tests. Nothing here calls
// into the library kernels it is checking.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

// Plain loops over [N,C,H,W] x [K,C,kH,kW], valid cross-correlation.
inline std::vector<double> conv2d(const std::vector<double>& in, std::size_t n, std::size_t c,
                                  std::size_t h, std::size_t w, const std::vector<double>& ker,
                                  std::size_t k, std::size_t kh, std::size_t kw,
                                  const std::vector<double>& bias, std::size_t stride) {
  const std::size_t oh = (h - kh) / stride + 1;
  const std::size_t ow = (w - kw) / stride + 1;
  std::vector<double> out(n * k * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t f = 0; f < k; ++f)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double s = bias[f];
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v)
                s += in[((b * c + ch) * h + i * stride + u) * w + j * stride + v] *
                     ker[((f * c + ch) * kh + u) * kw + v];
          out[((b * k + f) * oh + i) * ow + j] = s;
        }
  return out;
}

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a[i * k + p] * b[p * n + j];
  return out;
}

// Central difference of f at x along coordinate i.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t i, double eps) {
  const double saved = x[i];
  x[i] = saved + eps;
  const double up = f(x);
  x[i] = saved - eps;
  const double down = f(x);
  return (up - down) / (2.0 * eps);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// One textbook Adam update of a scalar: returns (new value, m, v).
struct AdamScalar {
  double value;
  double m;
  double v;
};

inline AdamScalar adam_step(double value, double grad, double m, double v, int t, double lr,
                            double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
  m = b1 * m + (1.0 - b1) * grad;
  v = b2 * v + (1.0 - b2) * grad * grad;
  const double mhat = m / (1.0 - std::pow(b1, t));
  const double vhat = v / (1.0 - std::pow(b2, t));
  return {value - lr * mhat / (std::sqrt(vhat) + eps), m, v};
}

// Mean softmax cross-entropy computed with long double and no shared code.
inline double softmax_ce(const std::vector<double>& logits, std::size_t classes,
                         const std::vector<int>& labels) {
  long double total = 0.0L;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    long double denom = 0.0L;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(static_cast<long double>(logits[r * classes + c]));
    total += std::log(denom) - logits[r * classes + static_cast<std::size_t>(labels[r])];
  }
  return static_cast<double>(total / labels.size());
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace oracle
