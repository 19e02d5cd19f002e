// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors of 64-bit reals and the arithmetic kernels the
// layers are built from.
//
// Layout: the last dimension varies fastest. Activations are [N, C, H, W],
// convolution kernels are [K, C, kH, kW], dense weights are [in, out].
//
// Convolution is cross-correlation without kernel flip and without padding:
//   out[n,k,i,j] = bias[k] + sum_{c,u,v} in[n,c,i*s+u,j*s+v] * w[k,c,u,v]
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace randomout {

class Shape {
 public:
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::size_t numel() const noexcept { return numel_; }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  /// Shape with `outer` prepended, e.g. per-sample [C,H,W] -> [N,C,H,W].
  Shape with_batch(std::size_t outer) const;
  /// Drops the leading dimension. Requires rank >= 2.
  Shape without_batch() const;

  std::string to_string() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::size_t numel_ = 0;
};

class Tensor {
 public:
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(Shape shape, double fill = 0.0);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Row-major 4-d accessor; no bounds checks beyond debug asserts.
  double& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d);
  double at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const;

  void fill(double value);
  /// Same data reinterpreted under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor zeros(const Shape& shape);

/// [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride);

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      std::size_t stride);

struct Conv2dGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};

/// Gradients of a valid cross-correlation given dL/d(out).
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, std::size_t stride,
                            const Tensor& grad_output);

}  // namespace randomout
