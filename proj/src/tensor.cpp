// SPDX-License-Identifier: Apache-2.0
#include "randomout/tensor.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "randomout/error.hpp"

namespace randomout {

namespace {

std::size_t checked_numel(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw ShapeError("shape must have at least one dimension");
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("shape dimensions must be >= 1");
    if (n > std::numeric_limits<std::size_t>::max() / d) {
      throw ShapeError("shape element count overflows the index range");
    }
    n *= d;
  }
  return n;
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)), numel_(checked_numel(dims_)) {}

Shape Shape::with_batch(std::size_t outer) const {
  std::vector<std::size_t> d;
  d.reserve(dims_.size() + 1);
  d.push_back(outer);
  d.insert(d.end(), dims_.begin(), dims_.end());
  return Shape(std::move(d));
}

Shape Shape::without_batch() const {
  if (dims_.size() < 2) throw ShapeError("cannot drop the batch dimension of " + to_string());
  return Shape(std::vector<std::size_t>(dims_.begin() + 1, dims_.end()));
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.to_string());
  }
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

double& Tensor::at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  assert(shape_.rank() == 4);
  const auto& s = shape_.dims();
  return data_[((a * s[1] + b) * s[2] + c) * s[3] + d];
}

double Tensor::at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
  assert(shape_.rank() == 4);
  const auto& s = shape_.dims();
  return data_[((a * s[1] + b) * s[2] + c) * s[3] + d];
}

void Tensor::fill(double value) {
  for (double& x : data_) x = value;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw ShapeError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Tensor zeros(const Shape& shape) { return Tensor(shape, 0.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul shape mismatch: " + a.shape().to_string() + " x " +
                     b.shape().to_string());
  }
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  Tensor out(Shape{m, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* po = out.raw();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return out;
}

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw InvalidArgument("convolution stride must be positive");
  if (kernel > input) {
    throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds input extent " +
                     std::to_string(input));
  }
  return (input - kernel) / stride + 1;
}

namespace {

void check_conv_shapes(const Tensor& input, const Tensor& kernel) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.rank() != 4 || ks.rank() != 4) {
    throw ShapeError("conv2d expects 4-d input and kernel, got " + is.to_string() + " and " +
                     ks.to_string());
  }
  if (is[1] != ks[1]) {
    throw ShapeError("conv2d channel mismatch: input " + is.to_string() + ", kernel " +
                     ks.to_string());
  }
  if (ks[2] > is[2] || ks[3] > is[3]) {
    throw ShapeError("conv2d kernel " + ks.to_string() + " larger than input " + is.to_string());
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      std::size_t stride) {
  check_conv_shapes(input, kernel);
  const std::size_t n_batch = input.shape()[0];
  const std::size_t chans = input.shape()[1];
  const std::size_t h = input.shape()[2];
  const std::size_t w = input.shape()[3];
  const std::size_t k_out = kernel.shape()[0];
  const std::size_t kh = kernel.shape()[2];
  const std::size_t kw = kernel.shape()[3];
  if (bias.shape().rank() != 1 || bias.shape()[0] != k_out) {
    throw ShapeError("conv2d bias shape " + bias.shape().to_string() + " does not match " +
                     std::to_string(k_out) + " output channels");
  }
  const std::size_t oh = conv_output_extent(h, kh, stride);
  const std::size_t ow = conv_output_extent(w, kw, stride);

  Tensor out(Shape{n_batch, k_out, oh, ow});
  const double* in = input.raw();
  const double* wt = kernel.raw();
  double* po = out.raw();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t k = 0; k < k_out; ++k) {
      double* plane = po + (n * k_out + k) * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) plane[i] = bias[k];
      for (std::size_t c = 0; c < chans; ++c) {
        const double* src = in + (n * chans + c) * h * w;
        const double* ker = wt + (k * chans + c) * kh * kw;
        for (std::size_t u = 0; u < kh; ++u) {
          for (std::size_t v = 0; v < kw; ++v) {
            const double wv = ker[u * kw + v];
            for (std::size_t i = 0; i < oh; ++i) {
              const double* row = src + (i * stride + u) * w + v;
              double* orow = plane + i * ow;
              if (stride == 1) {
                for (std::size_t j = 0; j < ow; ++j) orow[j] += wv * row[j];
              } else {
                for (std::size_t j = 0; j < ow; ++j) orow[j] += wv * row[j * stride];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, std::size_t stride,
                            const Tensor& grad_output) {
  check_conv_shapes(input, kernel);
  const std::size_t n_batch = input.shape()[0];
  const std::size_t chans = input.shape()[1];
  const std::size_t h = input.shape()[2];
  const std::size_t w = input.shape()[3];
  const std::size_t k_out = kernel.shape()[0];
  const std::size_t kh = kernel.shape()[2];
  const std::size_t kw = kernel.shape()[3];
  const std::size_t oh = conv_output_extent(h, kh, stride);
  const std::size_t ow = conv_output_extent(w, kw, stride);
  if (grad_output.shape() != Shape{n_batch, k_out, oh, ow}) {
    throw ShapeError("conv2d grad_output shape " + grad_output.shape().to_string() +
                     " does not match forward output");
  }

  Conv2dGrads g{Tensor(input.shape()), Tensor(kernel.shape()), Tensor(Shape{k_out})};
  const double* in = input.raw();
  const double* wt = kernel.raw();
  const double* go = grad_output.raw();
  double* gin = g.input.raw();
  double* gw = g.kernel.raw();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t k = 0; k < k_out; ++k) {
      const double* gplane = go + (n * k_out + k) * oh * ow;
      double bsum = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) bsum += gplane[i];
      g.bias[k] += bsum;
      for (std::size_t c = 0; c < chans; ++c) {
        const double* src = in + (n * chans + c) * h * w;
        double* gsrc = gin + (n * chans + c) * h * w;
        const double* ker = wt + (k * chans + c) * kh * kw;
        double* gker = gw + (k * chans + c) * kh * kw;
        for (std::size_t u = 0; u < kh; ++u) {
          for (std::size_t v = 0; v < kw; ++v) {
            const double wv = ker[u * kw + v];
            double acc = 0.0;
            for (std::size_t i = 0; i < oh; ++i) {
              const std::size_t off = (i * stride + u) * w + v;
              const double* grow = gplane + i * ow;
              if (stride == 1) {
                const double* row = src + off;
                double* grow_in = gsrc + off;
                for (std::size_t j = 0; j < ow; ++j) {
                  acc += grow[j] * row[j];
                  grow_in[j] += wv * grow[j];
                }
              } else {
                for (std::size_t j = 0; j < ow; ++j) {
                  acc += grow[j] * src[off + j * stride];
                  gsrc[off + j * stride] += wv * grow[j];
                }
              }
            }
            gker[u * kw + v] += acc;
          }
        }
      }
    }
  }
  return g;
}

}  // namespace randomout
