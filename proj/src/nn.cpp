// SPDX-License-Identifier: Apache-2.0
#include "randomout/nn.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "randomout/error.hpp"

namespace randomout {

std::string_view to_string(ParamRole role) {
  switch (role) {
    case ParamRole::conv_kernel: return "conv_kernel";
    case ParamRole::conv_bias: return "conv_bias";
    case ParamRole::dense_weight: return "dense_weight";
    case ParamRole::dense_bias: return "dense_bias";
    case ParamRole::bn_gamma: return "bn_gamma";
    case ParamRole::bn_beta: return "bn_beta";
  }
  return "unknown";
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax_ce: return "softmax_ce";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::flatten: return "flatten";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::concat: return "concat";
  }
  return "unknown";
}

ParamNode::ParamNode(ParamRole r, Tensor v) : role(r), value(std::move(v)), grad(value.shape()) {}

namespace {

void expect_arity(std::span<const Shape> inputs, std::size_t n, std::string_view what) {
  if (inputs.size() != n) {
    throw ShapeError(std::string(what) + " expects " + std::to_string(n) + " input(s), got " +
                     std::to_string(inputs.size()));
  }
}

void expect_batch_shape(const Tensor& t, std::size_t rank, std::string_view what) {
  if (t.shape().rank() != rank) {
    throw ShapeError(std::string(what) + " expects a rank-" + std::to_string(rank) +
                     " batch, got " + t.shape().to_string());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
               std::size_t stride, RngStream& rng)
    : kernel_(ParamRole::conv_kernel,
              xavier_init(Shape{out_channels, in_channels, kernel_size, kernel_size},
                          in_channels * kernel_size * kernel_size,
                          out_channels * kernel_size * kernel_size, rng)),
      bias_(ParamRole::conv_bias, Tensor(Shape{out_channels})),
      stride_(stride) {
  if (stride == 0) throw InvalidArgument("conv2d stride must be positive");
}

Conv2d::Conv2d(Tensor kernel, Tensor bias, std::size_t stride)
    : kernel_(ParamRole::conv_kernel, std::move(kernel)),
      bias_(ParamRole::conv_bias, std::move(bias)),
      stride_(stride) {
  if (kernel_.value.shape().rank() != 4) throw ShapeError("conv2d kernel must be 4-d");
  if (bias_.value.shape() != Shape{kernel_.value.shape()[0]}) {
    throw ShapeError("conv2d bias must have one element per output channel");
  }
  if (stride == 0) throw InvalidArgument("conv2d stride must be positive");
}

std::size_t Conv2d::fan_in() const {
  const Shape& s = kernel_.value.shape();
  return s[1] * s[2] * s[3];
}

std::size_t Conv2d::fan_out() const {
  const Shape& s = kernel_.value.shape();
  return s[0] * s[2] * s[3];
}

Shape Conv2d::output_shape(std::span<const Shape> inputs) const {
  expect_arity(inputs, 1, "conv2d");
  const Shape& in = inputs[0];
  const Shape& k = kernel_.value.shape();
  if (in.rank() != 3 || in[0] != k[1]) {
    throw ShapeError("conv2d with kernel " + k.to_string() + " cannot read " + in.to_string());
  }
  return Shape{k[0], conv_output_extent(in[1], k[2], stride_),
               conv_output_extent(in[2], k[3], stride_)};
}

Tensor Conv2d::forward(std::span<const Tensor* const> inputs, Mode) {
  return conv2d_forward(*inputs[0], kernel_.value, bias_.value, stride_);
}

std::vector<Tensor> Conv2d::backward(std::span<const Tensor* const> inputs,
                                     const Tensor& grad_output) {
  Conv2dGrads g = conv2d_backward(*inputs[0], kernel_.value, stride_, grad_output);
  for (std::size_t i = 0; i < g.kernel.size(); ++i) kernel_.grad[i] += g.kernel[i];
  for (std::size_t i = 0; i < g.bias.size(); ++i) bias_.grad[i] += g.bias[i];
  std::vector<Tensor> out;
  out.push_back(std::move(g.input));
  return out;
}

// ---------------------------------------------------------------------------
// Relu

Shape Relu::output_shape(std::span<const Shape> inputs) const {
  expect_arity(inputs, 1, "relu");
  return inputs[0];
}

Tensor Relu::forward(std::span<const Tensor* const> inputs, Mode) {
  Tensor out = *inputs[0];
  // NaN passes through so a blown-up activation still reaches the loss.
  for (double& x : out.data()) x = (x > 0.0 || std::isnan(x)) ? x : 0.0;
  return out;
}

// The derivative at exactly zero is taken as 0, so a unit whose
// pre-activation is <= 0 passes no gradient.
std::vector<Tensor> Relu::backward(std::span<const Tensor* const> inputs,
                                   const Tensor& grad_output) {
  const Tensor& in = *inputs[0];
  Tensor g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(in[i] > 0.0)) g[i] = 0.0;
  }
  std::vector<Tensor> out;
  out.push_back(std::move(g));
  return out;
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(std::size_t in_features, std::size_t out_features, RngStream& rng)
    : weight_(ParamRole::dense_weight,
              xavier_init(Shape{in_features, out_features}, in_features, out_features, rng)),
      bias_(ParamRole::dense_bias, Tensor(Shape{out_features})) {}

Dense::Dense(Tensor weight, Tensor bias)
    : weight_(ParamRole::dense_weight, std::move(weight)),
      bias_(ParamRole::dense_bias, std::move(bias)) {
  if (weight_.value.shape().rank() != 2 ||
      bias_.value.shape() != Shape{weight_.value.shape()[1]}) {
    throw ShapeError("dense weight must be [in,out] with bias [out]");
  }
}

Shape Dense::output_shape(std::span<const Shape> inputs) const {
  expect_arity(inputs, 1, "dense");
  const Shape& w = weight_.value.shape();
  if (inputs[0].rank() != 1 || inputs[0][0] != w[0]) {
    throw ShapeError("dense with weight " + w.to_string() + " cannot read " +
                     inputs[0].to_string());
  }
  return Shape{w[1]};
}

Tensor Dense::forward(std::span<const Tensor* const> inputs, Mode) {
  const Tensor& x = *inputs[0];
  expect_batch_shape(x, 2, "dense");
  Tensor y = matmul(x, weight_.value);
  const std::size_t n = y.shape()[0];
  const std::size_t u = y.shape()[1];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < u; ++j) y[i * u + j] += bias_.value[j];
  }
  return y;
}

std::vector<Tensor> Dense::backward(std::span<const Tensor* const> inputs,
                                    const Tensor& grad_output) {
  const Tensor& x = *inputs[0];
  const std::size_t n = x.shape()[0];
  const std::size_t f = x.shape()[1];
  const std::size_t u = grad_output.shape()[1];
  const double* gy = grad_output.raw();
  const double* px = x.raw();
  const double* pw = weight_.value.raw();
  double* gw = weight_.grad.raw();
  Tensor gx(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < u; ++j) bias_.grad[j] += gy[i * u + j];
    for (std::size_t p = 0; p < f; ++p) {
      const double xip = px[i * f + p];
      double acc = 0.0;
      for (std::size_t j = 0; j < u; ++j) {
        gw[p * u + j] += xip * gy[i * u + j];
        acc += pw[p * u + j] * gy[i * u + j];
      }
      gx[i * f + p] = acc;
    }
  }
  std::vector<Tensor> out;
  out.push_back(std::move(gx));
  return out;
}

// ---------------------------------------------------------------------------
// Flatten

Shape Flatten::output_shape(std::span<const Shape> inputs) const {
  expect_arity(inputs, 1, "flatten");
  return Shape{inputs[0].numel()};
}

Tensor Flatten::forward(std::span<const Tensor* const> inputs, Mode) {
  const Tensor& x = *inputs[0];
  const std::size_t n = x.shape()[0];
  return x.reshaped(Shape{n, x.size() / n});
}

std::vector<Tensor> Flatten::backward(std::span<const Tensor* const> inputs,
                                      const Tensor& grad_output) {
  std::vector<Tensor> out;
  out.push_back(grad_output.reshaped(inputs[0]->shape()));
  return out;
}

// ---------------------------------------------------------------------------
// AvgPool

AvgPool::AvgPool(std::size_t window, std::size_t stride) : window_(window), stride_(stride) {
  if (window == 0 || stride == 0) throw InvalidArgument("avgpool window and stride must be >= 1");
}

Shape AvgPool::output_shape(std::span<const Shape> inputs) const {
  expect_arity(inputs, 1, "avgpool");
  const Shape& in = inputs[0];
  if (in.rank() != 3) throw ShapeError("avgpool expects [C,H,W], got " + in.to_string());
  return Shape{in[0], conv_output_extent(in[1], window_, stride_),
               conv_output_extent(in[2], window_, stride_)};
}

Tensor AvgPool::forward(std::span<const Tensor* const> inputs, Mode) {
  const Tensor& x = *inputs[0];
  expect_batch_shape(x, 4, "avgpool");
  const auto& s = x.shape().dims();
  const std::size_t oh = conv_output_extent(s[2], window_, stride_);
  const std::size_t ow = conv_output_extent(s[3], window_, stride_);
  const double scale = 1.0 / static_cast<double>(window_ * window_);
  Tensor y(Shape{s[0], s[1], oh, ow});
  for (std::size_t n = 0; n < s[0]; ++n) {
    for (std::size_t c = 0; c < s[1]; ++c) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (std::size_t u = 0; u < window_; ++u) {
            for (std::size_t v = 0; v < window_; ++v) {
              acc += x.at(n, c, i * stride_ + u, j * stride_ + v);
            }
          }
          y.at(n, c, i, j) = acc * scale;
        }
      }
    }
  }
  return y;
}

std::vector<Tensor> AvgPool::backward(std::span<const Tensor* const> inputs,
                                      const Tensor& grad_output) {
  const Tensor& x = *inputs[0];
  const auto& s = x.shape().dims();
  const std::size_t oh = grad_output.shape()[2];
  const std::size_t ow = grad_output.shape()[3];
  const double scale = 1.0 / static_cast<double>(window_ * window_);
  Tensor gx(x.shape());
  for (std::size_t n = 0; n < s[0]; ++n) {
    for (std::size_t c = 0; c < s[1]; ++c) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          const double g = grad_output.at(n, c, i, j) * scale;
          for (std::size_t u = 0; u < window_; ++u) {
            for (std::size_t v = 0; v < window_; ++v) {
              gx.at(n, c, i * stride_ + u, j * stride_ + v) += g;
            }
          }
        }
      }
    }
  }
  std::vector<Tensor> out;
  out.push_back(std::move(gx));
  return out;
}

// ---------------------------------------------------------------------------
// Concat

Concat::Concat(std::size_t arity) : arity_(arity) {
  if (arity < 2) throw InvalidArgument("concat needs at least two inputs");
}

Shape Concat::output_shape(std::span<const Shape> inputs) const {
  expect_arity(inputs, arity_, "concat");
  std::size_t channels = 0;
  for (const Shape& s : inputs) {
    if (s.rank() != 3 || s[1] != inputs[0][1] || s[2] != inputs[0][2]) {
      throw ShapeError("concat inputs must share spatial extent: " + inputs[0].to_string() +
                       " vs " + s.to_string());
    }
    channels += s[0];
  }
  return Shape{channels, inputs[0][1], inputs[0][2]};
}

Tensor Concat::forward(std::span<const Tensor* const> inputs, Mode) {
  const std::size_t n = inputs[0]->shape()[0];
  const std::size_t hw = inputs[0]->shape()[2] * inputs[0]->shape()[3];
  std::size_t channels = 0;
  for (const Tensor* t : inputs) channels += t->shape()[1];
  Tensor y(Shape{n, channels, inputs[0]->shape()[2], inputs[0]->shape()[3]});
  for (std::size_t b = 0; b < n; ++b) {
    double* dst = y.raw() + b * channels * hw;
    for (const Tensor* t : inputs) {
      const std::size_t block = t->shape()[1] * hw;
      std::copy_n(t->raw() + b * block, block, dst);
      dst += block;
    }
  }
  return y;
}

std::vector<Tensor> Concat::backward(std::span<const Tensor* const> inputs,
                                     const Tensor& grad_output) {
  const std::size_t n = grad_output.shape()[0];
  const std::size_t channels = grad_output.shape()[1];
  const std::size_t hw = grad_output.shape()[2] * grad_output.shape()[3];
  std::vector<Tensor> out;
  std::size_t offset = 0;
  for (const Tensor* t : inputs) {
    Tensor g(t->shape());
    const std::size_t block = t->shape()[1] * hw;
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(grad_output.raw() + b * channels * hw + offset, block, g.raw() + b * block);
    }
    offset += block;
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm::BatchNorm(std::size_t channels)
    : channels_(channels),
      gamma_(ParamRole::bn_gamma, Tensor(Shape{channels}, 1.0)),
      beta_(ParamRole::bn_beta, Tensor(Shape{channels}, 0.0)),
      running_mean_(channels, 0.0),
      running_var_(channels, 1.0) {}

Shape BatchNorm::output_shape(std::span<const Shape> inputs) const {
  expect_arity(inputs, 1, "batchnorm");
  const Shape& in = inputs[0];
  if ((in.rank() != 3 && in.rank() != 1) || in[0] != channels_) {
    throw ShapeError("batchnorm over " + std::to_string(channels_) + " channels cannot read " +
                     in.to_string());
  }
  return in;
}

namespace {

struct ChannelLayout {
  std::size_t batch;
  std::size_t channels;
  std::size_t spatial;
  std::size_t index(std::size_t n, std::size_t c, std::size_t s) const {
    return (n * channels + c) * spatial + s;
  }
};

ChannelLayout channel_layout(const Tensor& x) {
  const auto& d = x.shape().dims();
  if (d.size() == 4) return {d[0], d[1], d[2] * d[3]};
  if (d.size() == 2) return {d[0], d[1], 1};
  throw ShapeError("batchnorm expects a rank-2 or rank-4 batch, got " + x.shape().to_string());
}

struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased
};

BatchStats batch_stats(const Tensor& x, const ChannelLayout& l) {
  BatchStats st{std::vector<double>(l.channels, 0.0), std::vector<double>(l.channels, 0.0)};
  const double count = static_cast<double>(l.batch * l.spatial);
  for (std::size_t c = 0; c < l.channels; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      for (std::size_t s = 0; s < l.spatial; ++s) sum += x[l.index(n, c, s)];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const double d = x[l.index(n, c, s)] - mean;
        sq += d * d;
      }
    }
    st.mean[c] = mean;
    st.var[c] = sq / count;
  }
  return st;
}

}  // namespace

Tensor BatchNorm::forward(std::span<const Tensor* const> inputs, Mode mode) {
  const Tensor& x = *inputs[0];
  const ChannelLayout l = channel_layout(x);
  if (l.channels != channels_) throw ShapeError("batchnorm channel count mismatch");

  std::vector<double> mean;
  std::vector<double> var;
  if (mode == Mode::train) {
    if (l.batch < 2) {
      throw InvalidArgument("batchnorm in train mode needs a batch of at least 2 samples");
    }
    BatchStats st = batch_stats(x, l);
    const double count = static_cast<double>(l.batch * l.spatial);
    for (std::size_t c = 0; c < channels_; ++c) {
      running_mean_[c] = kMomentum * running_mean_[c] + (1.0 - kMomentum) * st.mean[c];
      running_var_[c] =
          kMomentum * running_var_[c] + (1.0 - kMomentum) * st.var[c] * count / (count - 1.0);
    }
    mean = std::move(st.mean);
    var = std::move(st.var);
  } else {
    mean = running_mean_;
    var = running_var_;
  }

  Tensor y(x.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    const double inv_std = 1.0 / std::sqrt(var[c] + kEpsilon);
    const double g = gamma_.value[c];
    const double b = beta_.value[c];
    for (std::size_t n = 0; n < l.batch; ++n) {
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const std::size_t i = l.index(n, c, s);
        y[i] = g * (x[i] - mean[c]) * inv_std + b;
      }
    }
  }
  return y;
}

// Train-mode backward; batch statistics are recomputed from the cached input.
std::vector<Tensor> BatchNorm::backward(std::span<const Tensor* const> inputs,
                                        const Tensor& grad_output) {
  const Tensor& x = *inputs[0];
  const ChannelLayout l = channel_layout(x);
  const BatchStats st = batch_stats(x, l);
  const double count = static_cast<double>(l.batch * l.spatial);
  Tensor gx(x.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    const double inv_std = 1.0 / std::sqrt(st.var[c] + kEpsilon);
    double sum_g = 0.0;
    double sum_g_xhat = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const std::size_t i = l.index(n, c, s);
        const double xhat = (x[i] - st.mean[c]) * inv_std;
        sum_g += grad_output[i];
        sum_g_xhat += grad_output[i] * xhat;
      }
    }
    gamma_.grad[c] += sum_g_xhat;
    beta_.grad[c] += sum_g;
    const double g = gamma_.value[c];
    for (std::size_t n = 0; n < l.batch; ++n) {
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const std::size_t i = l.index(n, c, s);
        const double xhat = (x[i] - st.mean[c]) * inv_std;
        gx[i] = g * inv_std * (grad_output[i] - sum_g / count - xhat * sum_g_xhat / count);
      }
    }
  }
  std::vector<Tensor> out;
  out.push_back(std::move(gx));
  return out;
}

// ---------------------------------------------------------------------------
// Loss

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.shape().rank() != 2) {
    throw ShapeError("softmax_ce expects [N,classes] logits, got " + logits.shape().to_string());
  }
  const std::size_t n = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  if (labels.size() != n) {
    throw InvalidArgument("softmax_ce got " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n) + " logit rows");
  }
  LossAndGrad out{0.0, Tensor(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw InvalidArgument("label " + std::to_string(y) + " at row " + std::to_string(i) +
                            " outside [0," + std::to_string(k) + ")");
    }
    const double* row = logits.raw() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z) + mx;
    out.loss += (log_z - row[y]) * inv_n;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(row[j] - log_z);
      out.grad_logits[i * k + j] = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_n;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(Shape input_shape, std::size_t num_classes)
    : input_shape_(std::move(input_shape)), num_classes_(num_classes) {
  if (num_classes == 0) throw InvalidArgument("model needs at least one class");
}

Model::Model(const Model& other)
    : input_shape_(other.input_shape_),
      num_classes_(other.num_classes_),
      next_param_id_(other.next_param_id_) {
  nodes_.reserve(other.nodes_.size());
  for (const Node& n : other.nodes_) nodes_.push_back({n.layer->clone(), n.inputs, n.shape});
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

const Shape& Model::shape_of(int id) const {
  return id == kInput ? input_shape_ : nodes_.at(static_cast<std::size_t>(id)).shape;
}

int Model::add(std::unique_ptr<Layer> layer, std::vector<int> inputs) {
  const int id = static_cast<int>(nodes_.size());
  if (inputs.size() != layer->arity()) {
    throw ShapeError("layer " + std::to_string(id) + " (" + std::string(to_string(layer->kind())) +
                     ") expects " + std::to_string(layer->arity()) + " inputs");
  }
  std::vector<Shape> in_shapes;
  for (int src : inputs) {
    if (src < kInput || src >= id) {
      throw ShapeError("layer " + std::to_string(id) + " reads invalid node " + std::to_string(src));
    }
    in_shapes.push_back(shape_of(src));
  }
  Shape out = [&] {
    try {
      return layer->output_shape(in_shapes);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(id) + ": " + e.what());
    }
  }();
  for (ParamNode* p : layer->params()) p->id = next_param_id_++;
  nodes_.push_back({std::move(layer), std::move(inputs), std::move(out)});
  return id;
}

int Model::add(std::unique_ptr<Layer> layer) {
  const int prev = nodes_.empty() ? kInput : static_cast<int>(nodes_.size()) - 1;
  return add(std::move(layer), {prev});
}

ForwardPass Model::forward(const Tensor& input, Mode mode) {
  if (nodes_.empty()) throw InvalidArgument("model has no layers");
  if (input.shape().rank() != input_shape_.rank() + 1 ||
      input.shape().without_batch() != input_shape_) {
    throw ShapeError("layer 0: input " + input.shape().to_string() + " does not match model input " +
                     input_shape_.with_batch(input.shape()[0]).to_string());
  }
  ForwardPass pass{mode, input, {}};
  pass.activations.reserve(nodes_.size());
  std::vector<const Tensor*> args;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    args.clear();
    for (int src : nodes_[id].inputs) {
      args.push_back(src == kInput ? &pass.input : &pass.activations[static_cast<std::size_t>(src)]);
    }
    try {
      pass.activations.push_back(nodes_[id].layer->forward(args, mode));
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(id) + ": " + e.what());
    }
  }
  return pass;
}

Tensor Model::backward_from(const ForwardPass& pass, const Tensor& grad_output) {
  if (pass.activations.size() != nodes_.size()) {
    throw InvalidArgument("forward pass does not belong to this model");
  }
  if (grad_output.shape() != pass.logits().shape()) {
    throw ShapeError("upstream gradient " + grad_output.shape().to_string() +
                     " does not match output " + pass.logits().shape().to_string());
  }
  std::vector<std::vector<double>> grads(nodes_.size());
  std::vector<double> grad_input(pass.input.size(), 0.0);
  grads.back().assign(grad_output.data().begin(), grad_output.data().end());

  std::vector<const Tensor*> args;
  for (std::size_t id = nodes_.size(); id-- > 0;) {
    if (grads[id].empty()) continue;  // node does not reach the output
    const Tensor upstream(pass.activations[id].shape(), std::move(grads[id]));
    args.clear();
    for (int src : nodes_[id].inputs) {
      args.push_back(src == kInput ? &pass.input : &pass.activations[static_cast<std::size_t>(src)]);
    }
    std::vector<Tensor> down = nodes_[id].layer->backward(args, upstream);
    for (std::size_t a = 0; a < down.size(); ++a) {
      const int src = nodes_[id].inputs[a];
      std::vector<double>& acc =
          src == kInput ? grad_input : grads[static_cast<std::size_t>(src)];
      if (acc.empty()) {
        acc.assign(down[a].data().begin(), down[a].data().end());
      } else {
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += down[a][i];
      }
    }
  }
  return Tensor(pass.input.shape(), std::move(grad_input));
}

double Model::backward(const ForwardPass& pass, std::span<const int> labels) {
  if (pass.mode != Mode::train) throw InvalidArgument("backward requires a train-mode forward pass");
  LossAndGrad lg = softmax_cross_entropy(pass.logits(), labels);
  backward_from(pass, lg.grad_logits);
  return lg.loss;
}

void Model::zero_grads() {
  for (ParamNode* p : params()) p->zero_grad();
}

std::vector<ParamNode*> Model::params() {
  std::vector<ParamNode*> out;
  for (Node& n : nodes_) {
    for (ParamNode* p : n.layer->params()) out.push_back(p);
  }
  return out;
}

std::vector<const ParamNode*> Model::params() const {
  std::vector<const ParamNode*> out;
  for (const Node& n : nodes_) {
    for (ParamNode* p : n.layer->params()) out.push_back(p);
  }
  return out;
}

std::vector<FilterGroup> Model::filter_groups() {
  std::vector<FilterGroup> groups;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    auto* conv = dynamic_cast<Conv2d*>(nodes_[id].layer.get());
    if (conv == nullptr) continue;
    const std::size_t k_out = conv->out_channels();
    const std::size_t slab = conv->kernel().value.size() / k_out;
    for (std::size_t k = 0; k < k_out; ++k) {
      groups.push_back({static_cast<int>(id), k, &conv->kernel(), &conv->bias(), k * slab, slab, k,
                        conv->fan_in(), conv->fan_out()});
    }
  }
  return groups;
}

// ---------------------------------------------------------------------------
// BranchNetwork

namespace {

Model make_branch_model(std::span<const double, 9> w) {
  Model m(Shape{2}, 1);
  // Hidden layer: column j of W holds the weights of hidden unit j.
  Tensor w1(Shape{2, 2}, {w[0], w[3], w[1], w[4]});
  Tensor b1(Shape{2}, {w[2], w[5]});
  Tensor w2(Shape{2, 1}, {w[6], w[7]});
  Tensor b2(Shape{1}, {w[8]});
  m.add(std::make_unique<Dense>(std::move(w1), std::move(b1)));
  m.add(std::make_unique<Relu>());
  m.add(std::make_unique<Dense>(std::move(w2), std::move(b2)));
  m.add(std::make_unique<Relu>());
  return m;
}

}  // namespace

BranchNetwork::BranchNetwork(std::span<const double, 9> weights)
    : model_(make_branch_model(weights)) {}

double BranchNetwork::value(double x0, double x1) {
  return model_.forward(Tensor(Shape{1, 2}, {x0, x1}), Mode::eval).logits()[0];
}

std::vector<double> BranchNetwork::gradient(double x0, double x1) {
  ForwardPass pass = model_.forward(Tensor(Shape{1, 2}, {x0, x1}), Mode::train);
  model_.zero_grads();
  model_.backward_from(pass, Tensor(Shape{1, 1}, 1.0));
  auto& d1 = static_cast<Dense&>(model_.layer(0));
  auto& d2 = static_cast<Dense&>(model_.layer(2));
  const Tensor& g1 = d1.weight().grad;
  const Tensor& gb1 = d1.bias().grad;
  const Tensor& g2 = d2.weight().grad;
  return {g1[0], g1[2], gb1[0], g1[1], g1[3], gb1[1], g2[0], g2[1], d2.bias().grad[0]};
}

}  // namespace randomout
