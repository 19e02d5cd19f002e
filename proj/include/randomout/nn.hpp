// SPDX-License-Identifier: Apache-2.0
//
// Layers with explicit forward/backward passes, a static feed-forward
// layer graph, and the parameter registry that exposes per-filter groups.
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "randomout/init.hpp"
#include "randomout/tensor.hpp"

namespace randomout {

enum class ParamRole { conv_kernel, conv_bias, dense_weight, dense_bias, bn_gamma, bn_beta };
std::string_view to_string(ParamRole role);

/// A trainable tensor and its gradient accumulator. Optimizer state is kept
/// by the optimizer, keyed by `id`.
struct ParamNode {
  ParamNode(ParamRole role, Tensor value);

  int id = -1;
  ParamRole role;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

enum class LayerKind { conv2d, relu, dense, softmax_ce, batchnorm, flatten, avgpool, concat };
std::string_view to_string(LayerKind kind);

enum class Mode { train, eval };

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  /// Per-sample output shape (no batch dimension) for per-sample input
  /// shapes. Throws ShapeError when the inputs are incompatible.
  virtual Shape output_shape(std::span<const Shape> inputs) const = 0;

  virtual Tensor forward(std::span<const Tensor* const> inputs, Mode mode) = 0;

  /// Accumulates parameter gradients into params() and returns dL/d(input)
  /// for every input, given the inputs seen by the matching forward call.
  virtual std::vector<Tensor> backward(std::span<const Tensor* const> inputs,
                                       const Tensor& grad_output) = 0;

  virtual std::vector<ParamNode*> params() { return {}; }
  virtual std::size_t arity() const { return 1; }
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
         std::size_t stride, RngStream& rng);
  Conv2d(Tensor kernel, Tensor bias, std::size_t stride);

  LayerKind kind() const override { return LayerKind::conv2d; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs,
                               const Tensor& grad_output) override;
  std::vector<ParamNode*> params() override { return {&kernel_, &bias_}; }

  ParamNode& kernel() { return kernel_; }
  ParamNode& bias() { return bias_; }
  const ParamNode& kernel() const { return kernel_; }
  const ParamNode& bias() const { return bias_; }
  std::size_t out_channels() const { return kernel_.value.shape()[0]; }
  std::size_t fan_in() const;
  std::size_t fan_out() const;

 private:
  ParamNode kernel_;
  ParamNode bias_;
  std::size_t stride_;
};

class Relu final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs,
                               const Tensor& grad_output) override;
};

/// y = x W + b with W stored [in, out].
class Dense final : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features, RngStream& rng);
  Dense(Tensor weight, Tensor bias);

  LayerKind kind() const override { return LayerKind::dense; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs,
                               const Tensor& grad_output) override;
  std::vector<ParamNode*> params() override { return {&weight_, &bias_}; }

  ParamNode& weight() { return weight_; }
  ParamNode& bias() { return bias_; }

 private:
  ParamNode weight_;
  ParamNode bias_;
};

class Flatten final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::flatten; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs,
                               const Tensor& grad_output) override;
};

/// Valid (unpadded) average pooling over square windows.
class AvgPool final : public Layer {
 public:
  AvgPool(std::size_t window, std::size_t stride);

  LayerKind kind() const override { return LayerKind::avgpool; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<AvgPool>(*this); }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs,
                               const Tensor& grad_output) override;

 private:
  std::size_t window_;
  std::size_t stride_;
};

/// Channel-wise concatenation of [N,Ci,H,W] inputs.
class Concat final : public Layer {
 public:
  explicit Concat(std::size_t arity);

  LayerKind kind() const override { return LayerKind::concat; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Concat>(*this); }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs,
                               const Tensor& grad_output) override;
  std::size_t arity() const override { return arity_; }

 private:
  std::size_t arity_;
};

/// Per-channel batch normalization over (N, H, W) for 4-d inputs and over N
/// for 2-d inputs. Train mode normalizes with biased batch statistics and
/// updates running stats as running = momentum * running + (1 - momentum) * batch
/// (running variance uses the unbiased batch estimate). Eval mode uses the
/// running stats and leaves them untouched.
class BatchNorm final : public Layer {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  explicit BatchNorm(std::size_t channels);

  LayerKind kind() const override { return LayerKind::batchnorm; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }
  Shape output_shape(std::span<const Shape> inputs) const override;
  Tensor forward(std::span<const Tensor* const> inputs, Mode mode) override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs,
                               const Tensor& grad_output) override;
  std::vector<ParamNode*> params() override { return {&gamma_, &beta_}; }

  ParamNode& gamma() { return gamma_; }
  ParamNode& beta() { return beta_; }
  const std::vector<double>& running_mean() const { return running_mean_; }
  const std::vector<double>& running_var() const { return running_var_; }

 private:
  std::size_t channels_;
  ParamNode gamma_;
  ParamNode beta_;
  std::vector<double> running_mean_;
  std::vector<double> running_var_;
};

/// Mean softmax cross-entropy over the batch, computed from logits with
/// max-subtraction.
struct LossAndGrad {
  double loss;
  Tensor grad_logits;
};
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// One convolutional filter: output channel `filter_index` of conv layer
/// `layer_id`, i.e. kernel elements [offset, offset + length) and bias
/// element `filter_index`.
struct FilterGroup {
  int layer_id;
  std::size_t filter_index;
  ParamNode* kernel_param;
  ParamNode* bias_param;
  std::size_t kernel_offset;
  std::size_t kernel_length;
  std::size_t bias_index;
  std::size_t fan_in;
  std::size_t fan_out;
};

/// Cached activations of one forward pass.
struct ForwardPass {
  Mode mode;
  Tensor input;
  std::vector<Tensor> activations;  // one per layer node, in node order

  const Tensor& logits() const { return activations.back(); }
  std::size_t batch_size() const { return input.shape()[0]; }
};

/// A static feed-forward DAG of layers. Node -1 is the model input; every
/// node may read any earlier node. The last node produces the logits.
class Model {
 public:
  static constexpr int kInput = -1;

  Model(Shape input_shape, std::size_t num_classes);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  ~Model() = default;

  /// Appends a layer reading `inputs` (node ids) and returns its node id.
  /// Shapes are checked here; ParamNode ids are assigned in call order.
  int add(std::unique_ptr<Layer> layer, std::vector<int> inputs);
  /// Appends a layer reading the previous node (or the model input).
  int add(std::unique_ptr<Layer> layer);

  ForwardPass forward(const Tensor& input, Mode mode);
  /// Mean cross-entropy loss for `labels`; writes dL/dw into every ParamNode.
  double backward(const ForwardPass& pass, std::span<const int> labels);
  /// Backpropagates an arbitrary upstream gradient of the final node.
  /// Returns dL/d(input). Parameter grads are accumulated (not reset).
  Tensor backward_from(const ForwardPass& pass, const Tensor& grad_output);

  void zero_grads();
  std::vector<ParamNode*> params();
  std::vector<const ParamNode*> params() const;
  std::vector<FilterGroup> filter_groups();

  std::size_t layer_count() const { return nodes_.size(); }
  Layer& layer(int id) { return *nodes_.at(static_cast<std::size_t>(id)).layer; }
  const Layer& layer(int id) const { return *nodes_.at(static_cast<std::size_t>(id)).layer; }
  const std::vector<int>& layer_inputs(int id) const {
    return nodes_.at(static_cast<std::size_t>(id)).inputs;
  }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape(int id) const { return nodes_.at(static_cast<std::size_t>(id)).shape; }
  std::size_t num_classes() const { return num_classes_; }

 private:
  struct Node {
    std::unique_ptr<Layer> layer;
    std::vector<int> inputs;
    Shape shape;
  };
  const Shape& shape_of(int id) const;

  Shape input_shape_;
  std::size_t num_classes_;
  std::vector<Node> nodes_;
  int next_param_id_ = 0;
};

/// The nine-weight two-branch ReLU network
///   f(x|w) = relu(w6 relu(w0 x0 + w1 x1 + w2) + w7 relu(w3 x0 + w4 x1 + w5) + w8)
/// assembled from Dense and Relu layers.
class BranchNetwork {
 public:
  explicit BranchNetwork(std::span<const double, 9> weights);

  double value(double x0, double x1);
  /// df/dw_i for i = 0..8 at the input (x0, x1).
  std::vector<double> gradient(double x0, double x1);

 private:
  Model model_;
};

}  // namespace randomout
