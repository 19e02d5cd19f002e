// SPDX-License-Identifier: Apache-2.0
#include "randomout/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "randomout/init.hpp"
#include "randomout/models.hpp"
#include "randomout/nn.hpp"

namespace randomout {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

Tensor random_tensor(const Shape& s, RngStream& rng, double lo, double hi) {
  Tensor t(s);
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

using Pattern = std::vector<bool>;

// Sign pattern of every relu output in the pass.
Pattern relu_pattern(const Model& model, const ForwardPass& pass) {
  Pattern p;
  for (std::size_t id = 0; id < pass.activations.size(); ++id) {
    if (model.layer(static_cast<int>(id)).kind() != LayerKind::relu) continue;
    for (double v : pass.activations[id].data()) p.push_back(v > 0.0);
  }
  return p;
}

// Compares analytic grads of `objective` against central differences over
// all params and the input. `analytic` must fill param grads and return
// d(objective)/d(input). `objective` reports the relu sign pattern of its
// pass; a probe whose +eps and -eps passes disagree straddles a kink and is
// skipped.
GradcheckEntry check(std::string suite, Model& model, Tensor& input,
                     const std::function<double(Pattern&)>& objective,
                     const std::function<Tensor()>& analytic) {
  model.zero_grads();
  const Tensor grad_input = analytic();
  GradcheckEntry e{std::move(suite), 0.0, 0};
  Pattern up_pattern;
  Pattern down_pattern;
  auto probe = [&](double& slot, double analytic_value) {
    const double saved = slot;
    slot = saved + kGradcheckEpsilon;
    const double up = objective(up_pattern);
    slot = saved - kGradcheckEpsilon;
    const double down = objective(down_pattern);
    slot = saved;
    if (up_pattern != down_pattern) {
      ++e.skipped_kinks;
      return;
    }
    const double numeric = (up - down) / (2.0 * kGradcheckEpsilon);
    e.max_relative_error = std::max(e.max_relative_error, relative_error(analytic_value, numeric));
    ++e.checked;
  };
  for (ParamNode* p : model.params()) {
    const Tensor g = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) probe(p->value[i], g[i]);
  }
  for (std::size_t i = 0; i < input.size(); ++i) probe(input[i], grad_input[i]);
  return e;
}

GradcheckEntry check_layer(std::string suite, Model model, Tensor input, RngStream& rng) {
  const Shape out_shape = model.forward(input, Mode::train).logits().shape();
  const Tensor proj = random_tensor(out_shape, rng, -1.0, 1.0);
  auto objective = [&](Pattern& pattern) {
    const ForwardPass pass = model.forward(input, Mode::train);
    pattern = relu_pattern(model, pass);
    double s = 0.0;
    for (std::size_t i = 0; i < proj.size(); ++i) s += proj[i] * pass.logits()[i];
    return s;
  };
  auto analytic = [&] { return model.backward_from(model.forward(input, Mode::train), proj); };
  return check(std::move(suite), model, input, objective, analytic);
}

GradcheckEntry check_model(std::string suite, Model model, Tensor input, std::vector<int> labels) {
  auto objective = [&](Pattern& pattern) {
    const ForwardPass pass = model.forward(input, Mode::train);
    pattern = relu_pattern(model, pass);
    return softmax_cross_entropy(pass.logits(), labels).loss;
  };
  auto analytic = [&] {
    const ForwardPass pass = model.forward(input, Mode::train);
    const LossAndGrad lg = softmax_cross_entropy(pass.logits(), labels);
    return model.backward_from(pass, lg.grad_logits);
  };
  return check(std::move(suite), model, input, objective, analytic);
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, RngStream& rng) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.index(classes));
  return y;
}

}  // namespace

std::vector<GradcheckEntry> run_gradcheck(std::uint64_t seed) {
  RngStream rng = derive_stream(seed, StreamPurpose::init, 99);
  std::vector<GradcheckEntry> out;

  {
    Model m(Shape{2, 6, 6}, 1);
    m.add(std::make_unique<Conv2d>(2, 3, 3, 1, rng));
    auto& conv = static_cast<Conv2d&>(m.layer(0));
    conv.bias().value = random_tensor(conv.bias().value.shape(), rng, -0.5, 0.5);
    out.push_back(check_layer("conv2d", m, random_tensor(Shape{2, 2, 6, 6}, rng, -1, 1), rng));
  }
  {
    Model m(Shape{2, 7, 7}, 1);
    m.add(std::make_unique<Conv2d>(2, 2, 3, 2, rng));
    out.push_back(check_layer("conv2d_stride2", m, random_tensor(Shape{2, 2, 7, 7}, rng, -1, 1), rng));
  }
  {
    Model m(Shape{5}, 1);
    m.add(std::make_unique<Dense>(5, 4, rng));
    out.push_back(check_layer("dense", m, random_tensor(Shape{3, 5}, rng, -1, 1), rng));
  }
  {
    Model m(Shape{4}, 1);
    m.add(std::make_unique<Dense>(4, 6, rng));
    m.add(std::make_unique<Relu>());
    m.add(std::make_unique<Dense>(6, 3, rng));
    out.push_back(check_layer("relu_composition", m, random_tensor(Shape{4, 4}, rng, -1, 1), rng));
  }
  {
    Model m(Shape{3, 4, 4}, 1);
    m.add(std::make_unique<BatchNorm>(3));
    auto& bn = static_cast<BatchNorm&>(m.layer(0));
    bn.gamma().value = random_tensor(Shape{3}, rng, 0.5, 1.5);
    bn.beta().value = random_tensor(Shape{3}, rng, -0.5, 0.5);
    out.push_back(check_layer("batchnorm", m, random_tensor(Shape{3, 3, 4, 4}, rng, -1, 1), rng));
  }
  {
    Model m(Shape{2, 5, 5}, 1);
    m.add(std::make_unique<AvgPool>(3, 1));
    out.push_back(check_layer("avgpool", m, random_tensor(Shape{2, 2, 5, 5}, rng, -1, 1), rng));
  }
  {
    Model m(Shape{2, 4, 4}, 1);
    const int a = m.add(std::make_unique<Conv2d>(2, 2, 1, 1, rng), {Model::kInput});
    const int b = m.add(std::make_unique<Conv2d>(2, 3, 1, 1, rng), {Model::kInput});
    m.add(std::make_unique<Concat>(2), {a, b});
    out.push_back(check_layer("concat", m, random_tensor(Shape{2, 2, 4, 4}, rng, -1, 1), rng));
  }
  {
    // Softmax-CE on its own: a dense layer feeding the loss.
    Model m(Shape{3}, 4);
    m.add(std::make_unique<Dense>(3, 4, rng));
    out.push_back(check_model("softmax_ce", m, random_tensor(Shape{5, 3}, rng, -2, 2),
                              random_labels(5, 4, rng)));
  }
  {
    Model m = build_cratercnn(2, rng);
    out.push_back(check_model("cratercnn", m, random_tensor(Shape{4, 1, 15, 15}, rng, 0, 1),
                              random_labels(4, 2, rng)));
  }
  {
    Model m = build_cratercnn(2, rng, true);
    out.push_back(check_model("cratercnn_batchnorm", m,
                              random_tensor(Shape{4, 1, 15, 15}, rng, 0, 1),
                              random_labels(4, 2, rng)));
  }
  {
    Model m = build_mini_inception(2, false, rng, Shape{3, 9, 9}, 3);
    out.push_back(check_model("mini_inception", m, random_tensor(Shape{2, 3, 9, 9}, rng, 0, 1),
                              random_labels(2, 3, rng)));
  }
  {
    Model m = build_mini_inception(2, true, rng, Shape{3, 9, 9}, 3);
    out.push_back(check_model("mini_inception_batchnorm", m,
                              random_tensor(Shape{2, 3, 9, 9}, rng, 0, 1),
                              random_labels(2, 3, rng)));
  }
  return out;
}

}  // namespace randomout
