// SPDX-License-Identifier: Apache-2.0
#include "randomout/models.hpp"

#include "randomout/error.hpp"

namespace randomout {

std::string_view to_string(ModelName name) {
  switch (name) {
    case ModelName::cratercnn: return "cratercnn";
    case ModelName::mini_inception: return "mini_inception";
  }
  return "unknown";
}

ModelName model_name_from_string(std::string_view s) {
  if (s == "cratercnn") return ModelName::cratercnn;
  if (s == "mini_inception" || s == "mini-inception") return ModelName::mini_inception;
  throw ConfigError("unknown model '" + std::string(s) + "'");
}

std::size_t ModelSpec::declared_filter_count() const {
  return name == ModelName::cratercnn ? 2 * width : 7 * width;
}

namespace {

// conv [-> batchnorm] -> relu, reading `input`; returns the relu node id.
int conv_unit(Model& m, int input, std::size_t in_ch, std::size_t out_ch, std::size_t k,
              bool bn, RngStream& rng) {
  int id = m.add(std::make_unique<Conv2d>(in_ch, out_ch, k, 1, rng), {input});
  if (bn) id = m.add(std::make_unique<BatchNorm>(out_ch), {id});
  return m.add(std::make_unique<Relu>(), {id});
}

}  // namespace

Model build_cratercnn(std::size_t width, RngStream& rng, bool with_batchnorm, Shape input_shape,
                      std::size_t num_classes) {
  if (width < 1) throw InvalidArgument("cratercnn width must be >= 1");
  if (input_shape.rank() != 3) throw ShapeError("cratercnn input must be [C,H,W]");
  Model m(input_shape, num_classes);
  int x = conv_unit(m, Model::kInput, input_shape[0], width, 4, with_batchnorm, rng);
  x = conv_unit(m, x, width, width, 4, with_batchnorm, rng);
  x = m.add(std::make_unique<Flatten>(), {x});
  m.add(std::make_unique<Dense>(m.output_shape(x)[0], num_classes, rng), {x});
  return m;
}

Model build_mini_inception(std::size_t base_width, bool with_batchnorm, RngStream& rng,
                           Shape input_shape, std::size_t num_classes) {
  if (base_width < 2) throw InvalidArgument("mini_inception base width must be >= 2");
  if (input_shape.rank() != 3) throw ShapeError("mini_inception input must be [C,H,W]");
  const std::size_t w = base_width;
  Model m(input_shape, num_classes);
  int x = conv_unit(m, Model::kInput, input_shape[0], w, 3, with_batchnorm, rng);
  std::size_t channels = w;
  for (int block = 0; block < 2; ++block) {
    int pooled = m.add(std::make_unique<AvgPool>(3, 1), {x});
    int branch_a = conv_unit(m, pooled, channels, w, 1, with_batchnorm, rng);
    int reduce = conv_unit(m, x, channels, w, 1, with_batchnorm, rng);
    int branch_b = conv_unit(m, reduce, w, w, 3, with_batchnorm, rng);
    x = m.add(std::make_unique<Concat>(2), {branch_a, branch_b});
    channels = 2 * w;
  }
  const Shape& s = m.output_shape(x);
  if (s[1] != s[2]) throw ShapeError("mini_inception expects square inputs");
  x = m.add(std::make_unique<AvgPool>(s[1], 1), {x});
  x = m.add(std::make_unique<Flatten>(), {x});
  m.add(std::make_unique<Dense>(channels, num_classes, rng), {x});
  return m;
}

Model build_model(const ModelSpec& spec, RngStream& rng) {
  switch (spec.name) {
    case ModelName::cratercnn:
      return build_cratercnn(spec.width, rng, spec.with_batchnorm, spec.input_shape,
                             spec.num_classes);
    case ModelName::mini_inception:
      return build_mini_inception(spec.width, spec.with_batchnorm, rng, spec.input_shape,
                                  spec.num_classes);
  }
  throw ConfigError("unknown model");
}

}  // namespace randomout
