// SPDX-License-Identifier: Apache-2.0
#include "saml/backbone.hpp"

#include <cmath>
#include <random>

#include "saml/errors.hpp"

namespace saml {

std::string to_string(ModelKind kind) { return kind == ModelKind::mlp ? "mlp" : "vgg_tiny"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "mlp") return ModelKind::mlp;
  if (s == "vgg_tiny") return ModelKind::vgg_tiny;
  throw SpecError("unknown model kind '" + s + "'");
}

ModelSpec ModelSpec::mlp(std::vector<std::size_t> widths) {
  ModelSpec s;
  s.kind = ModelKind::mlp;
  if (!widths.empty()) s.input_shape = {widths.front()};
  s.plan = std::move(widths);
  return s;
}

ModelSpec ModelSpec::vgg_tiny(Shape input_shape, std::vector<std::size_t> conv_channels,
                              std::size_t dense_width) {
  ModelSpec s;
  s.kind = ModelKind::vgg_tiny;
  s.plan = std::move(conv_channels);
  s.plan.push_back(dense_width);
  s.input_shape = std::move(input_shape);
  return s;
}

namespace {

struct ConvGeometry {
  std::size_t channels, height, width;
};

// Spatial size after the conv blocks; throws SpecError when a pool would
// receive less than a 2x2 map.
ConvGeometry conv_output(const ModelSpec& spec) {
  ConvGeometry g{spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]};
  for (std::size_t b = 0; b + 1 < spec.plan.size(); ++b) {
    if (g.height < 2 || g.width < 2) {
      throw SpecError("vgg_tiny: feature map " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                      " too small for conv block " + std::to_string(b));
    }
    g = {spec.plan[b], g.height / 2, g.width / 2};
  }
  return g;
}

}  // namespace

void validate(const ModelSpec& spec) {
  for (auto w : spec.plan)
    if (w == 0) throw SpecError("model spec: zero width in plan");
  if (spec.kind == ModelKind::mlp) {
    if (spec.plan.size() < 2) throw SpecError("mlp: plan needs at least input and output widths");
    if (spec.plan.back() != 1) throw SpecError("mlp: final layer must emit exactly one logit");
    if (spec.input_shape != Shape{spec.plan.front()}) {
      throw SpecError("mlp: input shape " + shape_str(spec.input_shape) + " does not match first width " +
                      std::to_string(spec.plan.front()));
    }
    return;
  }
  if (spec.input_shape.size() != 3) throw SpecError("vgg_tiny: input shape must be {C,H,W}");
  for (auto e : spec.input_shape)
    if (e == 0) throw SpecError("vgg_tiny: zero input extent");
  if (spec.plan.size() < 2) throw SpecError("vgg_tiny: plan needs at least one conv block and a dense width");
  conv_output(spec);
}

std::vector<std::pair<std::string, Shape>> param_layout(const ModelSpec& spec) {
  validate(spec);
  std::vector<std::pair<std::string, Shape>> out;
  if (spec.kind == ModelKind::mlp) {
    for (std::size_t l = 0; l + 1 < spec.plan.size(); ++l) {
      const auto tag = "dense" + std::to_string(l);
      out.emplace_back(tag + ".weight", Shape{spec.plan[l], spec.plan[l + 1]});
      out.emplace_back(tag + ".bias", Shape{spec.plan[l + 1]});
    }
    return out;
  }
  std::size_t in_ch = spec.input_shape[0];
  for (std::size_t b = 0; b + 1 < spec.plan.size(); ++b) {
    const auto tag = "conv" + std::to_string(b);
    out.emplace_back(tag + ".weight", Shape{spec.plan[b], in_ch, 3, 3});
    out.emplace_back(tag + ".bias", Shape{spec.plan[b]});
    in_ch = spec.plan[b];
  }
  const auto g = conv_output(spec);
  const std::size_t flat = g.channels * g.height * g.width;
  const std::size_t width = spec.plan.back();
  out.emplace_back("dense0.weight", Shape{flat, width});
  out.emplace_back("dense0.bias", Shape{width});
  out.emplace_back("dense1.weight", Shape{width, 1});
  out.emplace_back("dense1.bias", Shape{1});
  return out;
}

void validate(const Batch& batch) {
  if (!batch.features.defined() || !batch.labels.defined()) throw ShapeError("batch: undefined tensors");
  if (batch.labels.rank() != 1 || batch.features.rank() < 1 ||
      batch.features.shape()[0] != batch.labels.shape()[0]) {
    throw ShapeError("batch: features " + shape_str(batch.features.shape()) + " vs labels " +
                     shape_str(batch.labels.shape()));
  }
  for (double y : batch.labels.data())
    if (y != 0.0 && y != 1.0) throw ShapeError("batch: labels must be exactly 0 or 1");
}

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet params;
  for (auto& [name, shape] : param_layout(spec)) {
    std::vector<double> values(shape_numel(shape), 0.0);
    if (shape.size() > 1) {
      // Fan-in: every extent except the output one.
      const std::size_t fan_in = spec.kind == ModelKind::vgg_tiny && shape.size() == 4
                                     ? shape[1] * shape[2] * shape[3]
                                     : shape[0];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : values) v = dist(rng);
    }
    params.add(name, Tensor::variable(shape, std::move(values)));
  }
  return params;
}

namespace {

void check_params(const ModelSpec& spec, const ParamSet& params) {
  const auto layout = param_layout(spec);
  if (layout.size() != params.size()) {
    throw CongruenceError("forward: model expects " + std::to_string(layout.size()) + " parameters, got " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].first != params.name(i) || layout[i].second != params[i].shape()) {
      throw CongruenceError("forward: parameter " + std::to_string(i) + " should be '" + layout[i].first + "' " +
                            shape_str(layout[i].second) + ", got '" + params.name(i) + "' " +
                            shape_str(params[i].shape()));
    }
  }
}

}  // namespace

Tensor forward(const ModelSpec& spec, const ParamSet& params, const Tensor& features) {
  check_params(spec, params);
  const auto& fs = features.shape();
  if (fs.size() != spec.input_shape.size() + 1 || !std::equal(spec.input_shape.begin(), spec.input_shape.end(), fs.begin() + 1)) {
    throw ShapeError("forward: features " + shape_str(fs) + " do not match input shape " +
                     shape_str(spec.input_shape));
  }
  const std::size_t n = fs[0];
  Tensor h = features;
  std::size_t p = 0;
  if (spec.kind == ModelKind::vgg_tiny) {
    for (std::size_t b = 0; b + 1 < spec.plan.size(); ++b) {
      h = maxpool2d(relu(conv2d(h, params[p], params[p + 1])));
      p += 2;
    }
    h = reshape(h, {n, h.numel() / n});
  }
  const std::size_t dense_layers = (params.size() - p) / 2;
  for (std::size_t l = 0; l < dense_layers; ++l, p += 2) {
    h = add_bias(matmul(h, params[p]), params[p + 1]);
    if (l + 1 < dense_layers) h = relu(h);
  }
  return reshape(h, {n});
}

Tensor batch_loss(const ModelSpec& spec, const ParamSet& params, const Batch& batch) {
  return bce_with_logits(forward(spec, params, batch.features), batch.labels);
}

void write_model_spec(ByteWriter& w, const ModelSpec& spec) {
  w.u8(static_cast<std::uint8_t>(spec.kind));
  w.u64(spec.plan.size());
  for (auto v : spec.plan) w.u64(v);
  w.u64(spec.input_shape.size());
  for (auto v : spec.input_shape) w.u64(v);
}

ModelSpec read_model_spec(ByteReader& r) {
  ModelSpec s;
  const auto tag = r.u8();
  if (tag > 1) throw FormatError("model spec: unknown kind tag " + std::to_string(tag));
  s.kind = static_cast<ModelKind>(tag);
  const auto np = r.u64();
  if (np > 64) throw FormatError("model spec: plan too long");
  s.plan.resize(np);
  for (auto& v : s.plan) v = r.u64();
  const auto ns = r.u64();
  if (ns > 16) throw FormatError("model spec: input rank too large");
  s.input_shape.resize(ns);
  for (auto& v : s.input_shape) v = r.u64();
  validate(s);
  return s;
}

}  // namespace saml
