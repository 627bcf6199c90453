// SPDX-License-Identifier: Apache-2.0
//
// Functional classifiers: parameters are passed explicitly, so the same
// forward pass serves the meta-parameters and any inner-loop adaptation.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saml/param_set.hpp"
#include "saml/serialize.hpp"
#include "saml/tensor.hpp"

namespace saml {

enum class ModelKind : std::uint8_t { mlp = 0, vgg_tiny = 1 };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

// mlp:      plan = layer widths [in, hidden..., 1]; input_shape = {in}.
// vgg_tiny: plan = [conv channels..., dense width]; input_shape = {C, H, W}.
//           Each conv block is conv3x3 -> relu -> maxpool2x2, followed by
//           flatten -> dense(width) -> relu -> dense(1).
struct ModelSpec {
  ModelKind kind = ModelKind::mlp;
  std::vector<std::size_t> plan;
  Shape input_shape;

  static ModelSpec mlp(std::vector<std::size_t> widths);
  static ModelSpec vgg_tiny(Shape input_shape, std::vector<std::size_t> conv_channels = {4, 8},
                            std::size_t dense_width = 32);

  bool operator==(const ModelSpec&) const = default;
};

// Throws SpecError when the layer plan does not chain.
void validate(const ModelSpec& spec);

// Parameter names and shapes in forward order.
std::vector<std::pair<std::string, Shape>> param_layout(const ModelSpec& spec);

struct Batch {
  Tensor features;  // [n, input_shape...]
  Tensor labels;    // [n], values in {0, 1}

  std::size_t size() const { return labels.numel(); }
};

// Throws ShapeError unless features/labels agree and labels are binary.
void validate(const Batch& batch);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ParamSet init_params(const ModelSpec& spec, std::uint64_t seed);

// One logit per example, shape [n].
Tensor forward(const ModelSpec& spec, const ParamSet& params, const Tensor& features);

// Mean BCE of the model's logits on a batch.
Tensor batch_loss(const ModelSpec& spec, const ParamSet& params, const Batch& batch);

void write_model_spec(ByteWriter& w, const ModelSpec& spec);
ModelSpec read_model_spec(ByteReader& r);

}  // namespace saml
