// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "doctest.h"
#include "grad_check.hpp"
#include "saml/backbone.hpp"
#include "saml/episodes.hpp"
#include "saml/errors.hpp"

using namespace saml;
using saml::testing::compare_to_finite_diff;
using saml::testing::random_tensor;

namespace {

Tensor random_labels(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> y(n);
  for (auto& v : y) v = static_cast<double>(rng() % 2);
  return Tensor({n}, std::move(y));
}

// Generic parameters: zero biases can sit exactly on a relu kink, where the
// central difference averages the two one-sided slopes.
ParamSet random_params(const ModelSpec& spec, std::mt19937_64& rng) {
  std::vector<Tensor> values;
  const ParamSet shapes = init_params(spec, 0);
  for (const auto& [name, t] : shapes) values.push_back(random_tensor(t.shape(), rng));
  return shapes.with_tensors(values);
}

}  // namespace

TEST_CASE("init_params is deterministic with zero biases") {
  const auto spec = ModelSpec::mlp({2, 8, 1});
  const ParamSet a = init_params(spec, 7);
  const ParamSet b = init_params(spec, 7);
  CHECK(a.identical(b));
  CHECK_FALSE(a.identical(init_params(spec, 8)));
  CHECK(a.scalar_count() == 2 * 8 + 8 + 8 * 1 + 1);
  for (const auto& [name, t] : a) {
    if (name.ends_with(".bias")) {
      for (double v : t.data()) CHECK(v == 0.0);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape()[0]));
      for (double v : t.data()) CHECK(std::abs(v) <= bound);
    }
  }
}

TEST_CASE("incoherent specs are rejected") {
  CHECK_THROWS_AS(init_params(ModelSpec::mlp({2, 0, 1}), 0), SpecError);
  CHECK_THROWS_AS(init_params(ModelSpec::mlp({2, 8, 2}), 0), SpecError);
  CHECK_THROWS_AS(init_params(ModelSpec::mlp({2}), 0), SpecError);
  auto bad = ModelSpec::mlp({2, 8, 1});
  bad.input_shape = {3};
  CHECK_THROWS_AS(init_params(bad, 0), SpecError);
  CHECK_THROWS_AS(init_params(ModelSpec::vgg_tiny({1, 3, 3}), 0), SpecError);
  CHECK_THROWS_AS(init_params(ModelSpec::vgg_tiny({1, 8}), 0), SpecError);
}

TEST_CASE("forward examples") {
  const auto spec = ModelSpec::mlp({2, 1});
  ParamSet p;
  p.add("dense0.weight", Tensor::variable({2, 1}, {1.0, -1.0}));
  p.add("dense0.bias", Tensor::variable({1}, {0.0}));
  const Tensor logit = forward(spec, p, Tensor({1, 2}, {2.0, 3.0}));
  CHECK(logit.shape() == Shape{1});
  CHECK(logit.item() == -1.0);

  const auto deep = ModelSpec::mlp({3, 5, 4, 1});
  std::vector<Tensor> zeros;
  const ParamSet init = init_params(deep, 1);
  for (const auto& [n, t] : init) zeros.push_back(Tensor::zeros(t.shape()));
  std::mt19937_64 rng(5);
  const Tensor out = forward(deep, init.with_tensors(zeros), random_tensor({6, 3}, rng));
  CHECK(out.shape() == Shape{6});
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("forward rejects incongruent params and misshapen batches") {
  const auto spec = ModelSpec::mlp({3, 4, 1});
  const ParamSet p = init_params(spec, 0);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(forward(spec, init_params(ModelSpec::mlp({3, 5, 1}), 0), random_tensor({2, 3}, rng)),
                  CongruenceError);
  CHECK_THROWS_AS(forward(spec, p, random_tensor({2, 4}, rng)), ShapeError);
  CHECK_THROWS_AS(forward(spec, p, random_tensor({3}, rng)), ShapeError);
}

TEST_CASE("loss gradients match finite differences for both model kinds") {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  std::string where;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng() % 4;
    {
      const auto spec = ModelSpec::mlp({3, 5, 4, 1});
      const Batch batch{random_tensor({n, 3}, rng, -2, 2), random_labels(n, rng)};
      const auto c = compare_to_finite_diff([&](const ParamSet& p) { return batch_loss(spec, p, batch); },
                                            random_params(spec, rng));
      if (c.worst_rel > worst) worst = c.worst_rel, where = "mlp " + c.where;
    }
    {
      const auto spec = ModelSpec::vgg_tiny({1, 6, 7}, {2, 3}, 4);
      const Batch batch{random_tensor({n, 1, 6, 7}, rng, -2, 2), random_labels(n, rng)};
      const auto c = compare_to_finite_diff([&](const ParamSet& p) { return batch_loss(spec, p, batch); },
                                            random_params(spec, rng));
      if (c.worst_rel > worst) worst = c.worst_rel, where = "vgg_tiny " + c.where;
    }
  }
  INFO(where);
  CHECK(worst < 1e-5);
}

TEST_CASE("forward is pure") {
  const auto spec = ModelSpec::vgg_tiny({1, 8, 8});
  const ParamSet p = init_params(spec, 3);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({3, 1, 8, 8}, rng);
  const Tensor a = forward(spec, p, x), b = forward(spec, p, x);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("vgg_tiny accepts the mosaic shape") {
  const auto spec = ModelSpec::vgg_tiny({1, kMosaicRows, kMosaicCols});
  const auto layout = param_layout(spec);
  // Two conv blocks: 68x432 -> 34x216 -> 17x108 with 8 channels.
  CHECK(layout[4].second == Shape{8 * 17 * 108, 32});
  const ParamSet p = init_params(spec, 0);
  std::mt19937_64 rng(1);
  NoGradGuard no_grad;
  const Tensor logits = forward(spec, p, random_tensor({2, 1, kMosaicRows, kMosaicCols}, rng));
  CHECK(logits.shape() == Shape{2});
}

TEST_CASE("model spec record round-trips") {
  for (const auto& spec : {ModelSpec::mlp({8, 32, 1}), ModelSpec::vgg_tiny({1, 68, 432})}) {
    ByteWriter w;
    write_model_spec(w, spec);
    ByteReader r(w.buffer());
    CHECK(read_model_spec(r) == spec);
    CHECK(r.done());
  }
}

TEST_CASE("batch validation") {
  CHECK_THROWS_AS(validate(Batch{Tensor::zeros({3, 2}), Tensor::zeros({2})}), ShapeError);
  CHECK_THROWS_AS(validate(Batch{Tensor::zeros({2, 2}), Tensor({2}, {0.0, 0.5})}), ShapeError);
  CHECK_NOTHROW(validate(Batch{Tensor::zeros({2, 2}), Tensor({2}, {0.0, 1.0})}));
}
