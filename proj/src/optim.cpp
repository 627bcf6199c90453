// SPDX-License-Identifier: Apache-2.0
#include "saml/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "saml/errors.hpp"

namespace saml {

ParamSet adamw_step(const ParamSet& params, const ParamSet& grads, AdamState& state, double lr,
                    const AdamOptions& o) {
  require_congruent(params, grads, "adamw_step");
  AdamState next = state;
  if (next.m.empty()) {
    for (const auto& [name, t] : params) {
      next.m.emplace_back(t.numel(), 0.0);
      next.v.emplace_back(t.numel(), 0.0);
    }
  }
  next.step += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(next.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(next.step));

  std::vector<Tensor> updated;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto theta = params[p].data();
    const auto g = grads[p].data();
    auto& m = next.m[p];
    auto& v = next.v[p];
    std::vector<double> out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (!std::isfinite(g[i])) throw NonFiniteError("adamw_step: non-finite gradient for '" + params.name(p) + "'");
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      out[i] = theta[i] - lr * o.weight_decay * theta[i] - lr * mhat / (std::sqrt(vhat) + o.eps);
    }
    updated.push_back(Tensor::variable(params[p].shape(), std::move(out)));
  }
  state = std::move(next);
  return params.with_tensors(std::move(updated));
}

double cosine_lr(double base, std::uint64_t step, std::uint64_t total) {
  if (total == 0) return base;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace saml
