// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "saml/param_set.hpp"

namespace saml {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled: applied as lr * weight_decay * theta, outside the moments.
  double weight_decay = 1e-4;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

// One AdamW step. Returns fresh leaf variables; `state` advances only when
// the update succeeds.
ParamSet adamw_step(const ParamSet& params, const ParamSet& grads, AdamState& state, double lr,
                    const AdamOptions& options);

// Cosine decay without restarts: base at step 0, zero at step == total.
double cosine_lr(double base, std::uint64_t step, std::uint64_t total);

}  // namespace saml
