// SPDX-License-Identifier: Apache-2.0
#include "saml/param_set.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "saml/errors.hpp"

namespace saml {

void ParamSet::add(std::string name, Tensor tensor) {
  if (contains(name)) throw SpecError("ParamSet: duplicate name '" + name + "'");
  if (!tensor.defined()) throw ShapeError("ParamSet: undefined tensor for '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw CongruenceError("ParamSet: no parameter named '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

bool ParamSet::congruent(const ParamSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (entries_[i].second.shape() != other.entries_[i].second.shape()) return false;
  }
  return true;
}

ParamSet ParamSet::with_tensors(std::vector<Tensor> tensors) const {
  if (tensors.size() != size()) throw CongruenceError("ParamSet::with_tensors: count mismatch");
  ParamSet out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (tensors[i].shape() != entries_[i].second.shape()) {
      throw CongruenceError("ParamSet::with_tensors: shape mismatch for '" + entries_[i].first + "'");
    }
    out.entries_.emplace_back(entries_[i].first, std::move(tensors[i]));
  }
  return out;
}

ParamSet ParamSet::detached() const {
  ParamSet out;
  for (const auto& [n, t] : entries_) out.entries_.emplace_back(n, t.detach());
  return out;
}

ParamSet ParamSet::as_variables() const {
  ParamSet out;
  for (const auto& [n, t] : entries_) out.entries_.emplace_back(n, t.as_variable());
  return out;
}

bool ParamSet::identical(const ParamSet& other) const {
  if (!congruent(other)) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto a = entries_[i].second.data();
    const auto b = other.entries_[i].second.data();
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

void require_congruent(const ParamSet& a, const ParamSet& b, const char* context) {
  if (a.size() != b.size()) {
    throw CongruenceError(std::string(context) + ": " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + " parameters");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.name(i) != b.name(i) || a[i].shape() != b[i].shape()) {
      throw CongruenceError(std::string(context) + ": entry " + std::to_string(i) + " is '" + a.name(i) +
                            "' " + shape_str(a[i].shape()) + " vs '" + b.name(i) + "' " +
                            shape_str(b[i].shape()));
    }
  }
}

ParamSet grad(const Tensor& output, const ParamSet& wrt, bool create_graph) {
  const auto wrt_tensors = wrt.tensors();
  auto grads = grad(output, std::span<const Tensor>(wrt_tensors), create_graph);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (double v : grads[i].data()) {
      if (!std::isfinite(v)) throw NonFiniteError("grad: non-finite gradient for '" + wrt.name(i) + "'");
    }
  }
  return wrt.with_tensors(std::move(grads));
}

ParamSet finite_diff_grad(const std::function<double(const ParamSet&)>& loss, const ParamSet& params,
                          double eps) {
  if (!(eps > 0.0)) throw SpecError("finite_diff_grad: eps must be positive");
  // Leaf variables, so a loss that differentiates internally (an inner
  // adaptation loop) still sees a graph.
  const ParamSet base = params.as_variables();
  std::vector<Tensor> out;
  for (std::size_t p = 0; p < base.size(); ++p) {
    const Tensor& t = base[p];
    std::vector<double> g(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      auto eval_at = [&](double delta) {
        std::vector<double> v(t.data().begin(), t.data().end());
        v[i] += delta;
        auto tensors = base.tensors();
        tensors[p] = Tensor::variable(t.shape(), std::move(v));
        const double f = loss(base.with_tensors(std::move(tensors)));
        if (!std::isfinite(f)) {
          throw NonFiniteError("finite_diff_grad: loss is non-finite when perturbing '" + base.name(p) + "'");
        }
        return f;
      };
      g[i] = (eval_at(eps) - eval_at(-eps)) / (2.0 * eps);
    }
    out.emplace_back(t.shape(), std::move(g));
  }
  return base.detached().with_tensors(std::move(out));
}

std::uint64_t param_hash(const ParamSet& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : params) {
    mix(name.data(), name.size());
    for (auto e : t.shape()) {
      const std::uint64_t e64 = e;
      mix(&e64, sizeof e64);
    }
    mix(t.data().data(), t.numel() * sizeof(double));
  }
  return h;
}

}  // namespace saml
