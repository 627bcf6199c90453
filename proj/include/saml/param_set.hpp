// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "saml/tensor.hpp"

namespace saml {

// Ordered, uniquely named collection of tensors. Holds meta-parameters as
// well as their inner-loop adaptations; iteration order is insertion order
// and survives serialization.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  ParamSet() = default;

  void add(std::string name, Tensor tensor);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const Tensor& operator[](std::size_t i) const { return entries_.at(i).second; }
  const Tensor& at(const std::string& name) const;
  const std::string& name(std::size_t i) const { return entries_.at(i).first; }
  bool contains(const std::string& name) const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<Tensor> tensors() const;
  std::size_t scalar_count() const;

  // Same names, order and shapes.
  bool congruent(const ParamSet& other) const;

  // New set with the same names and order holding `tensors`.
  ParamSet with_tensors(std::vector<Tensor> tensors) const;
  ParamSet detached() const;
  // Fresh leaf variables with the current values.
  ParamSet as_variables() const;

  // Bitwise equality of names, shapes and values.
  bool identical(const ParamSet& other) const;

 private:
  std::vector<Entry> entries_;
};

// Throws CongruenceError describing the first difference.
void require_congruent(const ParamSet& a, const ParamSet& b, const char* context);

// Gradient of a scalar with respect to every entry of `wrt`. The result is
// congruent with `wrt`; a non-finite gradient throws NonFiniteError naming
// the parameter.
ParamSet grad(const Tensor& output, const ParamSet& wrt, bool create_graph);

// Central-difference gradient of `loss` around `params`, one scalar at a time.
ParamSet finite_diff_grad(const std::function<double(const ParamSet&)>& loss, const ParamSet& params,
                          double eps);

// FNV-1a over names, shapes and value bits.
std::uint64_t param_hash(const ParamSet& params);

}  // namespace saml
