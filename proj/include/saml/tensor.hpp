// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is an immutable handle onto a graph node. Tensors produced by an
// operation on at least one graph-linked input are themselves graph-linked and
// remember their parents together with a backward rule. Backward rules are
// written in terms of the same operations, so the gradients they produce are
// graph-linked too and can be differentiated again (gradients of gradients).
//
//   Tensor x = Tensor::variable({1}, {3.0});
//   Tensor y = mul(x, x);
//   Tensor dy = grad(y, {x}, /*create_graph=*/true)[0];   // 2x, linked
//   Tensor d2 = grad(mul(dy, dy), {x}, false)[0];         // 8x = 24
//
// Nothing is ever mutated in place: parameter updates build new tensors.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace saml {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {
struct Node;
// Receives the adjoint of the node's output and a mask of which parents need
// a gradient; returns one entry per parent (an empty Tensor where skipped).
using BackwardFn =
    std::function<std::vector<Tensor>(const Tensor& adjoint, const std::vector<bool>& needs)>;
}  // namespace detail

class Tensor {
 public:
  // An empty handle; most operations reject it.
  Tensor() = default;

  // Constant (not graph-linked) tensor.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value);
  // Leaf that gradients can be taken with respect to.
  static Tensor variable(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::span<const double> data() const;
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  // True when this value is linked into a differentiation graph.
  bool requires_grad() const;
  bool is_leaf() const;

  // Same values, no graph handle.
  Tensor detach() const;
  // Same values as a fresh leaf variable.
  Tensor as_variable() const;

  // Identity of the underlying node, for graph bookkeeping and tests.
  const void* id() const { return node_.get(); }

 private:
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            detail::BackwardFn, const char*);
  friend std::vector<Tensor> grad(const Tensor&, std::span<const Tensor>, bool);
  explicit Tensor(std::shared_ptr<const detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const detail::Node> node_;
};

// Builds the output of a primitive. The result is graph-linked only when
// recording is enabled and some parent is graph-linked.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   detail::BackwardFn backward, const char* op_name);

// Disables graph recording on the current thread for its lifetime. Results
// built while a guard is active are constants.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;

// ---- primitives ------------------------------------------------------------
// Shapes must match exactly unless noted; violations throw ShapeError and
// non-finite inputs throw NonFiniteError.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a * s where s holds exactly one element.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// [m,n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
// out[i] = index[i] < 0 ? 0 : x[index[i]]
Tensor gather(const Tensor& x, IndexMap index, Shape out_shape);
// out[index[i]] += x[i]; negative indices are dropped. Adjoint of gather.
Tensor scatter_add(const Tensor& x, IndexMap index, Shape out_shape);
// x [N,C,H,W], weight [O,C,kh,kw] (odd kernel), bias [O]; stride 1, zero
// padding that preserves H and W.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);
// 2x2 window, stride 2, floor on odd extents. x [N,C,H,W].
Tensor maxpool2d(const Tensor& x);
// Mean binary cross-entropy of logits against constant {0,1} labels.
Tensor bce_with_logits(const Tensor& logits, const Tensor& labels);

// ---- differentiation -------------------------------------------------------

// Gradient of a one-element `output` with respect to each tensor in `wrt`.
// Tensors that `output` does not depend on receive zeros. With create_graph the
// returned gradients are graph-linked; without it they are constants.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt, bool create_graph);

inline std::vector<Tensor> grad(const Tensor& output, std::initializer_list<Tensor> wrt,
                                bool create_graph) {
  std::vector<Tensor> v(wrt);
  return grad(output, std::span<const Tensor>(v), create_graph);
}

void check_finite(const Tensor& t, const char* what);

}  // namespace saml
