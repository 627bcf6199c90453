// SPDX-License-Identifier: Apache-2.0
#include "saml/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "saml/errors.hpp"

namespace saml {

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<Tensor> parents;
  BackwardFn backward;
  const char* op = "leaf";
};
}  // namespace detail

namespace {

thread_local bool g_recording = true;
// Cleared during reverse sweeps so a non-finite gradient surfaces at the
// parameter it belongs to instead of inside some backward primitive.
thread_local bool g_check_finite = true;

struct FiniteChecksOff {
  bool previous = g_check_finite;
  FiniteChecksOff() { g_check_finite = false; }
  ~FiniteChecksOff() { g_check_finite = previous; }
};

const std::vector<double> kEmpty;
const Shape kEmptyShape;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

IndexMap make_index(std::vector<std::int64_t> v) {
  return std::make_shared<const std::vector<std::int64_t>>(std::move(v));
}

// Sum over rows of an [m,n] tensor, expressed as a scatter so that it stays
// differentiable.
Tensor sum_rows(const Tensor& g) {
  const std::size_t m = g.shape()[0], n = g.shape()[1];
  std::vector<std::int64_t> idx(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) idx[i * n + j] = static_cast<std::int64_t>(j);
  return scatter_add(g, make_index(std::move(idx)), {n});
}

Tensor expand_scalar(const Tensor& s, const Shape& shape) {
  return gather(s, make_index(std::vector<std::int64_t>(shape_numel(shape), 0)), shape);
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " elements, got " +
                     std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node_ = std::move(node);
}

Tensor Tensor::zeros(const Shape& shape) { return Tensor(shape, std::vector<double>(shape_numel(shape), 0.0)); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0); }
Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(shape_numel(shape), value));
}
Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::variable(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  std::const_pointer_cast<detail::Node>(t.node_)->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_ ? node_->shape : kEmptyShape; }
std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }
std::span<const double> Tensor::data() const {
  return node_ ? std::span<const double>(node_->data) : std::span<const double>(kEmpty);
}

double Tensor::item() const {
  if (numel() != 1) throw NotScalarError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return !node_ || node_->parents.empty(); }

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  if (!requires_grad()) return *this;
  return Tensor(node_->shape, node_->data);
}

Tensor Tensor::as_variable() const {
  require_defined(*this, "as_variable");
  return variable(node_->shape, node_->data);
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   detail::BackwardFn backward, const char* op_name) {
  Tensor out(std::move(shape), std::move(data));
  if (g_check_finite) {
    for (double v : out.data()) {
      if (!std::isfinite(v)) throw NonFiniteError(std::string(op_name) + ": produced a non-finite value");
    }
  }
  const bool linked = g_recording && std::any_of(parents.begin(), parents.end(),
                                                 [](const Tensor& p) { return p.requires_grad(); });
  if (linked) {
    auto node = std::const_pointer_cast<detail::Node>(out.node_);
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
    node->op = op_name;
  }
  return out;
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool grad_recording_enabled() { return g_recording; }

void check_finite(const Tensor& t, const char* what) {
  if (!g_check_finite) return;
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + ": non-finite input");
  }
}

// ---- primitives ---------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  check_finite(a, "add");
  check_finite(b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make_result(a.shape(), std::move(out), {a, b},
                     [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{g, g}; },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  check_finite(a, "sub");
  check_finite(b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return make_result(a.shape(), std::move(out), {a, b},
                     [](const Tensor& g, const std::vector<bool>& needs) {
                       return std::vector<Tensor>{g, needs[1] ? scale(g, -1.0) : Tensor()};
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  check_finite(a, "mul");
  check_finite(b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b](const Tensor& g, const std::vector<bool>& needs) {
                       return std::vector<Tensor>{needs[0] ? mul(g, b) : Tensor(),
                                                  needs[1] ? mul(g, a) : Tensor()};
                     },
                     "mul");
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  check_finite(a, "scale");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  return make_result(a.shape(), std::move(out), {a},
                     [factor](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{scale(g, factor)};
                     },
                     "scale");
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  require_defined(a, "mul_scalar");
  require_defined(s, "mul_scalar");
  if (s.numel() != 1) throw ShapeError("mul_scalar: scalar operand has shape " + shape_str(s.shape()));
  check_finite(a, "mul_scalar");
  check_finite(s, "mul_scalar");
  const double k = s.at(0);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * k;
  return make_result(a.shape(), std::move(out), {a, s},
                     [a, s](const Tensor& g, const std::vector<bool>& needs) {
                       return std::vector<Tensor>{
                           needs[0] ? mul_scalar(g, s) : Tensor(),
                           needs[1] ? reshape(sum(mul(g, a)), s.shape()) : Tensor()};
                     },
                     "mul_scalar");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  check_finite(a, "matmul");
  check_finite(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b},
                     [a, b](const Tensor& g, const std::vector<bool>& needs) {
                       return std::vector<Tensor>{needs[0] ? matmul(g, transpose(b)) : Tensor(),
                                                  needs[1] ? matmul(transpose(a), g) : Tensor()};
                     },
                     "matmul");
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i * n + j);
  return make_result({n, m}, std::move(out), {a},
                     [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{transpose(g)};
                     },
                     "transpose");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_defined(x, "add_bias");
  require_defined(bias, "add_bias");
  if (x.rank() != 2 || bias.rank() != 1 || x.shape()[1] != bias.shape()[0]) {
    throw ShapeError("add_bias: incompatible shapes " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  }
  check_finite(x, "add_bias");
  check_finite(bias, "add_bias");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i * n + j) + bias.at(j);
  return make_result(x.shape(), std::move(out), {x, bias},
                     [](const Tensor& g, const std::vector<bool>& needs) {
                       return std::vector<Tensor>{g, needs[1] ? sum_rows(g) : Tensor()};
                     },
                     "add_bias");
}

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  check_finite(a, "relu");
  std::vector<double> out(a.numel());
  std::vector<double> mask(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = a.at(i) > 0.0 ? 1.0 : 0.0;
    out[i] = a.at(i) > 0.0 ? a.at(i) : 0.0;
  }
  Tensor gate(a.shape(), std::move(mask));
  return make_result(a.shape(), std::move(out), {a},
                     [gate](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, gate)};
                     },
                     "relu");
}

namespace {
double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
  require_defined(a, "sigmoid");
  check_finite(a, "sigmoid");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a.at(i));
  return make_result(a.shape(), std::move(out), {a},
                     [a](const Tensor& g, const std::vector<bool>&) {
                       // s' = s - s^2, rebuilt from the input so it stays differentiable.
                       const Tensor s = sigmoid(a);
                       return std::vector<Tensor>{mul(g, sub(s, mul(s, s)))};
                     },
                     "sigmoid");
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  check_finite(a, "sum");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_result({}, {acc}, {a},
                     [shape = a.shape()](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{expand_scalar(g, shape)};
                     },
                     "sum");
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a},
                     [from = a.shape()](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{reshape(g, from)};
                     },
                     "reshape");
}

Tensor gather(const Tensor& x, IndexMap index, Shape out_shape) {
  require_defined(x, "gather");
  if (!index || index->size() != shape_numel(out_shape)) {
    throw ShapeError("gather: index length does not match output shape " + shape_str(out_shape));
  }
  check_finite(x, "gather");
  const auto& idx = *index;
  std::vector<double> out(idx.size());
  const auto src = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto j = idx[i];
    if (j >= static_cast<std::int64_t>(src.size())) throw ShapeError("gather: index out of range");
    out[i] = j < 0 ? 0.0 : src[static_cast<std::size_t>(j)];
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [index, from = x.shape()](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{scatter_add(g, index, from)};
                     },
                     "gather");
}

Tensor scatter_add(const Tensor& x, IndexMap index, Shape out_shape) {
  require_defined(x, "scatter_add");
  if (!index || index->size() != x.numel()) {
    throw ShapeError("scatter_add: index length does not match input shape " + shape_str(x.shape()));
  }
  check_finite(x, "scatter_add");
  const auto& idx = *index;
  std::vector<double> out(shape_numel(out_shape), 0.0);
  const auto src = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto j = idx[i];
    if (j < 0) continue;
    if (j >= static_cast<std::int64_t>(out.size())) throw ShapeError("scatter_add: index out of range");
    out[static_cast<std::size_t>(j)] += src[i];
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [index, from = x.shape()](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{gather(g, index, from)};
                     },
                     "scatter_add");
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined(x, "conv2d");
  require_defined(weight, "conv2d");
  require_defined(bias, "conv2d");
  if (x.rank() != 4 || weight.rank() != 4 || bias.rank() != 1 || x.shape()[1] != weight.shape()[1] ||
      bias.shape()[0] != weight.shape()[0] || weight.shape()[2] % 2 == 0 || weight.shape()[3] % 2 == 0) {
    throw ShapeError("conv2d: incompatible shapes x" + shape_str(x.shape()) + " w" +
                     shape_str(weight.shape()) + " b" + shape_str(bias.shape()));
  }
  const std::size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t O = weight.shape()[0], KH = weight.shape()[2], KW = weight.shape()[3];
  const auto ph = static_cast<std::int64_t>(KH / 2), pw = static_cast<std::int64_t>(KW / 2);
  const std::size_t patch = C * KH * KW;

  // im2col: row (n,h,w), column (c,kh,kw); -1 marks zero padding.
  std::vector<std::int64_t> cols(N * H * W * patch);
  std::size_t r = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < KH; ++i)
            for (std::size_t j = 0; j < KW; ++j) {
              const auto hh = static_cast<std::int64_t>(h + i) - ph;
              const auto ww = static_cast<std::int64_t>(w + j) - pw;
              const bool inside = hh >= 0 && ww >= 0 && hh < static_cast<std::int64_t>(H) &&
                                  ww < static_cast<std::int64_t>(W);
              cols[r++] = inside ? static_cast<std::int64_t>(((n * C + c) * H) * W) + hh * static_cast<std::int64_t>(W) + ww
                                 : -1;
            }
  const Tensor patches = gather(x, make_index(std::move(cols)), {N * H * W, patch});
  const Tensor kernel = transpose(reshape(weight, {O, patch}));
  const Tensor rows = add_bias(matmul(patches, kernel), bias);  // [N*H*W, O]

  // [N*H*W, O] -> [N, O, H, W]
  std::vector<std::int64_t> perm(N * O * H * W);
  std::size_t p = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t hw = 0; hw < H * W; ++hw) perm[p++] = static_cast<std::int64_t>((n * H * W + hw) * O + o);
  return gather(rows, make_index(std::move(perm)), {N, O, H, W});
}

Tensor maxpool2d(const Tensor& x) {
  require_defined(x, "maxpool2d");
  if (x.rank() != 4 || x.shape()[2] < 2 || x.shape()[3] < 2) {
    throw ShapeError("maxpool2d: expected [N,C,H,W] with H,W >= 2, got " + shape_str(x.shape()));
  }
  check_finite(x, "maxpool2d");
  const std::size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t OH = H / 2, OW = W / 2;
  std::vector<std::int64_t> idx(N * C * OH * OW);
  const auto src = x.data();
  std::size_t k = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t i = 0; i < OH; ++i)
      for (std::size_t j = 0; j < OW; ++j) {
        std::size_t best = nc * H * W + (2 * i) * W + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t at = nc * H * W + (2 * i + di) * W + (2 * j + dj);
            if (src[at] > src[best]) best = at;
          }
        idx[k++] = static_cast<std::int64_t>(best);
      }
  return gather(x, make_index(std::move(idx)), {N, C, OH, OW});
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& labels) {
  require_defined(logits, "bce_with_logits");
  require_defined(labels, "bce_with_logits");
  if (logits.numel() != labels.numel() || logits.numel() == 0) {
    throw ShapeError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs labels " +
                     shape_str(labels.shape()));
  }
  check_finite(logits, "bce_with_logits");
  check_finite(labels, "bce_with_logits");
  const Tensor y(logits.shape(), std::vector<double>(labels.data().begin(), labels.data().end()));
  const double n = static_cast<double>(logits.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double z = logits.at(i);
    acc += std::max(z, 0.0) - z * y.at(i) + std::log1p(std::exp(-std::abs(z)));
  }
  return make_result({}, {acc / n}, {logits},
                     [logits, y, n](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul_scalar(scale(sub(sigmoid(logits), y), 1.0 / n), g)};
                     },
                     "bce_with_logits");
}

// ---- reverse sweep -------------------------------------------------------------

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt, bool create_graph) {
  require_defined(output, "grad");
  if (output.numel() != 1) {
    throw NotScalarError("grad: output of shape " + shape_str(output.shape()) + " is not a scalar");
  }
  std::vector<Tensor> result;
  result.reserve(wrt.size());
  auto zeros_like_wrt = [&] {
    for (const auto& w : wrt) result.push_back(Tensor::zeros(w.shape()));
    return result;
  };
  if (!output.requires_grad()) return zeros_like_wrt();

  using NodeP = const detail::Node*;
  std::unordered_map<NodeP, bool> is_target;
  for (const auto& w : wrt) is_target[w.node_.get()] = true;

  // Post-order over graph-linked nodes: parents before children.
  std::vector<NodeP> order;
  std::unordered_map<NodeP, bool> relevant;
  {
    std::unordered_map<NodeP, bool> visited;
    std::vector<std::pair<NodeP, std::size_t>> stack{{output.node_.get(), 0}};
    visited[output.node_.get()] = true;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        NodeP parent = node->parents[next++].node_.get();
        if (parent->requires_grad && !visited[parent]) {
          visited[parent] = true;
          stack.emplace_back(parent, 0);
        }
        continue;
      }
      bool rel = is_target.count(node) > 0;
      for (const auto& p : node->parents) rel = rel || (p.requires_grad() && relevant[p.node_.get()]);
      relevant[node] = rel;
      order.push_back(node);
      stack.pop_back();
    }
  }
  if (!relevant[output.node_.get()]) return zeros_like_wrt();

  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace();
  FiniteChecksOff unchecked;

  std::unordered_map<NodeP, Tensor> adjoint;
  adjoint[output.node_.get()] = Tensor::ones(output.shape());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeP node = *it;
    auto found = adjoint.find(node);
    if (found == adjoint.end() || !node->backward) continue;
    std::vector<bool> needs(node->parents.size());
    bool any = false;
    for (std::size_t i = 0; i < needs.size(); ++i) {
      const auto& p = node->parents[i];
      needs[i] = p.requires_grad() && relevant[p.node_.get()];
      any = any || needs[i];
    }
    if (!any) continue;
    const Tensor g = found->second;
    std::vector<Tensor> parent_grads = node->backward(g, needs);
    for (std::size_t i = 0; i < needs.size(); ++i) {
      if (!needs[i]) continue;
      NodeP parent = node->parents[i].node_.get();
      auto slot = adjoint.find(parent);
      if (slot == adjoint.end()) {
        adjoint.emplace(parent, parent_grads[i]);
      } else {
        slot->second = add(slot->second, parent_grads[i]);
      }
    }
  }

  for (const auto& w : wrt) {
    auto found = adjoint.find(w.node_.get());
    if (found == adjoint.end()) {
      result.push_back(Tensor::zeros(w.shape()));
    } else {
      result.push_back(create_graph ? found->second : found->second.detach());
    }
  }
  return result;
}

}  // namespace saml
