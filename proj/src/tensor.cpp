#include "oa/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "oa/rng.hpp"

namespace oa {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

std::uint64_t next_seq() noexcept {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

}  // namespace detail

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor shape " + shape_string(shape) + " has a zero dimension");
  }
}

NodePtr new_node(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  n->seq = detail::next_seq();
  return n;
}

// Builds an op result; the graph edge is kept only when some input needs grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<NodePtr> inputs, std::function<void(Node&)> backward) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in->requires_grad;
  auto n = new_node(std::move(shape), std::move(data), needs);
  n->op = op;
  if (needs) {
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(n));
}

std::size_t norm_axis(std::ptrdiff_t axis, std::size_t rank, const char* op) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  if (axis < -r || axis >= r) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

void require(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

// Right-aligned broadcast of two shapes with per-dimension strides (0 where an
// operand is broadcast).
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Broadcast p;
  p.out.assign(rank, 1);
  p.stride_a.assign(rank, 0);
  p.stride_b.assign(rank, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t d = rank - 1 - k;
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument(std::string(op) + ": shapes " + shape_string(a) + " and " +
                                  shape_string(b) + " are not broadcastable");
    }
    p.out[d] = std::max(da, db);
    p.stride_a[d] = da == 1 ? 0 : sa;
    p.stride_b[d] = db == 1 ? 0 : sb;
    sa *= da;
    sb *= db;
  }
  return p;
}

template <class F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  const std::size_t rank = p.out.size();
  const std::size_t total = shape_numel(p.out);
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t last = rank - 1;
  const std::size_t inner = p.out[last];
  const std::size_t ia_step = p.stride_a[last], ib_step = p.stride_b[last];
  for (std::size_t o = 0; o < total; o += inner) {
    std::size_t xa = ia, xb = ib;
    for (std::size_t j = 0; j < inner; ++j, xa += ia_step, xb += ib_step) f(o + j, xa, xb);
    for (std::size_t d = last; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * p.out[d];
      ib -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp kind) {
  const char* name = kind == BinOp::kAdd ? "add" : kind == BinOp::kSub ? "sub" : "mul";
  require(a, name);
  require(b, name);
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), name));
  std::vector<double> out(shape_numel(plan->out));
  const auto ad = a.data();
  const auto bd = b.data();
  switch (kind) {
    case BinOp::kAdd:
      for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = ad[i] + bd[j]; });
      break;
    case BinOp::kSub:
      for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = ad[i] - bd[j]; });
      break;
    case BinOp::kMul:
      for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = ad[i] * bd[j]; });
      break;
  }
  Shape shape = plan->out;
  return make_result(name, std::move(shape), std::move(out), {a.node(), b.node()}, [plan, kind](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const auto& g = self.grad;
    if (na.requires_grad) {
      auto& ga = na.ensure_grad();
      if (kind == BinOp::kMul) {
        const auto& bd = nb.data;
        for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * bd[j]; });
      } else {
        for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += g[o]; });
      }
    }
    if (nb.requires_grad) {
      auto& gb = nb.ensure_grad();
      if (kind == BinOp::kMul) {
        const auto& ad = na.data;
        for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * ad[i]; });
      } else if (kind == BinOp::kAdd) {
        for_each_broadcast(*plan, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += g[o]; });
      } else {
        for_each_broadcast(*plan, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] -= g[o]; });
      }
    }
  });
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  check_shape(shape);
  const std::size_t n = shape_numel(shape);
  node_ = new_node(std::move(shape), std::vector<double>(n, fill), requires_grad);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor shape " + shape_string(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  node_ = new_node(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) {
  Tensor t;
  t.node_ = new_node({}, {value}, false);
  return t;
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  require(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::dim(std::ptrdiff_t axis) const { return shape()[norm_axis(axis, rank(), "dim")]; }

std::span<const double> Tensor::data() const {
  require(*this, "data");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  require(*this, "data");
  return node_->data;
}

std::span<const double> Tensor::grad() const {
  require(*this, "grad");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  require(*this, "grad");
  return node_->ensure_grad();
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  require(*this, "set_requires_grad");
  if (!node_->is_leaf()) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = value;
}

void Tensor::zero_grad() {
  require(*this, "zero_grad");
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw std::invalid_argument("at(): index rank mismatch for " + shape_string(s));
  std::size_t flat = 0;
  std::size_t d = 0;
  for (std::size_t i : index) {
    if (i >= s[d]) throw std::out_of_range("at(): index out of range for " + shape_string(s));
    flat = flat * s[d] + i;
    ++d;
  }
  return node_->data[flat];
}

void Tensor::backward() const {
  require(*this, "backward");
  if (numel() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_string(shape()));
  }
  if (!node_->requires_grad) throw std::logic_error("backward(): loss does not depend on any parameter");

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  node_->ensure_grad()[0] += 1.0;
  for (Node* n : order) {
    if (!n->is_leaf()) n->backward(*n);
  }
}

Tensor Tensor::detach() const {
  require(*this, "detach");
  Tensor t;
  t.node_ = new_node(node_->shape, node_->data, false);
  return t;
}

const char* Tensor::op_name() const {
  require(*this, "op_name");
  return node_->op;
}

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul); }

Tensor scale(const Tensor& x, double factor) {
  require(x, "scale");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return make_result("scale", x.shape(), std::move(out), {x.node()}, [factor](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  require(x, "relu");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_result("relu", x.shape(), std::move(out), {x.node()}, [](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.data[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

// ---- linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a, "matmul");
  require(b, "matmul");
  if (a.rank() < 2 || b.rank() < 2 || a.dim(-1) != b.dim(-2)) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                                shape_string(b.shape()));
  }
  const std::size_t p = a.dim(-2), q = a.dim(-1), r = b.dim(-1);
  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Broadcast batch;
  try {
    batch = plan_broadcast(batch_a, batch_b, "matmul");
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("matmul: batch dimensions of " + shape_string(a.shape()) + " and " +
                                shape_string(b.shape()) + " are not broadcastable");
  }
  auto plan = std::make_shared<Broadcast>(std::move(batch));
  Shape out_shape = plan->out;
  out_shape.push_back(p);
  out_shape.push_back(r);
  std::vector<double> out(shape_numel(out_shape), 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for_each_broadcast(*plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    const double* A = ad.data() + ia * p * q;
    const double* B = bd.data() + ib * q * r;
    double* C = out.data() + o * p * r;
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t k = 0; k < q; ++k) {
        const double aik = A[i * q + k];
        for (std::size_t j = 0; j < r; ++j) C[i * r + j] += aik * B[k * r + j];
      }
    }
  });
  return make_result("matmul", std::move(out_shape), std::move(out), {a.node(), b.node()},
                     [plan, p, q, r](Node& self) {
                       Node& na = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       double* ga = na.requires_grad ? na.ensure_grad().data() : nullptr;
                       double* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
                       for_each_broadcast(*plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                         const double* A = na.data.data() + ia * p * q;
                         const double* B = nb.data.data() + ib * q * r;
                         const double* G = self.grad.data() + o * p * r;
                         if (ga) {
                           double* GA = ga + ia * p * q;
                           for (std::size_t i = 0; i < p; ++i)
                             for (std::size_t k = 0; k < q; ++k) {
                               double acc = 0.0;
                               for (std::size_t j = 0; j < r; ++j) acc += G[i * r + j] * B[k * r + j];
                               GA[i * q + k] += acc;
                             }
                         }
                         if (gb) {
                           double* GB = gb + ib * q * r;
                           for (std::size_t i = 0; i < p; ++i)
                             for (std::size_t k = 0; k < q; ++k) {
                               const double aik = A[i * q + k];
                               for (std::size_t j = 0; j < r; ++j) GB[k * r + j] += aik * G[i * r + j];
                             }
                         }
                       });
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(x, "linear");
  require(weight, "linear");
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(1)) {
    throw std::invalid_argument("linear: input " + shape_string(x.shape()) + " does not match weight " +
                                shape_string(weight.shape()));
  }
  const std::size_t in = weight.dim(1), out_dim = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw std::invalid_argument("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                                shape_string(weight.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<double> out(rows * out_dim);
  const double* X = x.data().data();
  const double* W = weight.data().data();
  const double* B = has_bias ? bias.data().data() : nullptr;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X + r * in;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wo = W + o * in;
      double acc = B ? B[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
      out[r * out_dim + o] = acc;
    }
  }
  std::vector<NodePtr> inputs{x.node(), weight.node()};
  if (has_bias) inputs.push_back(bias.node());
  return make_result("linear", std::move(shape), std::move(out), std::move(inputs),
                     [rows, in, out_dim, has_bias](Node& self) {
                       Node& nx = *self.inputs[0];
                       Node& nw = *self.inputs[1];
                       const double* G = self.grad.data();
                       if (nx.requires_grad) {
                         double* GX = nx.ensure_grad().data();
                         const double* W = nw.data.data();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t o = 0; o < out_dim; ++o) {
                             const double g = G[r * out_dim + o];
                             if (g == 0.0) continue;
                             const double* wo = W + o * in;
                             double* gx = GX + r * in;
                             for (std::size_t i = 0; i < in; ++i) gx[i] += g * wo[i];
                           }
                       }
                       if (nw.requires_grad) {
                         double* GW = nw.ensure_grad().data();
                         const double* X = nx.data.data();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t o = 0; o < out_dim; ++o) {
                             const double g = G[r * out_dim + o];
                             if (g == 0.0) continue;
                             const double* xr = X + r * in;
                             double* gw = GW + o * in;
                             for (std::size_t i = 0; i < in; ++i) gw[i] += g * xr[i];
                           }
                       }
                       if (has_bias && self.inputs[2]->requires_grad) {
                         auto& gb = self.inputs[2]->ensure_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t o = 0; o < out_dim; ++o) gb[o] += G[r * out_dim + o];
                       }
                     });
}

// ---- reductions and normalization ------------------------------------------------

namespace {

// Splits a shape around `axis` into (outer, extent, inner) loop sizes.
struct AxisLoop {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisLoop axis_loop(const Shape& s, std::size_t axis) {
  AxisLoop l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= s[i];
  l.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

}  // namespace

Tensor softmax(const Tensor& x, std::ptrdiff_t axis) {
  require(x, "softmax");
  const std::size_t ax = norm_axis(axis, x.rank(), "softmax");
  const auto xd = x.data();
  for (double v : xd) {
    if (std::isnan(v)) throw std::domain_error("softmax: NaN in input of shape " + shape_string(x.shape()));
  }
  const AxisLoop l = axis_loop(x.shape(), ax);
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.extent * l.inner + in;
      double mx = -INFINITY;
      for (std::size_t e = 0; e < l.extent; ++e) mx = std::max(mx, xd[base + e * l.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < l.extent; ++e) {
        const double v = std::exp(xd[base + e * l.inner] - mx);
        out[base + e * l.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < l.extent; ++e) out[base + e * l.inner] /= total;
    }
  return make_result("softmax", x.shape(), std::move(out), {x.node()}, [l](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    const auto& y = self.data;
    const auto& dy = self.grad;
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t in = 0; in < l.inner; ++in) {
        const std::size_t base = o * l.extent * l.inner + in;
        double dot = 0.0;
        for (std::size_t e = 0; e < l.extent; ++e) dot += dy[base + e * l.inner] * y[base + e * l.inner];
        for (std::size_t e = 0; e < l.extent; ++e) {
          const std::size_t i = base + e * l.inner;
          g[i] += y[i] * (dy[i] - dot);
        }
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(x, "layer_norm");
  require(gain, "layer_norm");
  require(bias, "layer_norm");
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t n = x.dim(-1);
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw std::invalid_argument("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                                shape_string(bias.shape()) + " do not match input " + shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  auto xhat = std::make_shared<std::vector<double>>(xd.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xr[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (xr[i] - mean) * is;
      (*xhat)[r * n + i] = h;
      out[r * n + i] = h * gd[i] + bd[i];
    }
  }
  return make_result("layer_norm", x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
                     [rows, n, xhat, inv_std](Node& self) {
                       Node& nx = *self.inputs[0];
                       Node& ng = *self.inputs[1];
                       Node& nb = *self.inputs[2];
                       const auto& dy = self.grad;
                       if (ng.requires_grad) {
                         auto& gg = ng.ensure_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < n; ++i) gg[i] += dy[r * n + i] * (*xhat)[r * n + i];
                       }
                       if (nb.requires_grad) {
                         auto& gb = nb.ensure_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < n; ++i) gb[i] += dy[r * n + i];
                       }
                       if (nx.requires_grad) {
                         auto& gx = nx.ensure_grad();
                         const double nn = static_cast<double>(n);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double sum_d = 0.0, sum_dh = 0.0;
                           for (std::size_t i = 0; i < n; ++i) {
                             const double d = dy[r * n + i] * ng.data[i];
                             sum_d += d;
                             sum_dh += d * (*xhat)[r * n + i];
                           }
                           const double is = (*inv_std)[r];
                           for (std::size_t i = 0; i < n; ++i) {
                             const double d = dy[r * n + i] * ng.data[i];
                             gx[r * n + i] += is / nn * (nn * d - sum_d - (*xhat)[r * n + i] * sum_dh);
                           }
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, double p, Rng* rng, bool training) {
  require(x, "dropout");
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  if (rng == nullptr) throw std::invalid_argument("dropout: training mode needs an Rng");
  const double keep = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng->uniform() < p ? 0.0 : keep;
    out[i] *= (*mask)[i];
  }
  return make_result("dropout", x.shape(), std::move(out), {x.node()}, [mask](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor sum(const Tensor& x) {
  require(x, "sum");
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result("sum", {}, {total}, {x.node()}, [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor sum_axis(const Tensor& x, std::ptrdiff_t axis, bool keepdim) {
  require(x, "sum_axis");
  const std::size_t ax = norm_axis(axis, x.rank(), "sum_axis");
  const AxisLoop l = axis_loop(x.shape(), ax);
  Shape shape = x.shape();
  if (keepdim) {
    shape[ax] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  const auto xd = x.data();
  std::vector<double> out(l.outer * l.inner, 0.0);
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t e = 0; e < l.extent; ++e) {
      const double* src = xd.data() + (o * l.extent + e) * l.inner;
      double* dst = out.data() + o * l.inner;
      for (std::size_t in = 0; in < l.inner; ++in) dst[in] += src[in];
    }
  return make_result("sum_axis", std::move(shape), std::move(out), {x.node()}, [l](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t e = 0; e < l.extent; ++e) {
        double* dst = g.data() + (o * l.extent + e) * l.inner;
        const double* src = self.grad.data() + o * l.inner;
        for (std::size_t in = 0; in < l.inner; ++in) dst[in] += src[in];
      }
  });
}

// ---- shape manipulation ----------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, std::ptrdiff_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no tensors");
  for (const auto& t : parts) require(t, "concat");
  const Shape& first = parts[0].shape();
  const std::size_t ax = norm_axis(axis, first.size(), "concat");
  Shape shape = first;
  shape[ax] = 0;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == ax || s[i] == first[i];
    if (!ok) {
      throw std::invalid_argument("concat: shape " + shape_string(s) + " incompatible with " +
                                  shape_string(first) + " along axis " + std::to_string(ax));
    }
    shape[ax] += s[ax];
  }
  const AxisLoop l = axis_loop(shape, ax);
  std::vector<std::size_t> widths;
  std::vector<NodePtr> inputs;
  for (const auto& t : parts) {
    widths.push_back(t.dim(static_cast<std::ptrdiff_t>(ax)) * l.inner);
    inputs.push_back(t.node());
  }
  const std::size_t row = l.extent * l.inner;
  std::vector<double> out(shape_numel(shape));
  for (std::size_t o = 0; o < l.outer; ++o) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const double* src = parts[k].data().data() + o * widths[k];
      std::copy(src, src + widths[k], out.data() + o * row + offset);
      offset += widths[k];
    }
  }
  return make_result("concat", std::move(shape), std::move(out), std::move(inputs),
                     [widths, row, outer = l.outer](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                         Node& in = *self.inputs[k];
                         if (in.requires_grad) {
                           auto& g = in.ensure_grad();
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + o * row + offset;
                             for (std::size_t i = 0; i < widths[k]; ++i) g[o * widths[k] + i] += src[i];
                           }
                         }
                         offset += widths[k];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(x, "reshape");
  check_shape(shape);
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x.node()}, [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  require(x, "transpose");
  if (x.rank() < 2) throw std::invalid_argument("transpose: needs rank >= 2, got " + shape_string(x.shape()));
  const std::size_t rows = x.dim(-2), cols = x.dim(-1);
  const std::size_t batch = x.numel() / (rows * cols);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[b * rows * cols + j * rows + i] = xd[b * rows * cols + i * cols + j];
  return make_result("transpose", std::move(shape), std::move(out), {x.node()}, [batch, rows, cols](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          g[b * rows * cols + i * cols + j] += self.grad[b * rows * cols + j * rows + i];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require(x, "gather_rows");
  if (x.rank() < 1) throw std::invalid_argument("gather_rows: scalar input");
  if (rows.empty()) throw std::invalid_argument("gather_rows: empty row selection");
  const std::size_t n = x.dim(0);
  const std::size_t width = x.numel() / n;
  for (std::size_t r : rows) {
    if (r >= n) {
      throw std::out_of_range("gather_rows: row " + std::to_string(r) + " out of range for " +
                              shape_string(x.shape()));
    }
  }
  Shape shape = x.shape();
  shape[0] = rows.size();
  std::vector<double> out(rows.size() * width);
  const auto xd = x.data();
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy(xd.begin() + rows[k] * width, xd.begin() + (rows[k] + 1) * width, out.begin() + k * width);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result("gather_rows", std::move(shape), std::move(out), {x.node()},
                     [idx = std::move(idx), width](Node& self) {
                       auto& g = self.inputs[0]->ensure_grad();
                       for (std::size_t k = 0; k < idx.size(); ++k)
                         for (std::size_t i = 0; i < width; ++i) g[idx[k] * width + i] += self.grad[k * width + i];
                     });
}

// ---- dynamic convolution ----------------------------------------------------------------

Tensor conv1d_dynamic(const Tensor& input, const Tensor& filters, const Tensor& bias, std::size_t stride,
                      ConvPairing pairing) {
  require(input, "conv1d_dynamic");
  require(filters, "conv1d_dynamic");
  require(bias, "conv1d_dynamic");
  if (input.rank() != 2 || filters.rank() != 3 || bias.rank() != 2) {
    throw std::invalid_argument("conv1d_dynamic: expected input [rows,L], filters [G,F,S], bias [G,F|1]; got " +
                                shape_string(input.shape()) + ", " + shape_string(filters.shape()) + ", " +
                                shape_string(bias.shape()));
  }
  const std::size_t rows = input.dim(0), len = input.dim(1);
  const std::size_t groups = filters.dim(0), n_filters = filters.dim(1), size = filters.dim(2);
  if (stride == 0 || size != stride) {
    throw std::invalid_argument("conv1d_dynamic: filter size " + std::to_string(size) + " must equal stride " +
                                std::to_string(stride));
  }
  if (len % stride != 0) {
    throw std::invalid_argument("conv1d_dynamic: input length " + std::to_string(len) +
                                " is not divisible by stride " + std::to_string(stride));
  }
  if (bias.dim(0) != groups || (bias.dim(1) != n_filters && bias.dim(1) != 1)) {
    throw std::invalid_argument("conv1d_dynamic: bias " + shape_string(bias.shape()) + " does not match filters " +
                                shape_string(filters.shape()));
  }
  const bool row_wise = pairing == ConvPairing::kRowWise;
  if (row_wise && groups != rows) {
    throw std::invalid_argument("conv1d_dynamic: row-wise pairing needs one filter group per input row, got " +
                                shape_string(input.shape()) + " and " + shape_string(filters.shape()));
  }
  const std::size_t windows = len / stride;
  const std::size_t width = n_filters * windows;
  const std::size_t bias_stride = bias.dim(1);
  Shape shape = row_wise ? Shape{rows, width} : Shape{rows, groups, width};
  const double* X = input.data().data();
  const double* Fw = filters.data().data();
  const double* Bw = bias.data().data();
  std::vector<double> out(shape_numel(shape));

  // (row, group) pairs visited; the output block for pair k starts at k * width.
  auto for_pairs = [rows, groups, row_wise](auto&& f) {
    if (row_wise) {
      for (std::size_t r = 0; r < rows; ++r) f(r, r, r);
    } else {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t g = 0; g < groups; ++g) f(r * groups + g, r, g);
    }
  };
  for_pairs([&](std::size_t k, std::size_t r, std::size_t g) {
    const double* xr = X + r * len;
    double* o = out.data() + k * width;
    for (std::size_t f = 0; f < n_filters; ++f) {
      const double* w = Fw + (g * n_filters + f) * size;
      const double b = Bw[g * bias_stride + (bias_stride == 1 ? 0 : f)];
      for (std::size_t win = 0; win < windows; ++win) {
        double acc = b;
        for (std::size_t t = 0; t < size; ++t) acc += w[t] * xr[win * stride + t];
        o[f * windows + win] = acc;
      }
    }
  });

  return make_result(
      "conv1d_dynamic", std::move(shape), std::move(out), {input.node(), filters.node(), bias.node()},
      [=](Node& self) {
        Node& ni = *self.inputs[0];
        Node& nf = *self.inputs[1];
        Node& nb = *self.inputs[2];
        double* gi = ni.requires_grad ? ni.ensure_grad().data() : nullptr;
        double* gf = nf.requires_grad ? nf.ensure_grad().data() : nullptr;
        double* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
        const double* X = ni.data.data();
        const double* Fw = nf.data.data();
        for_pairs([&](std::size_t k, std::size_t r, std::size_t g) {
          const double* G = self.grad.data() + k * width;
          for (std::size_t f = 0; f < n_filters; ++f) {
            const std::size_t fo = (g * n_filters + f) * size;
            for (std::size_t win = 0; win < windows; ++win) {
              const double dy = G[f * windows + win];
              if (gb) gb[g * bias_stride + (bias_stride == 1 ? 0 : f)] += dy;
              for (std::size_t t = 0; t < size; ++t) {
                const std::size_t xi = r * len + win * stride + t;
                if (gi) gi[xi] += dy * Fw[fo + t];
                if (gf) gf[fo + t] += dy * X[xi];
              }
            }
          }
        });
      });
}

// ---- loss --------------------------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require(logits, "cross_entropy");
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw std::invalid_argument("cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  const std::size_t m = logits.dim(0), c = logits.dim(1);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(c) + ")");
    }
  }
  const auto z = logits.data();
  auto probs = std::make_shared<std::vector<double>>(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* zi = z.data() + i * c;
    const double mx = *std::max_element(zi, zi + c);
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += std::exp(zi[k] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t k = 0; k < c; ++k) (*probs)[i * c + k] = std::exp(zi[k] - lse);
    total += lse - zi[labels[i]];
  }
  std::vector<int> y(labels.begin(), labels.end());
  return make_result("cross_entropy", {}, {total / static_cast<double>(m)}, {logits.node()},
                     [probs, y = std::move(y), m, c](Node& self) {
                       auto& g = self.inputs[0]->ensure_grad();
                       const double s = self.grad[0] / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t k = 0; k < c; ++k) {
                           const double target = static_cast<int>(k) == y[i] ? 1.0 : 0.0;
                           g[i * c + k] += s * ((*probs)[i * c + k] - target);
                         }
                     });
}

}  // namespace oa
