#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace oa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One entry of the dynamic computation graph. Nodes are ordered by `seq`
// (creation order); every input of a node has a smaller `seq`.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const noexcept { return !backward; }
  std::vector<double>& ensure_grad();
};

std::uint64_t next_seq() noexcept;

}  // namespace detail

// Dense row-major float64 tensor with reverse-mode gradient tracking.
// Copies share storage; use detach() for an independent value copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value);
  static Tensor from_node(std::shared_ptr<detail::Node> node);

  bool defined() const noexcept { return static_cast<bool>(node_); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the end.
  std::size_t dim(std::ptrdiff_t axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const double> data() const;
  std::span<double> mutable_data();
  // Empty until a backward pass reaches this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();

  bool requires_grad() const;
  void set_requires_grad(bool value);
  void zero_grad();

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  // Seeds d(this)/d(this) = 1 and propagates to every reachable tensor that
  // requires grad. Leaf gradients accumulate across calls.
  void backward() const;

  Tensor detach() const;
  const char* op_name() const;
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- operations ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// [..., p, q] x [..., q, r] -> [..., p, r], batch dimensions broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// x [..., in], weight [out, in], bias [out] (optional) -> [..., out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, std::ptrdiff_t axis);

// Normalizes over the last axis; gain and bias have shape [last].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

class Rng;
// Inverted dropout. In eval mode (or p == 0) returns `x` itself.
Tensor dropout(const Tensor& x, double p, Rng* rng, bool training);

Tensor concat(std::span<const Tensor> parts, std::ptrdiff_t axis);
Tensor reshape(const Tensor& x, Shape shape);
// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::ptrdiff_t axis, bool keepdim = false);
// Selects rows along axis 0.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

enum class ConvPairing {
  kAllGroups,  // every input row against every filter group
  kRowWise,    // input row r uses only filter group r
};

// Non-overlapping 1D convolution with filters produced at run time.
//   input   [rows, L]
//   filters [groups, F, S]   (filter size == stride == S, L % S == 0)
//   bias    [groups, F] or [groups, 1]
// Output [rows, groups, F * (L / S)] (kAllGroups) or [rows, F * (L / S)]
// (kRowWise, groups == rows). Feature maps are flattened filter-major.
Tensor conv1d_dynamic(const Tensor& input, const Tensor& filters, const Tensor& bias,
                      std::size_t stride, ConvPairing pairing = ConvPairing::kAllGroups);

// Mean token cross-entropy of logits [m, classes] against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace oa
