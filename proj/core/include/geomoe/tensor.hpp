#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace geomoe {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

namespace detail {

/// One node of the autodiff tape. Nodes are created in program order; their
/// monotonically increasing ids double as a topological order of the graph,
/// so backward replays adjoints by descending id.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on demand, same length as data
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
/// Value-like handle: copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  std::int64_t size() const {
    return static_cast<std::int64_t>(impl_->data.size());
  }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::span<const double> values() const { return impl_->data; }

  /// Value of a scalar (1-element) tensor.
  double item() const;
  double at(int i) const { return impl_->data[static_cast<size_t>(i)]; }
  double at(int i, int j) const;

  bool requires_grad() const { return impl_->requires_grad; }
  /// Marks a leaf as trainable. Only valid on leaves.
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const { return impl_->parents.empty(); }

  /// Accumulated adjoint; zeros if backward never reached this node.
  std::vector<double> grad() const;
  void zero_grad();
  /// In-place raw data mutation for optimizers; must not be used on
  /// non-leaf nodes of a live graph.
  std::vector<double>& raw() { return impl_->data; }
  const std::vector<double>& raw() const { return impl_->data; }

  std::shared_ptr<detail::TensorNode> node() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorNode> impl_;

  friend Tensor make_op_result(Shape shape, const char* op,
                               std::vector<Tensor> parents,
                               std::function<void(detail::TensorNode&)> bwd);
};

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// ---- elementwise / arithmetic primitives ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
/// Broadcasts a scalar tensor over x: out = x * s.
Tensor scale(const Tensor& x, const Tensor& s);
/// [n,d] + [d] row-broadcast (bias add).
Tensor add_rowvec(const Tensor& m, const Tensor& v);

// ---- linear maps ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n] -> [m,n]
Tensor matvec(const Tensor& a, const Tensor& x);  // [m,k]x[k]   -> [m]
Tensor transpose(const Tensor& a);
Tensor outer(const Tensor& x, const Tensor& y);   // [m]x[n] -> [m,n]

// ---- nonlinearities ----
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor acos(const Tensor& a);
/// arctanh with the argument clamped to |t| <= 1 - 1e-7 before evaluation.
Tensor atanh_stable(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- softmax / normalization ----
Tensor softmax_lastdim(const Tensor& a);
/// Layer norm over the last axis followed by affine gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// ---- structure ----
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor reshape(const Tensor& a, Shape shape);
/// Element i of a vector as a scalar tensor (grad flows).
Tensor index_element(const Tensor& a, int i);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis0(const Tensor& a);   // [n,d] -> [d]
Tensor mean_axis0(const Tensor& a);  // [n,d] -> [d]
Tensor dot(const Tensor& a, const Tensor& b);
/// Kernel-3 depthwise 1-D convolution over rows with zero same-padding.
/// x: [T,d], kernel: [3,d], bias: [d].
Tensor depthwise_conv3(const Tensor& x, const Tensor& kernel,
                       const Tensor& bias);

// ---- tape replay ----
/// Seeds d(loss)/d(loss) = 1 and accumulates adjoints into every
/// requires_grad node reachable from `loss`. Loss must be scalar.
void backward(const Tensor& loss);

bool all_finite(const Tensor& a);

// operator sugar
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }

}  // namespace geomoe
