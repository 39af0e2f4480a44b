#include "geomoe/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace geomoe {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};
thread_local int g_no_grad_depth = 0;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kArctanhClamp = 1.0 - 1e-7;

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

[[noreturn]] void throw_shape(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_str(a) + " vs " + shape_str(b));
}

void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) throw std::invalid_argument(std::string(op) + ": " + msg);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& TensorNode::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

using detail::TensorNode;

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->data.assign(static_cast<size_t>(numel(shape)), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (static_cast<std::int64_t>(data.size()) != numel(shape))
    throw std::invalid_argument("from_data: " + std::to_string(data.size()) +
                                " values for shape " + shape_str(shape));
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1)
    throw std::invalid_argument("item: tensor has shape " +
                                shape_str(impl_->shape) + ", expected scalar");
  return impl_->data[0];
}

double Tensor::at(int i, int j) const {
  return impl_->data[static_cast<size_t>(i) * impl_->shape[1] + j];
}

Tensor& Tensor::set_requires_grad(bool value) {
  if (!impl_->parents.empty())
    throw std::logic_error("set_requires_grad: only valid on leaf tensors");
  impl_->requires_grad = value;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.size() == impl_->data.size()) return impl_->grad;
  return std::vector<double>(impl_->data.size(), 0.0);
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

Tensor make_op_result(Shape shape, const char* op, std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> bwd) {
  auto node = std::make_shared<TensorNode>();
  node->data.resize(static_cast<size_t>(numel(shape)));
  node->shape = std::move(shape);
  node->op = op;
  node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  bool track = grad_enabled() &&
               std::any_of(parents.begin(), parents.end(),
                           [](const Tensor& p) { return p.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(bwd);
  }
  return Tensor(std::move(node));
}

namespace {

// Shorthand for defining primitives: forward fills out.data, backward closure
// receives the finished node (self.grad holds the adjoint).
using Bwd = std::function<void(TensorNode&)>;

Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b,
                          void (*fwd)(const double*, const double*, double*,
                                      size_t),
                          Bwd bwd) {
  if (a.shape() != b.shape()) throw_shape(op, a.shape(), b.shape());
  Tensor out = make_op_result(a.shape(), op, {a, b}, std::move(bwd));
  fwd(a.data(), b.data(), out.data(), static_cast<size_t>(a.size()));
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  auto an = a.node();
  auto bn = b.node();
  return binary_elementwise(
      "add", a, b,
      [](const double* x, const double* y, double* o, size_t n) {
        for (size_t i = 0; i < n; ++i) o[i] = x[i] + y[i];
      },
      [an, bn](TensorNode& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
          auto& ga = an->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto an = a.node();
  auto bn = b.node();
  return binary_elementwise(
      "sub", a, b,
      [](const double* x, const double* y, double* o, size_t n) {
        for (size_t i = 0; i < n; ++i) o[i] = x[i] - y[i];
      },
      [an, bn](TensorNode& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
          auto& ga = an->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto an = a.node();
  auto bn = b.node();
  return binary_elementwise(
      "mul", a, b,
      [](const double* x, const double* y, double* o, size_t n) {
        for (size_t i = 0; i < n; ++i) o[i] = x[i] * y[i];
      },
      [an, bn](TensorNode& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
          auto& ga = an->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->data[i];
        }
        if (bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->data[i];
        }
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  auto an = a.node();
  auto bn = b.node();
  return binary_elementwise(
      "div", a, b,
      [](const double* x, const double* y, double* o, size_t n) {
        for (size_t i = 0; i < n; ++i) o[i] = x[i] / y[i];
      },
      [an, bn](TensorNode& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
          auto& ga = an->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bn->data[i];
        }
        if (bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i)
            gb[i] -= g[i] * an->data[i] / (bn->data[i] * bn->data[i]);
        }
      });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double c) {
  auto an = a.node();
  Tensor out = make_op_result(a.shape(), "add_scalar", {a},
                              [an](TensorNode& self) {
                                auto& ga = an->ensure_grad();
                                for (size_t i = 0; i < self.grad.size(); ++i)
                                  ga[i] += self.grad[i];
                              });
  const double* x = a.data();
  double* o = out.data();
  for (std::int64_t i = 0; i < a.size(); ++i) o[i] = x[i] + c;
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  auto an = a.node();
  Tensor out = make_op_result(a.shape(), "mul_scalar", {a},
                              [an, c](TensorNode& self) {
                                auto& ga = an->ensure_grad();
                                for (size_t i = 0; i < self.grad.size(); ++i)
                                  ga[i] += c * self.grad[i];
                              });
  const double* x = a.data();
  double* o = out.data();
  for (std::int64_t i = 0; i < a.size(); ++i) o[i] = c * x[i];
  return out;
}

Tensor scale(const Tensor& x, const Tensor& s) {
  require(s.size() == 1, "scale", "scale factor must be scalar, got " +
                                     shape_str(s.shape()));
  auto xn = x.node();
  auto sn = s.node();
  Tensor out = make_op_result(
      x.shape(), "scale", {x, s}, [xn, sn](TensorNode& self) {
        const auto& g = self.grad;
        const double sv = sn->data[0];
        if (xn->requires_grad) {
          auto& gx = xn->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i) gx[i] += sv * g[i];
        }
        if (sn->requires_grad) {
          double acc = 0.0;
          for (size_t i = 0; i < g.size(); ++i) acc += g[i] * xn->data[i];
          sn->ensure_grad()[0] += acc;
        }
      });
  const double sv = s.at(0);
  const double* xd = x.data();
  double* o = out.data();
  for (std::int64_t i = 0; i < x.size(); ++i) o[i] = sv * xd[i];
  return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require(m.ndim() == 2 && v.ndim() == 1, "add_rowvec",
          "expects matrix and vector, got " + shape_str(m.shape()) + " and " +
              shape_str(v.shape()));
  if (m.dim(1) != v.dim(0)) throw_shape("add_rowvec", m.shape(), v.shape());
  auto mn = m.node();
  auto vn = v.node();
  const int rows = m.dim(0), cols = m.dim(1);
  Tensor out = make_op_result(
      m.shape(), "add_rowvec", {m, v}, [mn, vn, rows, cols](TensorNode& self) {
        const auto& g = self.grad;
        if (mn->requires_grad) {
          auto& gm = mn->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        }
        if (vn->requires_grad) {
          auto& gv = vn->ensure_grad();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              gv[c] += g[static_cast<size_t>(r) * cols + c];
        }
      });
  const double* md = m.data();
  const double* vd = v.data();
  double* o = out.data();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      o[static_cast<size_t>(r) * cols + c] =
          md[static_cast<size_t>(r) * cols + c] + vd[c];
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul",
          "expects 2-D operands, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  if (a.dim(1) != b.dim(0)) throw_shape("matmul", a.shape(), b.shape());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto an = a.node();
  auto bn = b.node();
  Tensor out = make_op_result(
      {m, n}, "matmul", {a, b}, [an, bn, m, k, n](TensorNode& self) {
        const double* g = self.grad.data();
        if (an->requires_grad) {
          // dA = g @ B^T
          auto& ga = an->ensure_grad();
          const double* B = bn->data.data();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double gij = g[static_cast<size_t>(i) * n + j];
              if (gij == 0.0) continue;
              double* garow = ga.data() + static_cast<size_t>(i) * k;
              const double* brow = B + static_cast<size_t>(j);
              for (int p = 0; p < k; ++p)
                garow[p] += gij * brow[static_cast<size_t>(p) * n];
            }
        }
        if (bn->requires_grad) {
          // dB = A^T @ g
          auto& gb = bn->ensure_grad();
          const double* A = an->data.data();
          for (int i = 0; i < m; ++i) {
            const double* arow = A + static_cast<size_t>(i) * k;
            const double* grow = g + static_cast<size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
              const double aip = arow[p];
              if (aip == 0.0) continue;
              double* gbrow = gb.data() + static_cast<size_t>(p) * n;
              for (int j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
            }
          }
        }
      });
  const double* A = a.data();
  const double* B = b.data();
  double* C = out.data();
  std::fill(C, C + static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = A + static_cast<size_t>(i) * k;
    double* crow = C + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require(a.ndim() == 2 && x.ndim() == 1, "matvec",
          "expects matrix and vector, got " + shape_str(a.shape()) + " and " +
              shape_str(x.shape()));
  if (a.dim(1) != x.dim(0)) throw_shape("matvec", a.shape(), x.shape());
  const int m = a.dim(0), k = a.dim(1);
  auto an = a.node();
  auto xn = x.node();
  Tensor out = make_op_result(
      {m}, "matvec", {a, x}, [an, xn, m, k](TensorNode& self) {
        const double* g = self.grad.data();
        if (an->requires_grad) {
          auto& ga = an->ensure_grad();
          const double* xd = xn->data.data();
          for (int i = 0; i < m; ++i) {
            if (g[i] == 0.0) continue;
            double* row = ga.data() + static_cast<size_t>(i) * k;
            for (int p = 0; p < k; ++p) row[p] += g[i] * xd[p];
          }
        }
        if (xn->requires_grad) {
          auto& gx = xn->ensure_grad();
          const double* A = an->data.data();
          for (int i = 0; i < m; ++i) {
            if (g[i] == 0.0) continue;
            const double* row = A + static_cast<size_t>(i) * k;
            for (int p = 0; p < k; ++p) gx[p] += g[i] * row[p];
          }
        }
      });
  const double* A = a.data();
  const double* xd = x.data();
  double* o = out.data();
  for (int i = 0; i < m; ++i) {
    const double* row = A + static_cast<size_t>(i) * k;
    double acc = 0.0;
    for (int p = 0; p < k; ++p) acc += row[p] * xd[p];
    o[i] = acc;
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.ndim() == 2, "transpose", "expects 2-D, got " +
                                          shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  auto an = a.node();
  Tensor out =
      make_op_result({n, m}, "transpose", {a}, [an, m, n](TensorNode& self) {
        auto& ga = an->ensure_grad();
        const double* g = self.grad.data();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j)
            ga[static_cast<size_t>(j) * n + i] +=
                g[static_cast<size_t>(i) * m + j];
      });
  const double* x = a.data();
  double* o = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      o[static_cast<size_t>(j) * m + i] = x[static_cast<size_t>(i) * n + j];
  return out;
}

Tensor outer(const Tensor& x, const Tensor& y) {
  require(x.ndim() == 1 && y.ndim() == 1, "outer",
          "expects vectors, got " + shape_str(x.shape()) + " and " +
              shape_str(y.shape()));
  const int m = x.dim(0), n = y.dim(0);
  auto xn = x.node();
  auto yn = y.node();
  Tensor out = make_op_result(
      {m, n}, "outer", {x, y}, [xn, yn, m, n](TensorNode& self) {
        const double* g = self.grad.data();
        if (xn->requires_grad) {
          auto& gx = xn->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              gx[i] += g[static_cast<size_t>(i) * n + j] * yn->data[j];
        }
        if (yn->requires_grad) {
          auto& gy = yn->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              gy[j] += g[static_cast<size_t>(i) * n + j] * xn->data[i];
        }
      });
  double* o = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      o[static_cast<size_t>(i) * n + j] = x.at(i) * y.at(j);
  return out;
}

namespace {

Tensor unary_elementwise(const char* op, const Tensor& a,
                         double (*f)(double), double (*df)(double)) {
  auto an = a.node();
  Tensor out = make_op_result(a.shape(), op, {a}, [an, df](TensorNode& self) {
    auto& ga = an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      ga[i] += self.grad[i] * df(an->data[i]);
  });
  const double* x = a.data();
  double* o = out.data();
  for (std::int64_t i = 0; i < a.size(); ++i) o[i] = f(x[i]);
  return out;
}

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_dfwd(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

double atanh_clamped(double x) {
  return std::atanh(std::clamp(x, -kArctanhClamp, kArctanhClamp));
}
double atanh_clamped_d(double x) {
  if (x <= -kArctanhClamp || x >= kArctanhClamp) return 0.0;
  return 1.0 / (1.0 - x * x);
}

double acos_clamped(double x) { return std::acos(std::clamp(x, -1.0, 1.0)); }
double acos_clamped_d(double x) {
  const double t = std::clamp(x, -1.0 + 1e-12, 1.0 - 1e-12);
  return -1.0 / std::sqrt(1.0 - t * t);
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_elementwise("gelu", a, gelu_fwd, gelu_dfwd);
}

Tensor tanh(const Tensor& a) {
  return unary_elementwise(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_elementwise(
      "sigmoid", a,
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      });
}

Tensor exp(const Tensor& a) {
  return unary_elementwise(
      "exp", a, [](double x) { return std::exp(x); },
      [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  return unary_elementwise(
      "log", a, [](double x) { return std::log(x); },
      [](double x) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary_elementwise(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double x) { return 0.5 / std::sqrt(x); });
}

Tensor square(const Tensor& a) {
  return unary_elementwise(
      "square", a, [](double x) { return x * x; },
      [](double x) { return 2.0 * x; });
}

Tensor sin(const Tensor& a) {
  return unary_elementwise(
      "sin", a, [](double x) { return std::sin(x); },
      [](double x) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary_elementwise(
      "cos", a, [](double x) { return std::cos(x); },
      [](double x) { return -std::sin(x); });
}

Tensor acos(const Tensor& a) {
  return unary_elementwise("acos", a, acos_clamped, acos_clamped_d);
}

Tensor atanh_stable(const Tensor& a) {
  return unary_elementwise("atanh_stable", a, atanh_clamped, atanh_clamped_d);
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  auto an = a.node();
  Tensor out =
      make_op_result(a.shape(), "clamp", {a}, [an, lo, hi](TensorNode& self) {
        auto& ga = an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const double x = an->data[i];
          if (x > lo && x < hi) ga[i] += self.grad[i];
        }
      });
  const double* x = a.data();
  double* o = out.data();
  for (std::int64_t i = 0; i < a.size(); ++i) o[i] = std::clamp(x[i], lo, hi);
  return out;
}

Tensor softmax_lastdim(const Tensor& a) {
  require(a.ndim() == 1 || a.ndim() == 2, "softmax",
          "expects 1-D or 2-D, got " + shape_str(a.shape()));
  const int cols = a.ndim() == 2 ? a.dim(1) : a.dim(0);
  const int rows = a.ndim() == 2 ? a.dim(0) : 1;
  auto an = a.node();
  Tensor out = make_op_result(
      a.shape(), "softmax", {a}, [an, rows, cols](TensorNode& self) {
        auto& ga = an->ensure_grad();
        for (int r = 0; r < rows; ++r) {
          const double* y = self.data.data() + static_cast<size_t>(r) * cols;
          const double* g = self.grad.data() + static_cast<size_t>(r) * cols;
          double dotgy = 0.0;
          for (int c = 0; c < cols; ++c) dotgy += g[c] * y[c];
          double* gr = ga.data() + static_cast<size_t>(r) * cols;
          for (int c = 0; c < cols; ++c) gr[c] += y[c] * (g[c] - dotgy);
        }
      });
  const double* x = a.data();
  double* o = out.data();
  for (int r = 0; r < rows; ++r) {
    const double* row = x + static_cast<size_t>(r) * cols;
    double* orow = o + static_cast<size_t>(r) * cols;
    double mx = row[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      orow[c] = std::exp(row[c] - mx);
      z += orow[c];
    }
    for (int c = 0; c < cols; ++c) orow[c] /= z;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require(x.ndim() == 1 || x.ndim() == 2, "layer_norm",
          "expects 1-D or 2-D, got " + shape_str(x.shape()));
  const int cols = x.ndim() == 2 ? x.dim(1) : x.dim(0);
  const int rows = x.ndim() == 2 ? x.dim(0) : 1;
  if (gain.size() != cols || bias.size() != cols)
    throw_shape("layer_norm", x.shape(), gain.shape());
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  Tensor out = make_op_result(
      x.shape(), "layer_norm", {x, gain, bias},
      [xn, gn, bn, rows, cols, eps](TensorNode& self) {
        for (int r = 0; r < rows; ++r) {
          const double* xr = xn->data.data() + static_cast<size_t>(r) * cols;
          const double* g = self.grad.data() + static_cast<size_t>(r) * cols;
          double mu = 0.0;
          for (int c = 0; c < cols; ++c) mu += xr[c];
          mu /= cols;
          double var = 0.0;
          for (int c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
          var /= cols;
          const double inv = 1.0 / std::sqrt(var + eps);
          // xhat = (x - mu) * inv
          if (gn->requires_grad || bn->requires_grad) {
            for (int c = 0; c < cols; ++c) {
              const double xhat = (xr[c] - mu) * inv;
              if (gn->requires_grad) gn->ensure_grad()[c] += g[c] * xhat;
              if (bn->requires_grad) bn->ensure_grad()[c] += g[c];
            }
          }
          if (xn->requires_grad) {
            auto& gx = xn->ensure_grad();
            double sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (int c = 0; c < cols; ++c) {
              const double gy = g[c] * gn->data[c];
              const double xhat = (xr[c] - mu) * inv;
              sum_gy += gy;
              sum_gy_xhat += gy * xhat;
            }
            double* gxr = gx.data() + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) {
              const double gy = g[c] * gn->data[c];
              const double xhat = (xr[c] - mu) * inv;
              gxr[c] += inv * (gy - (sum_gy + xhat * sum_gy_xhat) / cols);
            }
          }
        }
      });
  const double* xd = x.data();
  const double* gd = gain.data();
  const double* bd = bias.data();
  double* o = out.data();
  for (int r = 0; r < rows; ++r) {
    const double* xr = xd + static_cast<size_t>(r) * cols;
    double* orow = o + static_cast<size_t>(r) * cols;
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += xr[c];
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c)
      orow[c] = (xr[c] - mu) * inv * gd[c] + bd[c];
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const int cols = parts[0].ndim() == 2 ? parts[0].dim(1) : 1;
  int rows = 0;
  for (const auto& p : parts) {
    require(p.ndim() == 2, "concat_rows",
            "expects 2-D inputs, got " + shape_str(p.shape()));
    if (p.dim(1) != cols) throw_shape("concat_rows", parts[0].shape(), p.shape());
    rows += p.dim(0);
  }
  std::vector<Tensor> owned(parts.begin(), parts.end());
  std::vector<std::shared_ptr<TensorNode>> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());
  Tensor out = make_op_result(
      {rows, cols}, "concat_rows", owned, [nodes, cols](TensorNode& self) {
        size_t off = 0;
        for (const auto& pn : nodes) {
          const size_t len = pn->data.size();
          if (pn->requires_grad) {
            auto& gp = pn->ensure_grad();
            for (size_t i = 0; i < len; ++i) gp[i] += self.grad[off + i];
          }
          off += len;
        }
      });
  double* o = out.data();
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.size(), o + off);
    off += static_cast<size_t>(p.size());
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const bool vec = parts[0].ndim() == 1;
  if (vec) {
    int total = 0;
    for (const auto& p : parts) {
      require(p.ndim() == 1, "concat_cols", "mixed ranks");
      total += p.dim(0);
    }
    std::vector<Tensor> owned(parts.begin(), parts.end());
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    Tensor out = make_op_result(
        {total}, "concat_cols", owned, [nodes](TensorNode& self) {
          size_t off = 0;
          for (const auto& pn : nodes) {
            if (pn->requires_grad) {
              auto& gp = pn->ensure_grad();
              for (size_t i = 0; i < pn->data.size(); ++i)
                gp[i] += self.grad[off + i];
            }
            off += pn->data.size();
          }
        });
    double* o = out.data();
    size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.data(), p.data() + p.size(), o + off);
      off += static_cast<size_t>(p.size());
    }
    return out;
  }
  const int rows = parts[0].dim(0);
  int cols = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    require(p.ndim() == 2 && p.dim(0) == rows, "concat_cols",
            "row count mismatch: " + shape_str(parts[0].shape()) + " vs " +
                shape_str(p.shape()));
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  std::vector<Tensor> owned(parts.begin(), parts.end());
  std::vector<std::shared_ptr<TensorNode>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  Tensor out = make_op_result(
      {rows, cols}, "concat_cols", owned,
      [nodes, widths, rows, cols](TensorNode& self) {
        int coff = 0;
        for (size_t k = 0; k < nodes.size(); ++k) {
          const int w = widths[k];
          if (nodes[k]->requires_grad) {
            auto& gp = nodes[k]->ensure_grad();
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < w; ++c)
                gp[static_cast<size_t>(r) * w + c] +=
                    self.grad[static_cast<size_t>(r) * cols + coff + c];
          }
          coff += w;
        }
      });
  double* o = out.data();
  int coff = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const int w = widths[k];
    const double* pd = parts[k].data();
    for (int r = 0; r < rows; ++r)
      std::copy(pd + static_cast<size_t>(r) * w,
                pd + static_cast<size_t>(r) * w + w,
                o + static_cast<size_t>(r) * cols + coff);
    coff += w;
  }
  return out;
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  require(a.ndim() == 2, "slice_rows", "expects 2-D, got " +
                                           shape_str(a.shape()));
  require(0 <= r0 && r0 < r1 && r1 <= a.dim(0), "slice_rows",
          "range [" + std::to_string(r0) + "," + std::to_string(r1) +
              ") out of bounds for " + shape_str(a.shape()));
  const int cols = a.dim(1);
  auto an = a.node();
  Tensor out = make_op_result(
      {r1 - r0, cols}, "slice_rows", {a}, [an, r0, cols](TensorNode& self) {
        auto& ga = an->ensure_grad();
        const size_t base = static_cast<size_t>(r0) * cols;
        for (size_t i = 0; i < self.grad.size(); ++i)
          ga[base + i] += self.grad[i];
      });
  std::copy(a.data() + static_cast<size_t>(r0) * cols,
            a.data() + static_cast<size_t>(r1) * cols, out.data());
  return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  require(a.ndim() == 2, "slice_cols", "expects 2-D, got " +
                                           shape_str(a.shape()));
  require(0 <= c0 && c0 < c1 && c1 <= a.dim(1), "slice_cols",
          "range [" + std::to_string(c0) + "," + std::to_string(c1) +
              ") out of bounds for " + shape_str(a.shape()));
  const int rows = a.dim(0), cols = a.dim(1), w = c1 - c0;
  auto an = a.node();
  Tensor out = make_op_result(
      {rows, w}, "slice_cols", {a}, [an, c0, rows, cols, w](TensorNode& self) {
        auto& ga = an->ensure_grad();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < w; ++c)
            ga[static_cast<size_t>(r) * cols + c0 + c] +=
                self.grad[static_cast<size_t>(r) * w + c];
      });
  const double* x = a.data();
  double* o = out.data();
  for (int r = 0; r < rows; ++r)
    std::copy(x + static_cast<size_t>(r) * cols + c0,
              x + static_cast<size_t>(r) * cols + c1,
              o + static_cast<size_t>(r) * w);
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) throw_shape("reshape", a.shape(), shape);
  auto an = a.node();
  Tensor out =
      make_op_result(std::move(shape), "reshape", {a}, [an](TensorNode& self) {
        auto& ga = an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
      });
  std::copy(a.data(), a.data() + a.size(), out.data());
  return out;
}

Tensor index_element(const Tensor& a, int i) {
  require(a.ndim() == 1, "index_element", "expects 1-D, got " +
                                              shape_str(a.shape()));
  require(0 <= i && i < a.dim(0), "index_element",
          "index " + std::to_string(i) + " out of bounds for " +
              shape_str(a.shape()));
  auto an = a.node();
  Tensor out =
      make_op_result({1}, "index_element", {a}, [an, i](TensorNode& self) {
        an->ensure_grad()[static_cast<size_t>(i)] += self.grad[0];
      });
  out.data()[0] = a.at(i);
  return out;
}

Tensor sum(const Tensor& a) {
  auto an = a.node();
  Tensor out = make_op_result({1}, "sum", {a}, [an](TensorNode& self) {
    auto& ga = an->ensure_grad();
    const double g = self.grad[0];
    for (auto& v : ga) v += g;
  });
  out.data()[0] = std::accumulate(a.data(), a.data() + a.size(), 0.0);
  return out;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  auto an = a.node();
  Tensor out = make_op_result({1}, "mean", {a}, [an, inv](TensorNode& self) {
    auto& ga = an->ensure_grad();
    const double g = self.grad[0] * inv;
    for (auto& v : ga) v += g;
  });
  out.data()[0] = std::accumulate(a.data(), a.data() + a.size(), 0.0) * inv;
  return out;
}

Tensor sum_axis0(const Tensor& a) {
  require(a.ndim() == 2, "sum_axis0", "expects 2-D, got " +
                                          shape_str(a.shape()));
  const int rows = a.dim(0), cols = a.dim(1);
  auto an = a.node();
  Tensor out = make_op_result(
      {cols}, "sum_axis0", {a}, [an, rows, cols](TensorNode& self) {
        auto& ga = an->ensure_grad();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            ga[static_cast<size_t>(r) * cols + c] += self.grad[c];
      });
  double* o = out.data();
  std::fill(o, o + cols, 0.0);
  const double* x = a.data();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) o[c] += x[static_cast<size_t>(r) * cols + c];
  return out;
}

Tensor mean_axis0(const Tensor& a) {
  return mul_scalar(sum_axis0(a), 1.0 / a.dim(0));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 1 && b.ndim() == 1, "dot",
          "expects vectors, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  if (a.dim(0) != b.dim(0)) throw_shape("dot", a.shape(), b.shape());
  auto an = a.node();
  auto bn = b.node();
  Tensor out = make_op_result({1}, "dot", {a, b}, [an, bn](TensorNode& self) {
    const double g = self.grad[0];
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += g * an->data[i];
    }
  });
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
  out.data()[0] = acc;
  return out;
}

Tensor depthwise_conv3(const Tensor& x, const Tensor& kernel,
                       const Tensor& bias) {
  require(x.ndim() == 2, "depthwise_conv3", "input must be 2-D, got " +
                                                shape_str(x.shape()));
  const int T = x.dim(0), d = x.dim(1);
  require(kernel.ndim() == 2 && kernel.dim(0) == 3 && kernel.dim(1) == d,
          "depthwise_conv3",
          "kernel must be [3," + std::to_string(d) + "], got " +
              shape_str(kernel.shape()));
  require(bias.ndim() == 1 && bias.dim(0) == d, "depthwise_conv3",
          "bias must be [" + std::to_string(d) + "], got " +
              shape_str(bias.shape()));
  auto xn = x.node();
  auto kn = kernel.node();
  auto bn = bias.node();
  Tensor out = make_op_result(
      x.shape(), "depthwise_conv3", {x, kernel, bias},
      [xn, kn, bn, T, d](TensorNode& self) {
        const double* g = self.grad.data();
        for (int t = 0; t < T; ++t) {
          for (int j = 0; j < 3; ++j) {
            const int src = t + j - 1;
            if (src < 0 || src >= T) continue;
            for (int c = 0; c < d; ++c) {
              const double gtc = g[static_cast<size_t>(t) * d + c];
              if (xn->requires_grad)
                xn->ensure_grad()[static_cast<size_t>(src) * d + c] +=
                    gtc * kn->data[static_cast<size_t>(j) * d + c];
              if (kn->requires_grad)
                kn->ensure_grad()[static_cast<size_t>(j) * d + c] +=
                    gtc * xn->data[static_cast<size_t>(src) * d + c];
            }
          }
          if (bn->requires_grad) {
            auto& gb = bn->ensure_grad();
            for (int c = 0; c < d; ++c)
              gb[c] += g[static_cast<size_t>(t) * d + c];
          }
        }
      });
  const double* xd = x.data();
  const double* kd = kernel.data();
  const double* bd = bias.data();
  double* o = out.data();
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < d; ++c) {
      double acc = bd[c];
      for (int j = 0; j < 3; ++j) {
        const int src = t + j - 1;
        if (src < 0 || src >= T) continue;
        acc += kd[static_cast<size_t>(j) * d + c] *
               xd[static_cast<size_t>(src) * d + c];
      }
      o[static_cast<size_t>(t) * d + c] = acc;
    }
  }
  return out;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  auto root = loss.node();
  if (!root->requires_grad) return;  // constant loss, nothing to do

  // Collect the reachable requires_grad subgraph.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second)
        stack.push_back(p.get());
    }
  }
  // Creation ids form a topological order (parents precede children).
  std::sort(order.begin(), order.end(),
            [](TensorNode* a, TensorNode* b) { return a->id > b->id; });

  root->ensure_grad()[0] += 1.0;
  for (TensorNode* n : order) {
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

bool all_finite(const Tensor& a) {
  const double* x = a.data();
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

}  // namespace geomoe
