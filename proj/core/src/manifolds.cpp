#include "geomoe/manifolds.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace geomoe::manifold {

namespace {

double norm_value(const Tensor& x) {
  double s = 0.0;
  const double* d = x.data();
  for (std::int64_t i = 0; i < x.size(); ++i) s += d[i] * d[i];
  return std::sqrt(s);
}

Tensor reciprocal(const Tensor& s) {
  return div(Tensor::scalar(1.0), s);
}

}  // namespace

Tensor norm(const Tensor& x) { return sqrt(sum(square(x))); }

Tensor project_to_ball(const Tensor& x, double c) {
  const double rmax = (1.0 - kBallMargin) / std::sqrt(c);
  const double n = norm_value(x);
  if (n <= rmax) return x;
  return scale(x, mul_scalar(reciprocal(norm(x)), rmax));
}

Tensor mobius_add(const Tensor& x, const Tensor& y, double c) {
  if (x.shape() != y.shape())
    throw std::invalid_argument("mobius_add: shape mismatch " +
                                shape_str(x.shape()) + " vs " +
                                shape_str(y.shape()));
  Tensor xy = dot(x, y);
  Tensor x2 = sum(square(x));
  Tensor y2 = sum(square(y));
  // num = (1 + 2c<x,y> + c|y|^2) x + (1 - c|x|^2) y
  Tensor cx = add_scalar(add(mul_scalar(xy, 2.0 * c), mul_scalar(y2, c)), 1.0);
  Tensor cy = add_scalar(mul_scalar(x2, -c), 1.0);
  Tensor num = add(scale(x, cx), scale(y, cy));
  // den = 1 + 2c<x,y> + c^2 |x|^2 |y|^2
  Tensor den = add_scalar(
      add(mul_scalar(xy, 2.0 * c), mul_scalar(mul(x2, y2), c * c)), 1.0);
  if (std::abs(den.item()) < 1e-12)
    throw std::runtime_error(
        "mobius_add: denominator " + std::to_string(den.item()) +
        " below 1e-12 (antipodal-degenerate input)");
  return project_to_ball(scale(num, reciprocal(den)), c);
}

Tensor exp0_ball(const Tensor& v, double c) {
  const double sc = std::sqrt(c);
  if (norm_value(v) * sc < kSeriesGuard) return v;
  Tensor n = mul_scalar(norm(v), sc);
  return project_to_ball(scale(v, div(tanh(n), n)), c);
}

Tensor log0_ball(const Tensor& x, double c) {
  const double sc = std::sqrt(c);
  if (norm_value(x) * sc < kSeriesGuard) return x;
  Tensor n = mul_scalar(norm(x), sc);
  Tensor factor = div(atanh_stable(n), n);
  return scale(x, factor);
}

Tensor mobius_matvec(const Tensor& m, const Tensor& x, double c) {
  return exp0_ball(matvec(m, log0_ball(x, c)), c);
}

Tensor mobius_nonlinearity(const Tensor& x,
                           const std::function<Tensor(const Tensor&)>& act,
                           double c) {
  return exp0_ball(act(log0_ball(x, c)), c);
}

Tensor north_pole(int d) {
  std::vector<double> data(static_cast<size_t>(d), 0.0);
  data.back() = 1.0;
  return Tensor::from_data({d}, std::move(data));
}

Tensor project_to_sphere(const Tensor& x) {
  const double n = norm_value(x);
  if (n < kSeriesGuard)
    throw std::invalid_argument(
        "project_to_sphere: cannot normalize zero vector (norm " +
        std::to_string(n) + ")");
  Tensor y = scale(x, reciprocal(add_scalar(norm(x), 1e-8)));
  return scale(y, reciprocal(norm(y)));
}

Tensor sphere_log(const Tensor& p, const Tensor& x) {
  Tensor ct = clamp(dot(p, x), -1.0, 1.0);
  const double cv = ct.item();
  if (cv <= -1.0 + kCutLocusEps)
    throw std::runtime_error(
        "sphere_log: input within cut locus of base point (cos angle " +
        std::to_string(cv) + ")");
  Tensor diff = sub(x, scale(p, ct));
  if (1.0 - cv < 1e-14) return diff;  // log_p(p) -> 0, smooth limit
  Tensor sine = sqrt(add_scalar(neg(square(ct)), 1.0));
  return scale(diff, div(acos(ct), sine));
}

Tensor sphere_exp(const Tensor& p, const Tensor& v) {
  const double nv = norm_value(v);
  Tensor out;
  if (nv < kSeriesGuard) {
    out = add(p, v);  // exp_p(0) = p; keeps v on the tape
  } else {
    Tensor n = norm(v);
    out = add(scale(p, cos(n)), scale(v, div(sin(n), n)));
  }
  return scale(out, reciprocal(norm(out)));
}

Tensor tangent_project(const Tensor& v, const Tensor& p) {
  return sub(v, scale(p, dot(v, p)));
}

}  // namespace geomoe::manifold
