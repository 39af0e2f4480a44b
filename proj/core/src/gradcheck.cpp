#include "geomoe/gradcheck.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace geomoe {

namespace {

double rel_err(double analytic, double numeric) {
  if (!std::isfinite(analytic) || !std::isfinite(numeric))
    return std::numeric_limits<double>::infinity();
  return std::abs(analytic - numeric) /
         (std::abs(analytic) + std::abs(numeric) + 1e-8);
}

}  // namespace

double check_gradients_multi(const std::function<Tensor()>& f,
                             std::span<Tensor> leaves, double h,
                             std::int64_t max_coords_per_leaf) {
  for (auto& leaf : leaves) leaf.zero_grad();
  Tensor loss = f();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

  double worst = 0.0;
  NoGradGuard ng;
  for (size_t k = 0; k < leaves.size(); ++k) {
    double* data = leaves[k].data();
    const std::int64_t n = leaves[k].size();
    // Evenly strided coordinate subset when a cap is set; every coordinate
    // otherwise.
    std::int64_t stride = 1;
    if (max_coords_per_leaf > 0 && n > max_coords_per_leaf)
      stride = (n + max_coords_per_leaf - 1) / max_coords_per_leaf;
    for (std::int64_t i = 0; i < n; i += stride) {
      const double saved = data[i];
      data[i] = saved + h;
      const double fp = f().item();
      data[i] = saved - h;
      const double fm = f().item();
      data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[k][static_cast<size_t>(i)],
                                      numeric));
    }
  }
  return worst;
}

double check_gradients(const std::function<Tensor(const Tensor&)>& f,
                       const Tensor& x, double h) {
  Tensor leaf = x;
  leaf.set_requires_grad(true);
  Tensor leaves[] = {leaf};
  return check_gradients_multi([&] { return f(leaf); }, leaves, h);
}

}  // namespace geomoe
