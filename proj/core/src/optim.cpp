#include "geomoe/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace geomoe {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

bool AdamW::step(double lr) {
  if (lr <= 0.0) throw std::invalid_argument("AdamW::step: lr must be > 0");
  for (const auto& p : params_) {
    const auto g = p.grad();
    for (double x : g)
      if (!std::isfinite(x)) {
        ++skipped_;
        return false;
      }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    double* p = params_[k].data();
    const auto& g = params_[k].node()->grad;
    auto& m = m_[k];
    auto& v = v_[k];
    const std::int64_t n = params_[k].size();
    for (std::int64_t i = 0; i < n; ++i) {
      const double gi = g.empty() ? 0.0 : g[static_cast<size_t>(i)];
      p[i] -= lr * cfg_.weight_decay * p[i];
      m[static_cast<size_t>(i)] =
          cfg_.beta1 * m[static_cast<size_t>(i)] + (1.0 - cfg_.beta1) * gi;
      v[static_cast<size_t>(i)] =
          cfg_.beta2 * v[static_cast<size_t>(i)] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[static_cast<size_t>(i)] / bc1;
      const double vhat = v[static_cast<size_t>(i)] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  return true;
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double onecycle_lr(std::int64_t step, std::int64_t total, double peak) {
  const double floor = peak / 1e4;
  if (total <= 0 || step >= total) return floor;
  if (step < 0) step = 0;
  const double warmup = 0.15 * static_cast<double>(total);
  const double s = static_cast<double>(step);
  constexpr double kPi = 3.14159265358979323846;
  if (s <= warmup) {
    if (warmup == 0.0) return peak;
    return floor + (peak - floor) * 0.5 * (1.0 - std::cos(kPi * s / warmup));
  }
  const double frac = (s - warmup) / (static_cast<double>(total) - warmup);
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(kPi * frac));
}

}  // namespace geomoe
