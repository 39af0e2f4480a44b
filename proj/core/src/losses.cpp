#include "geomoe/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace geomoe {

Tensor huber_loss(const Tensor& pred, const Tensor& target, double delta) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("huber_loss: shape mismatch " +
                                shape_str(pred.shape()) + " vs " +
                                shape_str(target.shape()));
  if (delta <= 0.0)
    throw std::invalid_argument("huber_loss: delta must be positive");
  Tensor e = sub(pred, target);
  // clamp(e)*e - clamp(e)^2/2 equals the Huber value on both branches.
  Tensor ce = clamp(e, -delta, delta);
  Tensor val = sub(mul(ce, e), mul_scalar(square(ce), 0.5));
  return mean(val);
}

namespace {

// |x| with the almost-everywhere gradient sign(x), taken from the forward
// value so the graph stays exact.
Tensor abs_via_sign(const Tensor& x) {
  return mul_scalar(x, x.item() >= 0.0 ? 1.0 : -1.0);
}

Tensor center_columns(const Tensor& m) {
  return add_rowvec(m, neg(mean_axis0(m)));
}

}  // namespace

Tensor corr_boost_loss(const Tensor& pred, const Tensor& target,
                       double lambda) {
  if (pred.ndim() != 2 || pred.shape() != target.shape())
    throw std::invalid_argument("corr_boost_loss: expected matching [B,K], got " +
                                shape_str(pred.shape()) + " and " +
                                shape_str(target.shape()));
  if (pred.dim(0) < 2)
    throw std::invalid_argument("corr_boost_loss: needs at least two rows");
  const int k = pred.dim(1);
  Tensor cp = center_columns(pred);
  Tensor ct = center_columns(target);
  Tensor acc = Tensor::scalar(0.0);
  for (int j = 0; j < k; ++j) {
    Tensor a = reshape(slice_cols(cp, j, j + 1), {pred.dim(0)});
    Tensor b = reshape(slice_cols(ct, j, j + 1), {pred.dim(0)});
    Tensor num = dot(a, b);
    Tensor den = add_scalar(mul(sqrt(sum(square(a))), sqrt(sum(square(b)))),
                            1e-8);
    acc = add(acc, abs_via_sign(div(num, den)));
  }
  Tensor mean_abs = mul_scalar(acc, 1.0 / k);
  return mul_scalar(add_scalar(neg(mean_abs), 1.0), lambda);
}

Tensor cov_align_loss(const Tensor& pred, const Tensor& target,
                      double lambda) {
  if (pred.ndim() != 2 || pred.shape() != target.shape())
    throw std::invalid_argument("cov_align_loss: expected matching [B,K], got " +
                                shape_str(pred.shape()) + " and " +
                                shape_str(target.shape()));
  const int b = pred.dim(0);
  if (b < 2)
    throw std::invalid_argument("cov_align_loss: needs at least two rows");
  const double inv = 1.0 / (b - 1);
  Tensor cp = center_columns(pred);
  Tensor ct = center_columns(target);
  Tensor cov_p = mul_scalar(matmul(transpose(cp), cp), inv);
  Tensor cov_t = mul_scalar(matmul(transpose(ct), ct), inv);
  return mul_scalar(sum(square(sub(cov_p, cov_t))), lambda);
}

double soft_winsorize(double x, double theta, double s) {
  if (s <= 0.0)
    throw std::invalid_argument("soft_winsorize: scale must be positive");
  const double ax = std::abs(x);
  if (ax <= theta) return x;
  const double clipped = theta + s * std::tanh((ax - theta) / s);
  return x >= 0.0 ? clipped : -clipped;
}

double winsorize_raw(double y, double mean, double stddev, double theta,
                     double s) {
  if (stddev < 1e-12) return y;
  return mean + stddev * soft_winsorize((y - mean) / stddev, theta, s);
}

Tensor head_regularization(std::span<const Tensor> adapter_weights,
                           double coefficient) {
  Tensor acc = Tensor::scalar(0.0);
  for (const auto& w : adapter_weights) acc = add(acc, sum(square(w)));
  return mul_scalar(acc, coefficient);
}

AdaptiveBalancer::AdaptiveBalancer(int components, double gamma, double omega,
                                   double eps)
    : n_(components),
      gamma_(gamma),
      omega_(omega),
      eps_(eps),
      alpha_(Tensor::zeros({components}, true)),
      mu_(static_cast<size_t>(components), 0.0),
      q_(static_cast<size_t>(components), 0.0),
      last_beta_(static_cast<size_t>(components), 0.0) {
  if (components < 1)
    throw std::invalid_argument("AdaptiveBalancer: needs >= 1 component");
}

Tensor AdaptiveBalancer::combine(std::span<const Tensor> components,
                                 bool update_state) {
  if (static_cast<int>(components.size()) != n_)
    throw std::invalid_argument(
        "AdaptiveBalancer: got " + std::to_string(components.size()) +
        " components, configured for " + std::to_string(n_));
  std::vector<double> values(static_cast<size_t>(n_));
  for (int i = 0; i < n_; ++i) {
    values[static_cast<size_t>(i)] = components[static_cast<size_t>(i)].item();
    if (!std::isfinite(values[static_cast<size_t>(i)]))
      throw std::runtime_error("AdaptiveBalancer: component " +
                               std::to_string(i) + " is not finite");
  }

  const bool first = t_ == 0;
  if (update_state) {
    for (int i = 0; i < n_; ++i) {
      const double v = values[static_cast<size_t>(i)];
      mu_[static_cast<size_t>(i)] =
          gamma_ * mu_[static_cast<size_t>(i)] + (1.0 - gamma_) * v;
      q_[static_cast<size_t>(i)] =
          gamma_ * q_[static_cast<size_t>(i)] + (1.0 - gamma_) * v * v;
    }
    ++t_;
  }

  std::vector<double> beta_adapt(static_cast<size_t>(n_), 0.0);
  if (!first) {
    double denom = 0.0;
    for (int i = 0; i < n_; ++i) {
      const double var = std::max(
          q_[static_cast<size_t>(i)] -
              mu_[static_cast<size_t>(i)] * mu_[static_cast<size_t>(i)],
          0.0);
      beta_adapt[static_cast<size_t>(i)] = 1.0 / (var + eps_);
      denom += beta_adapt[static_cast<size_t>(i)];
    }
    for (auto& b : beta_adapt) b /= denom;
  }

  const double mix = first ? 1.0 : omega_;
  Tensor soft = softmax_lastdim(alpha_);
  Tensor total = Tensor::scalar(0.0);
  for (int i = 0; i < n_; ++i) {
    Tensor beta = add_scalar(mul_scalar(index_element(soft, i), mix),
                             (1.0 - mix) * beta_adapt[static_cast<size_t>(i)]);
    last_beta_[static_cast<size_t>(i)] = beta.item();
    total = add(total, mul(beta, components[static_cast<size_t>(i)]));
  }
  return total;
}

}  // namespace geomoe
