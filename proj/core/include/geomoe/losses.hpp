#pragma once

#include <span>
#include <vector>

#include "geomoe/tensor.hpp"

namespace geomoe {

struct LossConfig {
  double huber_delta = 1.0;
  double lambda_corr = 0.1;
  double lambda_cov = 0.01;
  double lambda_entropy = -0.01;
  double lambda_balance = 0.01;
  double head_reg_coeff = 1e-4;
  double winsor_theta = 1.5;
  double winsor_scale = 1.5;
};

// Mean elementwise Huber value; quadratic inside |e| <= delta, linear
// outside, C1 at the joint.
Tensor huber_loss(const Tensor& pred, const Tensor& target,
                  double delta = 1.0);

// lambda * (1 - mean over columns of |pearson|). Inputs are [B, K].
// A zero-variance column counts as correlation 0 (epsilon-guarded).
Tensor corr_boost_loss(const Tensor& pred, const Tensor& target,
                       double lambda);

// lambda * squared Frobenius distance between unbiased prediction and
// target covariance matrices. Inputs are [B, K], B >= 2.
Tensor cov_align_loss(const Tensor& pred, const Tensor& target, double lambda);

// Soft winsorization of a standardized value: identity inside |x| <= theta,
// sign(x) * (theta + s * tanh((|x| - theta)/s)) outside. Strictly monotone,
// bounded by theta + s.
double soft_winsorize(double x, double theta = 1.5, double s = 1.5);

// Winsorize a raw target given train-split statistics: standardize, clip
// softly, map back to raw units. A degenerate std (< 1e-12) passes the value
// through.
double winsorize_raw(double y, double mean, double stddev, double theta = 1.5,
                     double s = 1.5);

// coefficient * sum of squared entries over the given weight tensors
// (callers pass adapter weights only, never biases).
Tensor head_regularization(std::span<const Tensor> adapter_weights,
                           double coefficient);

// Combines component losses into a total with weights
//   beta_i = omega * softmax(alpha)_i + (1 - omega) * beta_adapt_i
// where beta_adapt is inverse-variance from EMA statistics of the raw
// component values. The first combine has no variance history and uses
// softmax(alpha) alone. EMA state is never differentiated; alpha is a
// learnable leaf exposed through alpha().
class AdaptiveBalancer {
 public:
  AdaptiveBalancer(int components, double gamma = 0.99, double omega = 0.5,
                   double eps = 1e-8);

  // update_state=false evaluates with the current statistics untouched,
  // which keeps repeated calls pure (finite-difference checks rely on it).
  Tensor combine(std::span<const Tensor> components, bool update_state = true);

  Tensor& alpha() { return alpha_; }
  const Tensor& alpha() const { return alpha_; }
  const std::vector<double>& last_weights() const { return last_beta_; }
  std::int64_t steps() const { return t_; }

  // Checkpoint plumbing.
  std::vector<double>& ema_mean() { return mu_; }
  std::vector<double>& ema_sq() { return q_; }
  const std::vector<double>& ema_mean() const { return mu_; }
  const std::vector<double>& ema_sq() const { return q_; }
  void set_steps(std::int64_t t) { t_ = t; }
  double gamma() const { return gamma_; }
  double omega() const { return omega_; }

 private:
  int n_;
  double gamma_;
  double omega_;
  double eps_;
  Tensor alpha_;
  std::vector<double> mu_;
  std::vector<double> q_;
  std::vector<double> last_beta_;
  std::int64_t t_ = 0;
};

}  // namespace geomoe
