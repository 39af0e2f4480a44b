#include "geomoe/routing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace geomoe {

Router Router::init(const RouterConfig& cfg, Rng& rng, double weight_scale) {
  Router r;
  r.cfg = cfg;
  const double sd1 = weight_scale / std::sqrt(static_cast<double>(cfg.in_dim));
  const double sd2 = weight_scale / std::sqrt(static_cast<double>(cfg.hidden));
  r.w1 = Tensor::from_data(
      {cfg.hidden, cfg.in_dim},
      rng.normal_vec(static_cast<size_t>(cfg.hidden) * cfg.in_dim, 0.0, sd1),
      true);
  r.b1 = Tensor::zeros({cfg.hidden}, true);
  r.w2 = Tensor::from_data(
      {3, cfg.hidden},
      rng.normal_vec(static_cast<size_t>(3) * cfg.hidden, 0.0, sd2), true);
  r.b2 = Tensor::zeros({3}, true);
  return r;
}

Router Router::zeros(const RouterConfig& cfg) {
  Router r;
  r.cfg = cfg;
  r.w1 = Tensor::zeros({cfg.hidden, cfg.in_dim}, true);
  r.b1 = Tensor::zeros({cfg.hidden}, true);
  r.w2 = Tensor::zeros({3, cfg.hidden}, true);
  r.b2 = Tensor::zeros({3}, true);
  return r;
}

std::vector<Tensor> Router::parameters() const { return {w1, b1, w2, b2}; }

Tensor route(const Tensor& z, const Router& router, RoutingMode mode) {
  if (mode == RoutingMode::kUniform)
    return Tensor::full({3}, 1.0 / 3.0);
  Tensor hidden = gelu(add(matvec(router.w1, z), router.b1));
  Tensor logits = add(matvec(router.w2, hidden), router.b2);
  Tensor r = softmax_lastdim(logits);
  if (mode == RoutingMode::kLearned) return r;
  // Hard routing: one-hot argmax forward, identity gradient back.
  const double* rd = r.data();
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (rd[i] > rd[best]) best = i;
  std::vector<double> onehot(3, 0.0);
  onehot[static_cast<size_t>(best)] = 1.0;
  Tensor hard = Tensor::from_data({3}, std::move(onehot));
  Tensor detached = Tensor::from_data({3}, {rd[0], rd[1], rd[2]});
  return add(hard, sub(r, detached));
}

Tensor routing_entropy_loss(const Tensor& r, double lambda_entropy) {
  // r log r with the 0 log 0 -> 0 limit via clamping inside the log only.
  Tensor plogp = mul(r, log(clamp(r, 1e-12, 1.0)));
  return mul_scalar(sum(plogp), -lambda_entropy);
}

Tensor load_balance_loss(const Tensor& batch_r, double lambda_balance) {
  if (batch_r.ndim() != 2 || batch_r.dim(1) != 3)
    throw std::invalid_argument("load_balance_loss: expected [B,3], got " +
                                shape_str(batch_r.shape()));
  Tensor means = mean_axis0(batch_r);
  Tensor mu = mean(means);
  Tensor diff = sub(means, scale(Tensor::full({3}, 1.0), mu));
  return mul_scalar(mean(square(diff)), lambda_balance);
}

Tensor tangent_fuse(const Tensor& x_h, const Tensor& x_s, const Tensor& x_e,
                    const Tensor& r, double curvature) {
  if (r.size() != 3)
    throw std::invalid_argument("tangent_fuse: routing weights must be [3], got " +
                                shape_str(r.shape()));
  Tensor v_h = manifold::log0_ball(x_h, curvature);
  Tensor v_s = manifold::sphere_log(manifold::north_pole(x_s.dim(0)), x_s);
  Tensor fused = scale(v_h, index_element(r, 0));
  fused = add(fused, scale(v_s, index_element(r, 1)));
  fused = add(fused, scale(x_e, index_element(r, 2)));
  return fused;
}

Refiner Refiner::init(const RefinerConfig& cfg, Rng& rng, double weight_scale) {
  Refiner f;
  f.cfg = cfg;
  const double sd1 = weight_scale / std::sqrt(static_cast<double>(cfg.dim));
  const double sd2 = weight_scale / std::sqrt(static_cast<double>(cfg.hidden));
  f.w1 = Tensor::from_data(
      {cfg.hidden, cfg.dim},
      rng.normal_vec(static_cast<size_t>(cfg.hidden) * cfg.dim, 0.0, sd1),
      true);
  f.b1 = Tensor::zeros({cfg.hidden}, true);
  f.w2 = Tensor::from_data(
      {cfg.dim, cfg.hidden},
      rng.normal_vec(static_cast<size_t>(cfg.dim) * cfg.hidden, 0.0, sd2),
      true);
  f.b2 = Tensor::zeros({cfg.dim}, true);
  f.ln_gain = Tensor::full({cfg.hidden}, 1.0, true);
  f.ln_bias = Tensor::zeros({cfg.hidden}, true);
  return f;
}

Refiner Refiner::zeros(const RefinerConfig& cfg) {
  Refiner f;
  f.cfg = cfg;
  f.w1 = Tensor::zeros({cfg.hidden, cfg.dim}, true);
  f.b1 = Tensor::zeros({cfg.hidden}, true);
  f.w2 = Tensor::zeros({cfg.dim, cfg.hidden}, true);
  f.b2 = Tensor::zeros({cfg.dim}, true);
  f.ln_gain = Tensor::zeros({cfg.hidden}, true);
  f.ln_bias = Tensor::zeros({cfg.hidden}, true);
  return f;
}

std::vector<Tensor> Refiner::parameters() const {
  return {w1, b1, w2, b2, ln_gain, ln_bias};
}

Tensor refine(const Tensor& z, const Refiner& refiner) {
  Tensor hidden = layer_norm(add(matvec(refiner.w1, z), refiner.b1),
                             refiner.ln_gain, refiner.ln_bias);
  Tensor out = add(matvec(refiner.w2, gelu(hidden)), refiner.b2);
  return add(z, out);
}

}  // namespace geomoe
