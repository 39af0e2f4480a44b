#pragma once

#include <vector>

#include "geomoe/manifolds.hpp"
#include "geomoe/rng.hpp"
#include "geomoe/tensor.hpp"

namespace geomoe {

enum class RoutingMode { kLearned, kUniform, kHard };

struct RouterConfig {
  int in_dim = 128;    // d_model
  int hidden = 64;     // h_r
  double lambda_entropy = -0.01;
  double lambda_balance = 0.01;
};

// Two-layer gelu MLP emitting a softmax over the three geometries
// (hyperbolic, spherical, Euclidean in that order).
struct Router {
  RouterConfig cfg;
  Tensor w1, b1, w2, b2;  // [h,d], [h], [3,h], [3]

  static Router init(const RouterConfig& cfg, Rng& rng, double weight_scale);
  static Router zeros(const RouterConfig& cfg);
  std::vector<Tensor> parameters() const;
};

// kUniform returns the constant (1/3, 1/3, 1/3); kHard one-hots the argmax
// with a straight-through gradient (ablation path only).
Tensor route(const Tensor& z, const Router& router,
             RoutingMode mode = RoutingMode::kLearned);

// -lambda * sum r log r; with lambda < 0 this rewards high entropy.
Tensor routing_entropy_loss(const Tensor& r, double lambda_entropy);

// lambda * population variance of the per-expert batch means.
// `batch_r` is [B, 3] of simplex rows.
Tensor load_balance_loss(const Tensor& batch_r, double lambda_balance);

// First-order Frechet mean surrogate: the routing-weighted sum of the three
// tangent images r_h log0(x_h) + r_s log_p(x_s) + r_e x_e.
Tensor tangent_fuse(const Tensor& x_h, const Tensor& x_s, const Tensor& x_e,
                    const Tensor& r,
                    double curvature = manifold::kDefaultCurvature);

struct RefinerConfig {
  int dim = 128;
  int hidden = 128;
};

// z + W2 gelu(LN(W1 z + b1)) + b2; zero parameters make it the identity.
struct Refiner {
  RefinerConfig cfg;
  Tensor w1, b1, w2, b2;
  Tensor ln_gain, ln_bias;

  static Refiner init(const RefinerConfig& cfg, Rng& rng, double weight_scale);
  static Refiner zeros(const RefinerConfig& cfg);
  std::vector<Tensor> parameters() const;
};

Tensor refine(const Tensor& z, const Refiner& refiner);

}  // namespace geomoe
