#pragma once

#include <functional>

#include "geomoe/tensor.hpp"

namespace geomoe::manifold {

// Curvature of the Poincare ball. Positive; 1.0 throughout the model.
inline constexpr double kDefaultCurvature = 1.0;
// Points are kept at radius <= (1 - kBallMargin)/sqrt(c).
inline constexpr double kBallMargin = 1e-5;
// Below this norm the exp/log maps fall back to the identity (their limit).
inline constexpr double kSeriesGuard = 1e-12;
// Inputs this close to the antipode are rejected by sphere_log.
inline constexpr double kCutLocusEps = 1e-6;

// All functions take 1-D tensors and stay on the autodiff tape.

// Poincare ball.
Tensor project_to_ball(const Tensor& x, double c = kDefaultCurvature);
Tensor mobius_add(const Tensor& x, const Tensor& y,
                  double c = kDefaultCurvature);
Tensor exp0_ball(const Tensor& v, double c = kDefaultCurvature);
Tensor log0_ball(const Tensor& x, double c = kDefaultCurvature);
Tensor mobius_matvec(const Tensor& m, const Tensor& x,
                     double c = kDefaultCurvature);
// Activation applied in the tangent space at the origin:
// exp0(act(log0(x))).
Tensor mobius_nonlinearity(const Tensor& x,
                           const std::function<Tensor(const Tensor&)>& act,
                           double c = kDefaultCurvature);

// Unit sphere. The base point for tangent operations is the north pole
// e_d = (0, ..., 0, 1).
Tensor north_pole(int d);
Tensor project_to_sphere(const Tensor& x);
Tensor sphere_log(const Tensor& p, const Tensor& x);
Tensor sphere_exp(const Tensor& p, const Tensor& v);
// Removes the normal component: v - <v,p> p.
Tensor tangent_project(const Tensor& v, const Tensor& p);

// Euclidean norm as a scalar tensor (shared helper).
Tensor norm(const Tensor& x);

}  // namespace geomoe::manifold
