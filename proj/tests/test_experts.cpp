#include <cmath>

#include "doctest.h"
#include "geomoe/experts.hpp"
#include "geomoe/manifolds.hpp"
#include "geomoe/routing.hpp"

using namespace geomoe;
namespace mf = geomoe::manifold;

namespace {

double dist(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double d = a.at(i) - b.at(i);
    s += d * d;
  }
  return std::sqrt(s);
}

ExpertStackConfig tiny_stack() {
  ExpertStackConfig cfg;
  cfg.dim = 4;
  cfg.layers = 2;
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("zero-parameter expert stacks reduce to the residual identity") {
  ExpertStack z = ExpertStack::zeros(tiny_stack());

  Tensor ball = Tensor::from_data({4}, {0.2, -0.1, 0.3, 0.05});
  CHECK(dist(hyperbolic_expert(ball, z), ball) < 1e-9);

  Tensor sph = mf::project_to_sphere(Tensor::from_data({4}, {0.3, 0.2, -0.1, 0.9}));
  CHECK(dist(spherical_expert(sph, z), sph) < 1e-9);

  Tensor euc = Tensor::from_data({4}, {1.5, -2.0, 0.0, 3.0});
  CHECK(dist(euclidean_expert(euc, z), euc) < 1e-12);
}

TEST_CASE("expert outputs live on their manifolds") {
  Rng rng(7);
  ExpertStack st = ExpertStack::init(tiny_stack(), rng, 0.3);

  Tensor ball = Tensor::from_data({4}, {0.4, -0.2, 0.1, 0.3});
  Tensor yh = hyperbolic_expert(ball, st);
  CHECK(mf::norm(yh).item() < 1.0);

  Tensor sph = mf::project_to_sphere(Tensor::from_data({4}, {1.0, 2.0, -1.0, 0.5}));
  Tensor ys = spherical_expert(sph, st);
  CHECK(mf::norm(ys).item() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("tangent dropout is identity at eval and rescales at train") {
  Tensor v = Tensor::full({64}, 1.0);
  CHECK(dist(tangent_dropout(v, 0.5, false, nullptr), v) == 0.0);

  Rng rng(11);
  Tensor d = tangent_dropout(v, 0.5, true, &rng);
  int zeros = 0;
  for (int i = 0; i < d.size(); ++i) {
    if (d.at(i) == 0.0)
      ++zeros;
    else
      CHECK(d.at(i) == doctest::Approx(2.0));  // inverted scaling 1/(1-rate)
  }
  CHECK(zeros > 8);
  CHECK(zeros < 56);
}

TEST_CASE("single-token attention with identity values returns the input point") {
  AttentionConfig cfg;
  cfg.dim = 4;
  cfg.tokens = 1;
  cfg.heads = 1;
  Rng rng(3);
  IntraAttention att = IntraAttention::init(cfg, rng, 0.2);
  // One token attends only to itself; with V = I the tangent image passes
  // through untouched, so the whole block is the identity on the manifold.
  att.wv = Tensor::from_data({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0,
                                      0, 0, 1, 0, 0, 0, 0, 1});

  Tensor ball = Tensor::from_data({4}, {0.3, -0.2, 0.1, 0.4});
  CHECK(dist(intra_manifold_attention(ball, att, GeometryKind::kHyperbolic), ball) < 1e-9);

  Tensor sph = mf::project_to_sphere(Tensor::from_data({4}, {0.5, 1.0, -0.2, 2.0}));
  CHECK(dist(intra_manifold_attention(sph, att, GeometryKind::kSpherical), sph) < 1e-9);

  Tensor euc = Tensor::from_data({4}, {2.0, -1.0, 0.5, 0.0});
  CHECK(dist(intra_manifold_attention(euc, att, GeometryKind::kEuclidean), euc) < 1e-12);
}

TEST_CASE("router produces a simplex; uniform mode is the exact constant") {
  RouterConfig cfg;
  cfg.in_dim = 6;
  cfg.hidden = 4;
  Rng rng(5);
  Router router = Router::init(cfg, rng, 0.4);

  Tensor z = Tensor::from_data({6}, {0.3, -1.0, 0.5, 2.0, 0.0, -0.2});
  Tensor r = route(z, router);
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    CHECK(r.at(i) > 0.0);
    s += r.at(i);
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  Tensor u = route(z, router, RoutingMode::kUniform);
  for (int i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Tensor h = route(z, router, RoutingMode::kHard);
  int ones = 0;
  for (int i = 0; i < 3; ++i) {
    if (h.at(i) == doctest::Approx(1.0)) ++ones;
  }
  CHECK(ones == 1);
  CHECK(h.at(0) + h.at(1) + h.at(2) == doctest::Approx(1.0));
}

TEST_CASE("entropy loss at the uniform point equals lambda * ln 3") {
  Tensor u = Tensor::full({3}, 1.0 / 3.0);
  // -lambda * sum r log r = lambda * ln 3; negative lambda rewards entropy.
  Tensor e = routing_entropy_loss(u, -0.01);
  CHECK(e.item() == doctest::Approx(-0.010986122886681098).epsilon(1e-14));

  // A one-hot router carries zero entropy, so the loss vanishes.
  Tensor hard = Tensor::from_data({3}, {1.0, 0.0, 0.0});
  CHECK(std::abs(routing_entropy_loss(hard, -0.01).item()) < 1e-12);
}

TEST_CASE("load balance loss is the population variance of expert means") {
  Tensor solo = Tensor::from_data({1, 3}, {1.0, 0.0, 0.0});
  CHECK(load_balance_loss(solo, 1.0).item() == doctest::Approx(2.0 / 9.0).epsilon(1e-14));

  // Perfectly balanced batch -> zero.
  Tensor even = Tensor::from_data({2, 3}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
  Tensor balanced = Tensor::full({2, 3}, 1.0 / 3.0);
  CHECK(load_balance_loss(balanced, 1.0).item() == doctest::Approx(0.0));
  // Batch means (0.5, 0.5, 0): variance of that vector.
  const double mean = 1.0 / 3.0;
  const double var = ((0.5 - mean) * (0.5 - mean) * 2 + mean * mean) / 3.0;
  CHECK(load_balance_loss(even, 2.0).item() == doctest::Approx(2.0 * var).epsilon(1e-12));
}

TEST_CASE("tangent fusion with a one-hot weight selects a single tangent image") {
  Tensor x_h = Tensor::from_data({3}, {0.2, 0.1, -0.3});
  Tensor x_s = mf::project_to_sphere(Tensor::from_data({3}, {0.5, -1.0, 2.0}));
  Tensor x_e = Tensor::from_data({3}, {1.0, 2.0, 3.0});

  Tensor pick_e = Tensor::from_data({3}, {0.0, 0.0, 1.0});
  CHECK(dist(tangent_fuse(x_h, x_s, x_e, pick_e), x_e) < 1e-12);

  Tensor pick_h = Tensor::from_data({3}, {1.0, 0.0, 0.0});
  CHECK(dist(tangent_fuse(x_h, x_s, x_e, pick_h), mf::log0_ball(x_h)) < 1e-12);

  Tensor pick_s = Tensor::from_data({3}, {0.0, 1.0, 0.0});
  Tensor pole = mf::north_pole(3);
  CHECK(dist(tangent_fuse(x_h, x_s, x_e, pick_s), mf::sphere_log(pole, x_s)) < 1e-12);
}

TEST_CASE("zero refiner is the identity map") {
  RefinerConfig cfg;
  cfg.dim = 5;
  cfg.hidden = 7;
  Refiner r = Refiner::zeros(cfg);
  Tensor z = Tensor::from_data({5}, {1.0, -2.0, 0.5, 0.0, 3.0});
  CHECK(dist(refine(z, r), z) < 1e-12);
}
