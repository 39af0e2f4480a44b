#include <cmath>

#include "doctest.h"
#include "geomoe/manifolds.hpp"
#include "geomoe/tensor.hpp"

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

}  // namespace

TEST_CASE("mobius addition in one dimension is the velocity-addition law") {
  Tensor x = Tensor::from_data({1}, {0.5});
  Tensor y = Tensor::from_data({1}, {0.2});
  // (0.5 + 0.2) / (1 + 0.5*0.2) = 0.7 / 1.1
  CHECK(mf::mobius_add(x, y).at(0) ==
        doctest::Approx(0.6363636363636364).epsilon(1e-14));
}

TEST_CASE("gyrogroup identity and left inverse") {
  Tensor x = Tensor::from_data({3}, {0.3, -0.2, 0.4});
  Tensor zero = Tensor::zeros({3});
  CHECK(dist(mf::mobius_add(zero, x), x) < 1e-12);
  CHECK(dist(mf::mobius_add(x, zero), x) < 1e-12);

  Tensor neg_x = Tensor::from_data({3}, {-0.3, 0.2, -0.4});
  Tensor e = mf::mobius_add(neg_x, x);
  CHECK(dist(e, zero) < 1e-12);
}

TEST_CASE("exp0 and log0 invert each other away from the boundary") {
  Tensor v = Tensor::from_data({4}, {0.4, -1.2, 0.7, 0.1});
  Tensor x = mf::exp0_ball(v);
  CHECK(mf::norm(x).item() < 1.0);
  CHECK(dist(mf::log0_ball(x), v) < 1e-10);

  Tensor p = Tensor::from_data({2}, {0.6, -0.3});
  CHECK(dist(mf::exp0_ball(mf::log0_ball(p)), p) < 1e-10);

  // exp0 of zero stays at the origin (series guard path).
  CHECK(mf::norm(mf::exp0_ball(Tensor::zeros({3}))).item() == 0.0);
}

TEST_CASE("ball projection clamps to the margin radius and passes interior points") {
  Tensor far = Tensor::from_data({2}, {30.0, 40.0});
  Tensor proj = mf::project_to_ball(far);
  CHECK(mf::norm(proj).item() == doctest::Approx(1.0 - mf::kBallMargin).epsilon(1e-12));
  // direction preserved
  CHECK(proj.at(0) / proj.at(1) == doctest::Approx(0.75).epsilon(1e-12));

  Tensor inside = Tensor::from_data({2}, {0.1, 0.2});
  CHECK(dist(mf::project_to_ball(inside), inside) < 1e-15);
}

TEST_CASE("mobius matvec with the identity matrix is the identity") {
  Tensor x = Tensor::from_data({3}, {0.25, -0.4, 0.1});
  Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(dist(mf::mobius_matvec(eye, x), x) < 1e-10);
}

TEST_CASE("mobius nonlinearity with the identity activation is the identity") {
  Tensor x = Tensor::from_data({3}, {0.3, 0.1, -0.5});
  auto ident = [](const Tensor& t) { return t; };
  CHECK(dist(mf::mobius_nonlinearity(x, ident), x) < 1e-10);
}

TEST_CASE("sphere log at the pole of an equatorial point has norm pi/2") {
  Tensor p = mf::north_pole(3);
  CHECK(p.at(2) == 1.0);
  Tensor x = Tensor::from_data({3}, {1.0, 0.0, 0.0});
  Tensor v = mf::sphere_log(p, x);
  CHECK(v.at(0) == doctest::Approx(3.14159265358979323846 / 2).epsilon(1e-12));
  CHECK(std::abs(v.at(1)) < 1e-12);
  CHECK(std::abs(v.at(2)) < 1e-12);

  Tensor back = mf::sphere_exp(p, v);
  CHECK(dist(back, x) < 1e-10);
}

TEST_CASE("sphere projection normalizes and tangent projection removes the normal part") {
  Tensor raw = Tensor::from_data({3}, {3.0, 0.0, 4.0});
  Tensor s = mf::project_to_sphere(raw);
  CHECK(mf::norm(s).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.at(0) == doctest::Approx(0.6));

  Tensor p = mf::north_pole(3);
  Tensor v = Tensor::from_data({3}, {1.0, 2.0, 3.0});
  Tensor t = mf::tangent_project(v, p);
  CHECK(std::abs(dot(t, p).item()) < 1e-12);
  CHECK(t.at(0) == doctest::Approx(1.0));
  CHECK(t.at(2) == doctest::Approx(0.0));
}

TEST_CASE("manifold maps stay on the autodiff tape") {
  Tensor v = Tensor::from_data({3}, {0.2, -0.1, 0.3}, true);
  Tensor loss = sum(mf::log0_ball(mf::exp0_ball(v)));
  backward(loss);
  // round trip is the identity, so the gradient of the sum is all ones
  auto g = v.grad();
  for (double gi : g) CHECK(gi == doctest::Approx(1.0).epsilon(1e-6));
}
