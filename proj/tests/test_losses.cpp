#include <cmath>
#include <vector>

#include "doctest.h"
#include "geomoe/losses.hpp"

using namespace geomoe;

TEST_CASE("huber loss: quadratic core, linear tails, C1 joint") {
  Tensor pred = Tensor::from_data({2}, {0.5, 3.0});
  Tensor target = Tensor::from_data({2}, {0.0, 1.0});
  // errors 0.5 and 2.0 with delta 1: 0.125 and 1*(2 - 0.5) = 1.5
  CHECK(huber_loss(pred, target, 1.0).item() ==
        doctest::Approx((0.125 + 1.5) / 2.0).epsilon(1e-14));

  // both branches meet at |e| = delta
  Tensor at_joint = Tensor::from_data({1}, {1.0});
  Tensor zero = Tensor::zeros({1});
  CHECK(huber_loss(at_joint, zero, 1.0).item() == doctest::Approx(0.5));

  Tensor exact = huber_loss(zero, zero, 1.0);
  CHECK(exact.item() == 0.0);
}

TEST_CASE("soft winsorization fixed points, clip value and asymptote") {
  CHECK(soft_winsorize(0.0) == 0.0);
  CHECK(soft_winsorize(1.0) == 1.0);
  CHECK(soft_winsorize(1.5) == 1.5);
  CHECK(soft_winsorize(-1.2) == -1.2);

  // theta + s * tanh((|x|-theta)/s) at x = 3: 1.5 + 1.5*tanh(1)
  const double at_three = 1.5 + 1.5 * std::tanh(1.0);
  CHECK(soft_winsorize(3.0) == doctest::Approx(at_three).epsilon(1e-15));
  CHECK(soft_winsorize(3.0) == doctest::Approx(2.6423912339336473).epsilon(1e-15));
  CHECK(soft_winsorize(-3.0) == doctest::Approx(-at_three).epsilon(1e-15));

  CHECK(soft_winsorize(1e6) == doctest::Approx(3.0).epsilon(1e-9));
  // strictly below the bound while tanh still resolves below 1
  CHECK(soft_winsorize(20.0) < 3.0);

  // strictly monotone through the joint
  double prev = soft_winsorize(1.49);
  for (double x = 1.495; x < 1.6; x += 0.005) {
    const double y = soft_winsorize(x);
    CHECK(y > prev);
    prev = y;
  }
}

TEST_CASE("winsorize_raw standardizes, clips and maps back") {
  const double mean = 10.0, sd = 2.0;
  // z = 1 is inside the identity region
  CHECK(winsorize_raw(12.0, mean, sd) == doctest::Approx(12.0));
  // z = 4 clips to soft_winsorize(4), then back to raw units
  CHECK(winsorize_raw(18.0, mean, sd) ==
        doctest::Approx(mean + sd * soft_winsorize(4.0)).epsilon(1e-14));
  // degenerate spread passes values through
  CHECK(winsorize_raw(42.0, 5.0, 0.0) == 42.0);
}

TEST_CASE("correlation boost loss vanishes for perfectly correlated columns") {
  Tensor pred = Tensor::from_data({4, 2}, {1, 0, 2, 1, 3, 2, 4, 3});
  Tensor target = Tensor::from_data({4, 2}, {2, 5, 4, 7, 6, 9, 8, 11});
  // the epsilon-guarded denominator leaves a ~1e-9 floor
  CHECK(corr_boost_loss(pred, target, 0.5).item() ==
        doctest::Approx(0.0).epsilon(1e-8));

  // anti-correlation counts via |rho|, so it also vanishes
  Tensor anti = Tensor::from_data({4, 2}, {-1, 0, -2, -1, -3, -2, -4, -3});
  CHECK(corr_boost_loss(anti, target, 0.5).item() ==
        doctest::Approx(0.0).epsilon(1e-8));

  // a constant prediction column has zero correlation: loss = lambda
  Tensor flat = Tensor::full({4, 2}, 1.0);
  CHECK(corr_boost_loss(flat, target, 0.5).item() ==
        doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("covariance alignment loss is zero iff the covariances match") {
  Tensor a = Tensor::from_data({3, 2}, {1, 2, 3, 5, 5, 8});
  CHECK(cov_align_loss(a, a, 0.01).item() == doctest::Approx(0.0));

  Tensor shifted = add_scalar(a, 7.0);  // same covariance, different mean
  CHECK(cov_align_loss(shifted, a, 0.01).item() ==
        doctest::Approx(0.0).epsilon(1e-12));

  Tensor scaled = mul_scalar(a, 2.0);  // covariance scales by 4
  CHECK(cov_align_loss(scaled, a, 1.0).item() > 0.0);
}

TEST_CASE("head regularization sums squared weights with the coefficient") {
  std::vector<Tensor> ws = {Tensor::from_data({2, 2}, {1, 2, 3, 4}),
                            Tensor::from_data({2}, {5, 6})};
  CHECK(head_regularization(ws, 1e-4).item() ==
        doctest::Approx(1e-4 * (1 + 4 + 9 + 16 + 25 + 36)).epsilon(1e-14));
}

TEST_CASE("adaptive balancer: first combine uses softmax(alpha) alone") {
  AdaptiveBalancer bal(3);
  std::vector<Tensor> comps = {Tensor::scalar(2.0), Tensor::scalar(4.0),
                               Tensor::scalar(6.0)};
  // alpha starts at zeros -> softmax = 1/3 each
  Tensor total = bal.combine(comps);
  CHECK(total.item() == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(bal.steps() == 1);
  const auto& beta = bal.last_weights();
  for (double b : beta) CHECK(b == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("adaptive balancer: update_state=false leaves the EMA untouched") {
  AdaptiveBalancer bal(2);
  std::vector<Tensor> comps = {Tensor::scalar(1.0), Tensor::scalar(3.0)};
  bal.combine(comps);
  const auto mu = bal.ema_mean();
  const auto q = bal.ema_sq();
  const auto t = bal.steps();

  Tensor again = bal.combine(comps, false);
  CHECK(bal.ema_mean() == mu);
  CHECK(bal.ema_sq() == q);
  CHECK(bal.steps() == t);
  // pure evaluation reproduces the same total
  CHECK(bal.combine(comps, false).item() == doctest::Approx(again.item()));
}

TEST_CASE("adaptive balancer favors low-variance components over time") {
  AdaptiveBalancer bal(2, 0.5, 0.5);
  // component 0 is noisy, component 1 is steady
  double seq0[] = {1.0, 5.0, 0.5, 6.0, 1.5, 5.5, 0.8, 6.2};
  for (double v : seq0) {
    std::vector<Tensor> comps = {Tensor::scalar(v), Tensor::scalar(2.0)};
    bal.combine(comps);
  }
  const auto& beta = bal.last_weights();
  CHECK(beta[1] > beta[0]);
  CHECK(beta[0] + beta[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("balancer alpha carries gradient through combine") {
  AdaptiveBalancer bal(2);
  std::vector<Tensor> comps = {Tensor::scalar(1.0), Tensor::scalar(5.0)};
  Tensor total = bal.combine(comps);
  backward(total);
  auto g = bal.alpha().grad();
  CHECK(g.size() == 2);
  // moving alpha toward the smaller component lowers the total
  CHECK(g[0] < 0.0);
  CHECK(g[1] > 0.0);
}
