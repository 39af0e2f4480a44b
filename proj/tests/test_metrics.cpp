#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "geomoe/metrics.hpp"
#include "json.hpp"

using namespace geomoe;

TEST_CASE("midranks average over tied runs") {
  std::vector<double> x = {3.0, 1.0, 3.0, 2.0};
  auto r = midranks(x);
  CHECK(r[0] == doctest::Approx(3.5));
  CHECK(r[1] == doctest::Approx(1.0));
  CHECK(r[2] == doctest::Approx(3.5));
  CHECK(r[3] == doctest::Approx(2.0));
}

TEST_CASE("hand cases: one swap gives tau 1/3, rho 1/2, c-index 2/3") {
  std::vector<double> pred = {1.0, 2.0, 3.0};
  std::vector<double> truth = {1.0, 3.0, 2.0};
  CHECK(kendall_tau_b(pred, truth) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(spearman(pred, truth) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c_index(pred, truth) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("tie correction: (1,2,3) vs (1,1,2) gives 2/sqrt(6)") {
  std::vector<double> x = {1.0, 2.0, 3.0};
  std::vector<double> y = {1.0, 1.0, 2.0};
  CHECK(kendall_tau_b(x, y) ==
        doctest::Approx(2.0 / std::sqrt(6.0)).epsilon(1e-15));
}

TEST_CASE("prediction ties count half in the c-index") {
  std::vector<double> pred = {1.0, 1.0};
  std::vector<double> truth = {0.0, 5.0};
  CHECK(c_index(pred, truth) == doctest::Approx(0.5));

  std::vector<double> no_pairs_pred = {1.0, 2.0};
  std::vector<double> constant_truth = {3.0, 3.0};
  CHECK_THROWS(c_index(no_pairs_pred, constant_truth));
}

TEST_CASE("degenerate inputs return zero and set the flag") {
  std::vector<double> flat = {2.0, 2.0, 2.0};
  std::vector<double> live = {1.0, 2.0, 3.0};
  bool flag = false;
  CHECK(spearman(flat, live, &flag) == 0.0);
  CHECK(flag);
  flag = false;
  CHECK(kendall_tau_b(live, flat, &flag) == 0.0);
  CHECK(flag);
  flag = false;
  CHECK(pearson(flat, live, &flag) == 0.0);
  CHECK(flag);
}

TEST_CASE("perfect and reversed orders hit the rank-correlation extremes") {
  std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<double> b = {10.0, 20.0, 30.0, 40.0, 50.0};
  std::vector<double> r = {5.0, 4.0, 3.0, 2.0, 1.0};
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  CHECK(kendall_tau_b(a, b) == doctest::Approx(1.0));
  CHECK(c_index(a, b) == doctest::Approx(1.0));
  CHECK(spearman(a, r) == doctest::Approx(-1.0));
  CHECK(kendall_tau_b(a, r) == doctest::Approx(-1.0));
  CHECK(c_index(a, r) == doctest::Approx(0.0));
}

TEST_CASE("mse and pearson basics") {
  std::vector<double> x = {0.0, 0.0};
  std::vector<double> y = {1.0, 0.0};
  CHECK(mse(x, y) == doctest::Approx(0.5));
  std::vector<double> a = {1.0, 2.0, 3.0};
  std::vector<double> b = {2.0, 4.0, 6.0};
  CHECK(pearson(a, b) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("macro report averages columns and tolerates degenerate truth") {
  // two targets over three rows; second truth column is constant
  std::vector<double> pred = {1.0, 9.0, 2.0, 9.0, 3.0, 9.0};
  std::vector<double> truth = {1.0, 5.0, 2.0, 5.0, 3.0, 5.0};
  MetricReport rep = macro_report(pred, truth, 3, 2);
  REQUIRE(rep.per_target.size() == 2);
  CHECK(rep.per_target[0].spearman == doctest::Approx(1.0));
  CHECK(rep.per_target[1].degenerate);
  CHECK(rep.per_target[1].c_index == doctest::Approx(0.5));
  CHECK(rep.degenerate_columns == 1);
  CHECK(rep.macro.spearman == doctest::Approx(0.5));

  CHECK_THROWS(macro_report(pred, truth, 1, 6));
}

TEST_CASE("report serialization carries names and both blocks") {
  std::vector<double> pred = {1.0, 2.0, 2.0, 1.0};
  std::vector<double> truth = {1.0, 2.0, 2.0, 1.0};
  MetricReport rep = macro_report(pred, truth, 2, 2);
  std::vector<std::string> names = {"first", "second"};
  auto doc = nlohmann::json::parse(report_to_json(rep, names));
  REQUIRE(doc.contains("per_target"));
  REQUIRE(doc.contains("macro"));
  CHECK(doc["per_target"].contains("first"));
  CHECK(doc["per_target"]["second"].contains("kendall_tau_b"));
  CHECK(doc["macro"].contains("c_index"));

  auto anon = nlohmann::json::parse(report_to_json(rep));
  CHECK(anon["per_target"].contains("target_0"));
}
