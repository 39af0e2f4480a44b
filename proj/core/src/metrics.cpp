#include "geomoe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace geomoe {

namespace {

void require_same_length(std::span<const double> x, std::span<const double> y,
                         const char* op) {
  if (x.size() != y.size())
    throw std::invalid_argument(std::string(op) + ": lengths " +
                                std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()));
  if (x.size() < 2)
    throw std::invalid_argument(std::string(op) +
                                ": needs at least two values");
}

}  // namespace

std::vector<double> midranks(std::span<const double> x) {
  const size_t n = x.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t i, size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y,
               bool* degenerate) {
  require_same_length(x, y, "pearson");
  const size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y,
                bool* degenerate) {
  require_same_length(x, y, "spearman");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  return pearson(rx, ry, degenerate);
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y,
                     bool* degenerate) {
  require_same_length(x, y, "kendall_tau_b");
  const size_t n = x.size();
  std::int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;  // tied in both: counted nowhere
      if (dx == 0.0) {
        ++ties_x;
      } else if (dy == 0.0) {
        ++ties_y;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double den_x = static_cast<double>(concordant + discordant + ties_x);
  const double den_y = static_cast<double>(concordant + discordant + ties_y);
  if (den_x == 0.0 || den_y == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return static_cast<double>(concordant - discordant) /
         std::sqrt(den_x * den_y);
}

double c_index(std::span<const double> pred, std::span<const double> truth) {
  require_same_length(pred, truth, "c_index");
  const size_t n = pred.size();
  double credit = 0.0;
  std::int64_t comparable = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double dt = truth[i] - truth[j];
      if (dt == 0.0) continue;
      ++comparable;
      const double dp = pred[i] - pred[j];
      if (dp == 0.0)
        credit += 0.5;
      else if ((dp > 0.0) == (dt > 0.0))
        credit += 1.0;
    }
  }
  if (comparable == 0)
    throw std::invalid_argument("c_index: no comparable pairs (constant truth)");
  return credit / static_cast<double>(comparable);
}

double mse(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty())
    throw std::invalid_argument("mse: lengths " + std::to_string(x.size()) +
                                " vs " + std::to_string(y.size()));
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

MetricReport macro_report(std::span<const double> pred,
                          std::span<const double> truth, int rows, int cols) {
  if (rows < 2 || cols < 1)
    throw std::invalid_argument("macro_report: needs >= 2 rows, got " +
                                std::to_string(rows));
  if (pred.size() != truth.size() ||
      pred.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols))
    throw std::invalid_argument("macro_report: buffer sizes do not match " +
                                std::to_string(rows) + "x" +
                                std::to_string(cols));
  MetricReport report;
  report.per_target.resize(static_cast<size_t>(cols));
  std::vector<double> colp(static_cast<size_t>(rows));
  std::vector<double> colt(static_cast<size_t>(rows));
  for (int k = 0; k < cols; ++k) {
    for (int r = 0; r < rows; ++r) {
      colp[static_cast<size_t>(r)] =
          pred[static_cast<size_t>(r) * cols + static_cast<size_t>(k)];
      colt[static_cast<size_t>(r)] =
          truth[static_cast<size_t>(r) * cols + static_cast<size_t>(k)];
    }
    auto& m = report.per_target[static_cast<size_t>(k)];
    bool flag = false;
    m.spearman = spearman(colp, colt, &flag);
    m.kendall = kendall_tau_b(colp, colt, &flag);
    m.pearson = pearson(colp, colt, &flag);
    m.mse = mse(colp, colt);
    try {
      m.c_index = c_index(colp, colt);
    } catch (const std::invalid_argument&) {
      m.c_index = 0.5;  // neutral; degeneracy is reported via the flag
      flag = true;
    }
    m.degenerate = flag;
    if (flag) ++report.degenerate_columns;
    report.macro.spearman += m.spearman;
    report.macro.kendall += m.kendall;
    report.macro.c_index += m.c_index;
    report.macro.pearson += m.pearson;
    report.macro.mse += m.mse;
  }
  const double inv = 1.0 / cols;
  report.macro.spearman *= inv;
  report.macro.kendall *= inv;
  report.macro.c_index *= inv;
  report.macro.pearson *= inv;
  report.macro.mse *= inv;
  report.macro.degenerate = report.degenerate_columns > 0;
  return report;
}

std::string report_to_json(const MetricReport& report,
                           std::span<const std::string> target_names) {
  nlohmann::ordered_json j;
  auto block = [](const TargetMetrics& m) {
    nlohmann::ordered_json b;
    b["spearman"] = m.spearman;
    b["kendall_tau_b"] = m.kendall;
    b["c_index"] = m.c_index;
    b["pearson"] = m.pearson;
    b["mse"] = m.mse;
    b["degenerate"] = m.degenerate;
    return b;
  };
  nlohmann::ordered_json per;
  for (size_t k = 0; k < report.per_target.size(); ++k) {
    const std::string name = k < target_names.size()
                                 ? target_names[k]
                                 : "target_" + std::to_string(k);
    per[name] = block(report.per_target[k]);
  }
  j["per_target"] = per;
  j["macro"] = block(report.macro);
  j["degenerate_columns"] = report.degenerate_columns;
  return j.dump(2);
}

}  // namespace geomoe
