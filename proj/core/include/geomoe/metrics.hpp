#pragma once

#include <span>
#include <string>
#include <vector>

namespace geomoe {

// All metrics are the O(n^2) reference implementations; they ARE the
// contract, not an approximation of one.

// Pearson correlation of mid-ranks (ties get average ranks). Zero rank
// variance in either vector yields 0 and sets *degenerate.
double spearman(std::span<const double> x, std::span<const double> y,
                bool* degenerate = nullptr);

// (C - D) / sqrt((C+D+Tx)(C+D+Ty)); pairs tied in both vectors count in
// neither Tx nor Ty. All-ties in either vector yields 0 with the flag set.
double kendall_tau_b(std::span<const double> x, std::span<const double> y,
                     bool* degenerate = nullptr);

// Over pairs with distinct truth values: concordant 1, prediction-tie 0.5.
// Throws when no comparable pairs exist.
double c_index(std::span<const double> pred, std::span<const double> truth);

double pearson(std::span<const double> x, std::span<const double> y,
               bool* degenerate = nullptr);

double mse(std::span<const double> x, std::span<const double> y);

// Mid-ranks (1-based, average rank over tied runs).
std::vector<double> midranks(std::span<const double> x);

struct TargetMetrics {
  double spearman = 0.0;
  double kendall = 0.0;
  double c_index = 0.5;
  double pearson = 0.0;
  double mse = 0.0;
  bool degenerate = false;
};

struct MetricReport {
  std::vector<TargetMetrics> per_target;
  TargetMetrics macro;
  int degenerate_columns = 0;
};

// pred/truth are row-major [rows x cols]. Each metric per column, then the
// unweighted mean over columns. A column with no comparable truth pairs gets
// c-index 0.5 and the degeneracy flag instead of an error so the macro stays
// finite.
MetricReport macro_report(std::span<const double> pred,
                          std::span<const double> truth, int rows, int cols);

// JSON with "per_target" and "macro" blocks; target_names optional (falls
// back to target_0..target_{K-1}).
std::string report_to_json(const MetricReport& report,
                           std::span<const std::string> target_names = {});

}  // namespace geomoe
