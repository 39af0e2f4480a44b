#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "geomoe/linalg.hpp"

namespace geomoe {

enum class Outcome { kWinA, kWinB, kTie };

struct ComparisonRecord {
  int item_a = 0;
  int item_b = 0;
  int target = 0;
  Outcome outcome = Outcome::kWinA;
};

struct SolverConfig {
  double alpha = 1.0;       // likelihood scale
  double lambda = 1e-2;     // nuclear-norm weight
  int max_iters = 500;
  double rel_tol = 1e-8;
  double bb_min = 1e-6;
  double bb_max = 1e2;
};

// P(a preferred over b) = logistic(theta_a - theta_b).
double mnl_probability(double theta_a, double theta_b);

// Normalized log-likelihood and its exact gradient. Ties expand into two
// half-weight directed records; the normalizer stays the original record
// count, so theta = 0 gives exactly -ln 2.
struct LoglikGrad {
  double loglik = 0.0;
  Matrix grad;  // N x T, d loglik / d theta
};
LoglikGrad mnl_loglik_and_grad(std::span<const ComparisonRecord> records,
                               const Matrix& theta);

// L = D - A with A_ab = comparison multiplicity between a and b, pooled over
// all targets.
Matrix graph_laplacian(std::span<const ComparisonRecord> records, int n);

// Connected components of the comparison graph; -1 never appears, isolated
// items get their own singleton component.
std::vector<int> connected_components(
    std::span<const ComparisonRecord> records, int n);

// BB1 step length <s,s>/<s,g_delta> clipped to [lo, hi]; a nonpositive
// denominator falls back to prev.
double bb_step(const Matrix& s, const Matrix& g_delta, double prev, double lo,
               double hi);

struct FitResult {
  Matrix theta;                          // N x T, centered per component
  std::vector<double> objective_trace;   // accepted iterations, head = initial
  std::vector<int> component;            // component id per item
  std::vector<bool> isolated;            // true -> utilities pinned at 0
  int iterations = 0;
  bool converged = false;
  double lambda = 0.0;                   // the weight actually used
};

// Proximal gradient on the transformed variable Phi = L^{1/2} Theta
// restricted to range(L): BB step with backtracking on the objective
// -alpha * loglik + lambda * ||Phi||_*, SVT prox, then Theta recovered via
// the pseudo-inverse root and re-centered per component.
FitResult fit_mnl(std::span<const ComparisonRecord> records, int n, int t,
                  const SolverConfig& config);

// Runs fit_mnl over a lambda grid, scoring each fit by held-out mean
// log-likelihood (every 5th record withheld), then refits on all records
// with the winner.
FitResult fit_mnl_grid(std::span<const ComparisonRecord> records, int n,
                       int t, SolverConfig config,
                       std::span<const double> lambda_grid);

// Outcome sampling by the MNL probabilities over a per-target design that is
// connected by construction (shuffled ring plus random extra pairs).
// Roughly pairs_per_item comparisons touch each item per target.
std::vector<ComparisonRecord> simulate_comparisons(const Matrix& theta_star,
                                                   int pairs_per_item,
                                                   std::uint64_t seed);

// One record per line: item_a<TAB>item_b<TAB>target_index<TAB>outcome with
// outcome in {A, B, T}. Throws on malformed lines naming the line number.
std::vector<ComparisonRecord> parse_comparisons(std::istream& in);
std::string format_comparisons(std::span<const ComparisonRecord> records);

}  // namespace geomoe
