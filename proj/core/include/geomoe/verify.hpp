#pragma once

#include <string>
#include <vector>

namespace geomoe {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

// Invariant sweeps over the manifold operations: ball margin, unit norms,
// gyrogroup left identity/inverse (<= 1e-10), exp/log round-trips (<= 1e-9),
// 10^4 random inputs per operation.
std::vector<CheckResult> verify_manifolds();

// Finite-difference agreement <= 1e-4 for every differentiable operation and
// for the full model loss at d_model = 16 across 10 seeds.
std::vector<CheckResult> verify_gradients();

// Exact agreement of the rank metrics with independent direct-counting
// oracles on 10^3 tie-containing vectors, plus the hand cases 0.5, 1/3, 2/3.
std::vector<CheckResult> verify_metrics();

// Soft winsorization: fixed points, saturation bound, strict monotonicity on
// a 10^4-point grid.
std::vector<CheckResult> verify_winsorization();

// Planted rank-2 utility recovery from simulated comparisons: per-target
// Spearman >= 0.9, non-increasing objective, centered columns.
std::vector<CheckResult> verify_labeling_recovery();

// Diagonal shrinkage exactness and proximal optimality of the singular value
// thresholding operator on random matrices.
std::vector<CheckResult> verify_svt();

// All of the above in order.
std::vector<CheckResult> run_verification_suite();

}  // namespace geomoe
