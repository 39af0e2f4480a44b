#include "geomoe/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>

#include "geomoe/rng.hpp"

namespace geomoe {

double mnl_probability(double theta_a, double theta_b) {
  const double d = theta_a - theta_b;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(d)) without overflow.
double log1pexp(double d) {
  if (d > 0.0) return d + std::log1p(std::exp(-d));
  return std::log1p(std::exp(d));
}

struct DirectedRecord {
  int winner, loser, target;
  double weight;
};

// Ties become two half-weight directed records; the likelihood normalizer
// stays the ORIGINAL record count.
std::vector<DirectedRecord> expand(std::span<const ComparisonRecord> records) {
  std::vector<DirectedRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    switch (r.outcome) {
      case Outcome::kWinA:
        out.push_back({r.item_a, r.item_b, r.target, 1.0});
        break;
      case Outcome::kWinB:
        out.push_back({r.item_b, r.item_a, r.target, 1.0});
        break;
      case Outcome::kTie:
        out.push_back({r.item_a, r.item_b, r.target, 0.5});
        out.push_back({r.item_b, r.item_a, r.target, 0.5});
        break;
    }
  }
  return out;
}

void validate_records(std::span<const ComparisonRecord> records, int n,
                      int t) {
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.item_a == r.item_b)
      throw std::invalid_argument("comparison " + std::to_string(i) +
                                  ": item compared with itself");
    if (r.item_a < 0 || r.item_a >= n || r.item_b < 0 || r.item_b >= n)
      throw std::invalid_argument("comparison " + std::to_string(i) +
                                  ": item index out of range [0," +
                                  std::to_string(n) + ")");
    if (r.target < 0 || r.target >= t)
      throw std::invalid_argument("comparison " + std::to_string(i) +
                                  ": target index out of range [0," +
                                  std::to_string(t) + ")");
  }
}

}  // namespace

LoglikGrad mnl_loglik_and_grad(std::span<const ComparisonRecord> records,
                               const Matrix& theta) {
  if (records.empty())
    throw std::invalid_argument("mnl_loglik_and_grad: no comparison records");
  validate_records(records, theta.rows, theta.cols);
  LoglikGrad out;
  out.grad = Matrix(theta.rows, theta.cols);
  const double inv_n = 1.0 / static_cast<double>(records.size());
  for (const auto& r : expand(records)) {
    const double d = theta(r.winner, r.target) - theta(r.loser, r.target);
    out.loglik += r.weight * (d - log1pexp(d));
    // d/d theta of [d - log(1+e^d)] = 1 - logistic(d)
    const double coeff = r.weight * (1.0 - mnl_probability(d, 0.0)) * inv_n;
    out.grad(r.winner, r.target) += coeff;
    out.grad(r.loser, r.target) -= coeff;
  }
  out.loglik *= inv_n;
  return out;
}

Matrix graph_laplacian(std::span<const ComparisonRecord> records, int n) {
  Matrix l(n, n);
  for (const auto& r : records) {
    l(r.item_a, r.item_b) -= 1.0;
    l(r.item_b, r.item_a) -= 1.0;
    l(r.item_a, r.item_a) += 1.0;
    l(r.item_b, r.item_b) += 1.0;
  }
  return l;
}

std::vector<int> connected_components(
    std::span<const ComparisonRecord> records, int n) {
  std::vector<std::vector<int>> adj(static_cast<size_t>(n));
  for (const auto& r : records) {
    adj[static_cast<size_t>(r.item_a)].push_back(r.item_b);
    adj[static_cast<size_t>(r.item_b)].push_back(r.item_a);
  }
  std::vector<int> comp(static_cast<size_t>(n), -1);
  int next = 0;
  std::vector<int> stack;
  for (int start = 0; start < n; ++start) {
    if (comp[static_cast<size_t>(start)] != -1) continue;
    comp[static_cast<size_t>(start)] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : adj[static_cast<size_t>(v)])
        if (comp[static_cast<size_t>(w)] == -1) {
          comp[static_cast<size_t>(w)] = next;
          stack.push_back(w);
        }
    }
    ++next;
  }
  return comp;
}

double bb_step(const Matrix& s, const Matrix& g_delta, double prev, double lo,
               double hi) {
  const double num = dot_all(s, s);
  const double den = dot_all(s, g_delta);
  if (den <= 0.0) return prev;
  return std::clamp(num / den, lo, hi);
}

namespace {

void center_per_component(Matrix& theta, const std::vector<int>& comp,
                          const std::vector<bool>& isolated) {
  int n_comp = 0;
  for (int c : comp) n_comp = std::max(n_comp, c + 1);
  for (int t = 0; t < theta.cols; ++t) {
    std::vector<double> sum(static_cast<size_t>(n_comp), 0.0);
    std::vector<int> count(static_cast<size_t>(n_comp), 0);
    for (int i = 0; i < theta.rows; ++i) {
      sum[static_cast<size_t>(comp[static_cast<size_t>(i)])] += theta(i, t);
      ++count[static_cast<size_t>(comp[static_cast<size_t>(i)])];
    }
    for (int i = 0; i < theta.rows; ++i) {
      const int c = comp[static_cast<size_t>(i)];
      theta(i, t) -= sum[static_cast<size_t>(c)] / count[static_cast<size_t>(c)];
      if (isolated[static_cast<size_t>(i)]) theta(i, t) = 0.0;
    }
  }
}

}  // namespace

FitResult fit_mnl(std::span<const ComparisonRecord> records, int n, int t,
                  const SolverConfig& config) {
  if (records.empty())
    throw std::invalid_argument("fit_mnl: no comparison records");
  if (config.lambda < 0.0)
    throw std::invalid_argument("fit_mnl: lambda must be >= 0");
  validate_records(records, n, t);

  FitResult res;
  res.lambda = config.lambda;
  res.component = connected_components(records, n);
  res.isolated.assign(static_cast<size_t>(n), false);
  {
    std::vector<int> comp_size;
    for (int c : res.component) {
      if (c >= static_cast<int>(comp_size.size()))
        comp_size.resize(static_cast<size_t>(c) + 1, 0);
      ++comp_size[static_cast<size_t>(c)];
    }
    for (int i = 0; i < n; ++i)
      if (comp_size[static_cast<size_t>(res.component[static_cast<size_t>(i)])] < 2)
        res.isolated[static_cast<size_t>(i)] = true;
  }

  const Matrix lap = graph_laplacian(records, n);
  const Matrix lhalf = psd_sqrt(lap);
  const Matrix lpinv = psd_pinv_sqrt(lap);

  // Objective in the transformed variable: F(Phi) = -alpha L(theta(Phi))
  // + lambda ||Phi||_*, theta = L^{+1/2} Phi. Phi stays in range(L) because
  // both the gradient image and the SVT of a range-restricted matrix remain
  // range-restricted.
  auto theta_of = [&](const Matrix& phi) { return matmul(lpinv, phi); };
  auto objective_and_grad = [&](const Matrix& phi, Matrix* grad_out) {
    const Matrix theta = theta_of(phi);
    const LoglikGrad lg = mnl_loglik_and_grad(records, theta);
    if (grad_out) *grad_out = -config.alpha * matmul(lpinv, lg.grad);
    return -config.alpha * lg.loglik;
  };

  Matrix phi(n, t);
  Matrix grad;
  double smooth = objective_and_grad(phi, &grad);
  double objective = smooth + config.lambda * nuclear_norm(phi);
  res.objective_trace.push_back(objective);

  double gamma = 1.0;
  Matrix prev_phi = phi;
  Matrix prev_grad = grad;
  bool have_prev = false;

  for (int it = 0; it < config.max_iters; ++it) {
    if (have_prev) {
      const Matrix s = phi - prev_phi;
      const Matrix gd = grad - prev_grad;
      gamma = bb_step(s, gd, gamma, config.bb_min, config.bb_max);
    }
    // Backtracking: halve the step until the full objective stops increasing.
    Matrix candidate;
    double cand_obj = 0.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      candidate = svt(phi - gamma * grad, config.lambda * gamma);
      cand_obj = objective_and_grad(candidate, nullptr) +
                 config.lambda * nuclear_norm(candidate);
      if (cand_obj <= objective + 1e-15) {
        accepted = true;
        break;
      }
      gamma *= 0.5;
      if (gamma < 1e-18) break;
    }
    if (!accepted) break;  // step collapsed: already at a stationary point

    prev_phi = phi;
    prev_grad = grad;
    have_prev = true;
    phi = candidate;
    smooth = objective_and_grad(phi, &grad);
    const double prev_obj = objective;
    objective = cand_obj;
    res.objective_trace.push_back(objective);
    res.iterations = it + 1;
    if (std::abs(prev_obj - objective) <
        config.rel_tol * std::max(1.0, std::abs(prev_obj))) {
      res.converged = true;
      break;
    }
  }

  res.theta = theta_of(phi);
  center_per_component(res.theta, res.component, res.isolated);
  return res;
}

FitResult fit_mnl_grid(std::span<const ComparisonRecord> records, int n,
                       int t, SolverConfig config,
                       std::span<const double> lambda_grid) {
  if (lambda_grid.empty())
    throw std::invalid_argument("fit_mnl_grid: empty lambda grid");
  if (records.size() < 10) {
    config.lambda = lambda_grid[0];
    return fit_mnl(records, n, t, config);
  }
  std::vector<ComparisonRecord> train, held;
  for (size_t i = 0; i < records.size(); ++i) {
    if (i % 5 == 4)
      held.push_back(records[i]);
    else
      train.push_back(records[i]);
  }
  double best_ll = -1e300;
  double best_lambda = lambda_grid[0];
  for (double lambda : lambda_grid) {
    SolverConfig c = config;
    c.lambda = lambda;
    const FitResult fit = fit_mnl(train, n, t, c);
    // Held-out record may touch an item unseen in training; its utility is
    // whatever centering left there (typically 0), which is the honest prior.
    double ll = 0.0;
    for (const auto& r : held) {
      const double d = fit.theta(r.item_a, r.target) -
                       fit.theta(r.item_b, r.target);
      switch (r.outcome) {
        case Outcome::kWinA: ll += d - log1pexp(d); break;
        case Outcome::kWinB: ll += -d - log1pexp(-d); break;
        case Outcome::kTie: ll += 0.5 * (d - log1pexp(d)) +
                                  0.5 * (-d - log1pexp(-d));
                            break;
      }
    }
    if (ll > best_ll) {
      best_ll = ll;
      best_lambda = lambda;
    }
  }
  config.lambda = best_lambda;
  return fit_mnl(records, n, t, config);
}

std::vector<ComparisonRecord> simulate_comparisons(const Matrix& theta_star,
                                                   int pairs_per_item,
                                                   std::uint64_t seed) {
  const int n = theta_star.rows;
  const int t = theta_star.cols;
  if (n < 2)
    throw std::invalid_argument("simulate_comparisons: needs >= 2 items");
  Rng rng(seed);
  std::vector<ComparisonRecord> out;
  for (int target = 0; target < t; ++target) {
    // Shuffled ring keeps every target's graph connected by construction.
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i)
      pairs.emplace_back(order[static_cast<size_t>(i)],
                         order[static_cast<size_t>((i + 1) % n)]);
    const int total = std::max(n, n * pairs_per_item / 2);
    while (static_cast<int>(pairs.size()) < total) {
      const int a = rng.uniform_int(0, n - 1);
      int b = rng.uniform_int(0, n - 2);
      if (b >= a) ++b;
      pairs.emplace_back(a, b);
    }
    for (const auto& [a, b] : pairs) {
      const double p = mnl_probability(theta_star(a, target),
                                       theta_star(b, target));
      out.push_back({a, b, target,
                     rng.uniform01() < p ? Outcome::kWinA : Outcome::kWinB});
    }
  }
  return out;
}

std::vector<ComparisonRecord> parse_comparisons(std::istream& in) {
  std::vector<ComparisonRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, t, o;
    if (!std::getline(ls, a, '\t') || !std::getline(ls, b, '\t') ||
        !std::getline(ls, t, '\t') || !std::getline(ls, o))
      throw std::invalid_argument("comparisons line " +
                                  std::to_string(lineno) +
                                  ": expected 4 tab-separated fields");
    ComparisonRecord r;
    try {
      r.item_a = std::stoi(a);
      r.item_b = std::stoi(b);
      r.target = std::stoi(t);
    } catch (const std::exception&) {
      throw std::invalid_argument("comparisons line " +
                                  std::to_string(lineno) +
                                  ": non-integer index field");
    }
    if (o == "A")
      r.outcome = Outcome::kWinA;
    else if (o == "B")
      r.outcome = Outcome::kWinB;
    else if (o == "T")
      r.outcome = Outcome::kTie;
    else
      throw std::invalid_argument("comparisons line " +
                                  std::to_string(lineno) + ": outcome '" + o +
                                  "' not in {A, B, T}");
    out.push_back(r);
  }
  return out;
}

std::string format_comparisons(std::span<const ComparisonRecord> records) {
  std::ostringstream os;
  for (const auto& r : records) {
    const char* o = r.outcome == Outcome::kWinA   ? "A"
                    : r.outcome == Outcome::kWinB ? "B"
                                                  : "T";
    os << r.item_a << '\t' << r.item_b << '\t' << r.target << '\t' << o
       << '\n';
  }
  return os.str();
}

}  // namespace geomoe
