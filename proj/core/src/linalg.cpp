#include "geomoe/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace geomoe {

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw std::invalid_argument("matmul: inner dimensions " +
                                std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows));
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int p = 0; p < a.cols; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) c(i, j) += aip * b(p, j);
    }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  for (size_t i = 0; i < c.a.size(); ++i) c.a[i] += b.a[i];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  for (size_t i = 0; i < c.a.size(); ++i) c.a[i] -= b.a[i];
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (auto& x : c.a) x *= s;
  return c;
}

double fro_norm(const Matrix& a) {
  double s = 0.0;
  for (double x : a.a) s += x * x;
  return std::sqrt(s);
}

double dot_all(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.a.size(); ++i) s += a.a[i] * b.a[i];
  return s;
}

namespace {

constexpr int kMaxSweeps = 60;

// Hestenes one-sided Jacobi on the columns of A (requires rows >= cols).
// On exit the columns of `work` are mutually orthogonal and equal U*Sigma;
// `v` accumulates the right rotations.
void one_sided_jacobi(Matrix& work, Matrix& v) {
  const int m = work.rows, n = work.cols;
  const double tol = 1e-14;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (int i = 0; i < m; ++i) {
          const double ap = work(i, p), aq = work(i, q);
          alpha += ap * ap;
          beta += aq * aq;
          gamma += ap * aq;
        }
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0)
          continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (int i = 0; i < m; ++i) {
          const double ap = work(i, p), aq = work(i, q);
          work(i, p) = cs * ap - sn * aq;
          work(i, q) = sn * ap + cs * aq;
        }
        for (int i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = cs * vp - sn * vq;
          v(i, q) = sn * vp + cs * vq;
        }
      }
    }
    if (!rotated) return;
  }
  // Report the remaining column-coherence as the residual.
  double resid = 0.0;
  for (int p = 0; p < n - 1; ++p)
    for (int q = p + 1; q < n; ++q) {
      double gamma = 0.0;
      for (int i = 0; i < m; ++i) gamma += work(i, p) * work(i, q);
      resid = std::max(resid, std::abs(gamma));
    }
  throw std::runtime_error(
      "svd: one-sided Jacobi did not converge in " +
      std::to_string(kMaxSweeps) +
      " sweeps, max column coherence " + std::to_string(resid));
}

}  // namespace

Svd svd(const Matrix& a) {
  const bool wide = a.cols > a.rows;
  Matrix work = wide ? transpose(a) : a;
  const int m = work.rows, n = work.cols;
  Matrix v = Matrix::identity(n);
  one_sided_jacobi(work, v);

  std::vector<double> sigma(n);
  Matrix u(m, n);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += work(i, j) * work(i, j);
    s = std::sqrt(s);
    sigma[static_cast<size_t>(j)] = s;
    if (s > 0.0)
      for (int i = 0; i < m; ++i) u(i, j) = work(i, j) / s;
  }

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return sigma[static_cast<size_t>(i)] > sigma[static_cast<size_t>(j)];
  });

  Svd out;
  out.sigma.resize(static_cast<size_t>(n));
  out.u = Matrix(m, n);
  out.v = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    const int src = order[static_cast<size_t>(j)];
    out.sigma[static_cast<size_t>(j)] = sigma[static_cast<size_t>(src)];
    for (int i = 0; i < m; ++i) out.u(i, j) = u(i, src);
    for (int i = 0; i < n; ++i) out.v(i, j) = v(i, src);
  }
  if (wide) std::swap(out.u, out.v);
  return out;
}

EigSym eig_sym(const Matrix& s) {
  if (s.rows != s.cols)
    throw std::invalid_argument("eig_sym: matrix is " +
                                std::to_string(s.rows) + "x" +
                                std::to_string(s.cols));
  const int n = s.rows;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(s(i, j) - s(j, i)) > 1e-10)
        throw std::invalid_argument(
            "eig_sym: asymmetry " + std::to_string(std::abs(s(i, j) - s(j, i))) +
            " at (" + std::to_string(i) + "," + std::to_string(j) +
            ") exceeds 1e-10");

  Matrix d = s;
  // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (d(i, j) + d(j, i));
      d(i, j) = avg;
      d(j, i) = avg;
    }
  Matrix q = Matrix::identity(n);
  const double scale = std::max(fro_norm(d), 1e-300);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2.0 * d(i, j) * d(i, j);
    if (std::sqrt(off) <= 1e-14 * scale) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int qi = p + 1; qi < n; ++qi) {
        const double apq = d(p, qi);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (d(qi, qi) - d(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * cs;
        for (int k = 0; k < n; ++k) {
          const double dkp = d(k, p), dkq = d(k, qi);
          d(k, p) = cs * dkp - sn * dkq;
          d(k, qi) = sn * dkp + cs * dkq;
        }
        for (int k = 0; k < n; ++k) {
          const double dpk = d(p, k), dqk = d(qi, k);
          d(p, k) = cs * dpk - sn * dqk;
          d(qi, k) = sn * dpk + cs * dqk;
        }
        for (int k = 0; k < n; ++k) {
          const double qkp = q(k, p), qkq = q(k, qi);
          q(k, p) = cs * qkp - sn * qkq;
          q(k, qi) = sn * qkp + cs * qkq;
        }
      }
    }
  }

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return d(i, i) < d(j, j); });

  EigSym out;
  out.lambda.resize(static_cast<size_t>(n));
  out.q = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    const int src = order[static_cast<size_t>(j)];
    out.lambda[static_cast<size_t>(j)] = d(src, src);
    for (int i = 0; i < n; ++i) out.q(i, j) = q(i, src);
  }
  return out;
}

namespace {

Matrix psd_function(const Matrix& s, double (*f)(double)) {
  EigSym e = eig_sym(s);
  const int n = s.rows;
  Matrix out(n, n);
  for (int k = 0; k < n; ++k) {
    const double lk = e.lambda[static_cast<size_t>(k)];
    const double fk = lk < 1e-10 ? 0.0 : f(lk);
    if (fk == 0.0) continue;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out(i, j) += fk * e.q(i, k) * e.q(j, k);
  }
  return out;
}

}  // namespace

Matrix psd_sqrt(const Matrix& s) {
  return psd_function(s, [](double x) { return std::sqrt(x); });
}

Matrix psd_pinv_sqrt(const Matrix& s) {
  return psd_function(s, [](double x) { return 1.0 / std::sqrt(x); });
}

Matrix svt(const Matrix& a, double tau) {
  Svd f = svd(a);
  const int k = static_cast<int>(f.sigma.size());
  Matrix out(a.rows, a.cols);
  for (int r = 0; r < k; ++r) {
    const double s = f.sigma[static_cast<size_t>(r)] - tau;
    if (s <= 0.0) continue;
    for (int i = 0; i < a.rows; ++i) {
      const double us = f.u(i, r) * s;
      if (us == 0.0) continue;
      for (int j = 0; j < a.cols; ++j) out(i, j) += us * f.v(j, r);
    }
  }
  return out;
}

double nuclear_norm(const Matrix& a) {
  Svd f = svd(a);
  return std::accumulate(f.sigma.begin(), f.sigma.end(), 0.0);
}

}  // namespace geomoe
