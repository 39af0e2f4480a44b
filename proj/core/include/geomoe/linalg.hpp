#pragma once

#include <vector>

namespace geomoe {

// Plain row-major matrix for the non-differentiable solver path. Tensor is
// deliberately not used here: the labeling solver and SVT run thousands of
// factorizations and need no tape.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) {
    return a[static_cast<size_t>(i) * cols + j];
  }
  double operator()(int i, int j) const {
    return a[static_cast<size_t>(i) * cols + j];
  }

  static Matrix identity(int n);
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
double fro_norm(const Matrix& a);
double dot_all(const Matrix& a, const Matrix& b);

// Thin SVD, A = U diag(sigma) V^T with sigma descending and nonnegative.
// One-sided Jacobi; throws on non-convergence with the residual in the
// message. No gradient support.
struct Svd {
  Matrix u;                   // rows x k
  std::vector<double> sigma;  // k = min(rows, cols)
  Matrix v;                   // cols x k
};
Svd svd(const Matrix& a);

// Symmetric eigendecomposition, S = Q diag(lambda) Q^T, lambda ascending.
// Cyclic Jacobi. Throws if S deviates from symmetry by more than 1e-10.
struct EigSym {
  std::vector<double> lambda;
  Matrix q;  // columns are eigenvectors
};
EigSym eig_sym(const Matrix& s);

// Matrix square root / pseudo-inverse square root of a PSD matrix.
// Eigenvalues below 1e-10 are treated as exact zeros (graph Laplacians have
// one null direction per connected component).
Matrix psd_sqrt(const Matrix& s);
Matrix psd_pinv_sqrt(const Matrix& s);

// Singular value soft-thresholding: U max(sigma - tau, 0) V^T.
Matrix svt(const Matrix& a, double tau);

double nuclear_norm(const Matrix& a);

}  // namespace geomoe
