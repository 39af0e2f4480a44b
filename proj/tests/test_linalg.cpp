#include <cmath>

#include "doctest.h"
#include "geomoe/linalg.hpp"
#include "geomoe/rng.hpp"

using namespace geomoe;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.a) x = rng.normal();
  return m;
}

double max_abs(const Matrix& m) {
  double v = 0.0;
  for (double x : m.a) v = std::max(v, std::abs(x));
  return v;
}

}  // namespace

TEST_CASE("svd reconstructs the input with orthonormal factors") {
  Rng rng(17);
  Matrix a = random_matrix(5, 3, rng);
  Svd f = svd(a);

  Matrix sigma(3, 3);
  for (int i = 0; i < 3; ++i) sigma(i, i) = f.sigma[static_cast<size_t>(i)];
  Matrix recon = matmul(matmul(f.u, sigma), transpose(f.v));
  CHECK(max_abs(recon - a) < 1e-10);

  CHECK(f.sigma[0] >= f.sigma[1]);
  CHECK(f.sigma[1] >= f.sigma[2]);
  CHECK(f.sigma[2] >= 0.0);

  Matrix utu = matmul(transpose(f.u), f.u);
  Matrix vtv = matmul(transpose(f.v), f.v);
  CHECK(max_abs(utu - Matrix::identity(3)) < 1e-10);
  CHECK(max_abs(vtv - Matrix::identity(3)) < 1e-10);
}

TEST_CASE("path-graph laplacian has eigenvalues 0, 1, 3") {
  Matrix l(3, 3);
  l(0, 0) = 1;  l(0, 1) = -1;
  l(1, 0) = -1; l(1, 1) = 2;  l(1, 2) = -1;
  l(2, 1) = -1; l(2, 2) = 1;
  EigSym e = eig_sym(l);
  CHECK(e.lambda[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(e.lambda[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.lambda[2] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("eig_sym rejects asymmetric input") {
  Matrix m(2, 2);
  m(0, 1) = 1.0;  // m(1,0) left at 0
  CHECK_THROWS(eig_sym(m));
}

TEST_CASE("psd square roots: sqrt*sqrt = S, pinv_sqrt ignores the null space") {
  Rng rng(23);
  Matrix b = random_matrix(4, 4, rng);
  Matrix s = matmul(b, transpose(b));  // PSD, almost surely full rank
  Matrix r = psd_sqrt(s);
  CHECK(max_abs(matmul(r, r) - s) < 1e-9);

  // Laplacian of a connected pair: rank 1 with null vector (1,1)/sqrt(2).
  Matrix l(2, 2);
  l(0, 0) = 1; l(0, 1) = -1; l(1, 0) = -1; l(1, 1) = 1;
  Matrix h = psd_pinv_sqrt(l);
  // h * sqrt(l) should be the projector onto the non-null eigenspace.
  Matrix proj = matmul(h, psd_sqrt(l));
  Matrix expect(2, 2);
  expect(0, 0) = 0.5; expect(0, 1) = -0.5;
  expect(1, 0) = -0.5; expect(1, 1) = 0.5;
  CHECK(max_abs(proj - expect) < 1e-9);
}

TEST_CASE("svt soft-shrinks the diagonal example exactly") {
  Matrix d(3, 3);
  d(0, 0) = 3.0; d(1, 1) = 1.0; d(2, 2) = 0.2;
  Matrix out = svt(d, 0.5);
  CHECK(out(0, 0) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(out(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out(2, 2) == doctest::Approx(0.0).epsilon(1e-12));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(std::abs(out(i, j)) < 1e-12);
}

TEST_CASE("nuclear norm is the singular value sum") {
  Rng rng(31);
  Matrix a = random_matrix(4, 3, rng);
  Svd f = svd(a);
  double s = 0.0;
  for (double x : f.sigma) s += x;
  CHECK(nuclear_norm(a) == doctest::Approx(s).epsilon(1e-12));
}
