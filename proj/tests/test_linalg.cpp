#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>

#include "asnet/error.hpp"
#include "asnet/linalg.hpp"
#include "test_util.hpp"

using namespace asnet;
using linalg::Matrix;
using linalg::Vector;

TEST_CASE("thin_svd of a diagonal matrix") {
  Matrix a = Matrix::Zero(3, 3);
  a.diagonal() << 3, 2, 1;
  const auto r = linalg::thin_svd(a, 3);
  CHECK(r.sigma(0) == doctest::Approx(3).epsilon(1e-14));
  CHECK(r.sigma(1) == doctest::Approx(2).epsilon(1e-14));
  CHECK(r.sigma(2) == doctest::Approx(1).epsilon(1e-14));
  CHECK((r.u - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("thin_svd of zeros") {
  const auto r = linalg::thin_svd(Matrix::Zero(4, 4), 2);
  CHECK(r.sigma.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("thin_svd matches Jacobi oracle on dense path") {
  const Matrix a = testutil::random_matrix(20, 50, 11);
  const auto r = linalg::thin_svd(a, 20);
  const auto [vals, vecs] = testutil::jacobi_eigen(a * a.transpose());
  for (int i = 0; i < 20; ++i)
    CHECK(testutil::rel_err(r.sigma(i), std::sqrt(vals(i))) < 1e-8);
  CHECK(linalg::orthonormality_error(r.u) < 1e-10);
  CHECK(linalg::orthonormality_error(r.vt.transpose()) < 1e-10);
  const Matrix rec = r.u * r.sigma.asDiagonal() * r.vt;
  CHECK((rec - a).norm() / a.norm() < 1e-8);
}

TEST_CASE("thin_svd randomized path on a decaying spectrum") {
  const Matrix q1 = Eigen::HouseholderQR<Matrix>(testutil::random_matrix(100, 30, 3)).householderQ() *
                    Matrix::Identity(100, 30);
  const Matrix q2 = Eigen::HouseholderQR<Matrix>(testutil::random_matrix(80, 30, 4)).householderQ() *
                    Matrix::Identity(80, 30);
  Vector s(30);
  for (int i = 0; i < 30; ++i) s(i) = std::pow(2.0, -i);
  const Matrix a = q1 * s.asDiagonal() * q2.transpose();
  const auto r = linalg::thin_svd(a, 5);
  REQUIRE(r.sigma.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(testutil::rel_err(r.sigma(i), s(i)) < 1e-8);
  CHECK(linalg::orthonormality_error(r.u) < 1e-10);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(std::abs(r.u.col(i).dot(q1.col(i))) - 1.0) < 1e-6);
}

TEST_CASE("thin_svd sign convention and determinism") {
  const Matrix a = testutil::random_matrix(40, 60, 5);
  const auto r1 = linalg::thin_svd(a, 6, 10, 2, 9);
  const auto r2 = linalg::thin_svd(a, 6, 10, 2, 9);
  CHECK(r1.u == r2.u);
  CHECK(r1.sigma == r2.sigma);
  for (int j = 0; j < r1.u.cols(); ++j) {
    Eigen::Index idx;
    r1.u.col(j).cwiseAbs().maxCoeff(&idx);
    CHECK(r1.u(idx, j) >= 0.0);
  }
}

TEST_CASE("thin_svd errors") {
  const Matrix a = testutil::random_matrix(4, 3, 1);
  CHECK_THROWS_AS(linalg::thin_svd(a, 0), ShapeError);
  CHECK_THROWS_AS(linalg::thin_svd(a, 4), ShapeError);
  Matrix bad = a;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(linalg::thin_svd(bad, 2), NumericError);
}

TEST_CASE("eig_psd examples") {
  Matrix c(2, 2);
  c << 1.0 / 3, 1.0 / 4, 1.0 / 4, 1.0 / 3;
  const auto r = linalg::eig_psd(c, 2);
  CHECK(r.values(0) == doctest::Approx(7.0 / 12).epsilon(1e-14));
  CHECK(r.values(1) == doctest::Approx(1.0 / 12).epsilon(1e-14));
  CHECK(std::abs(std::abs(r.vectors(0, 0)) - 1 / std::sqrt(2.0)) < 1e-14);

  const auto id = linalg::eig_psd(Matrix::Identity(4, 4), 4);
  CHECK((id.values.array() - 1.0).abs().maxCoeff() < 1e-14);

  Matrix asym = Matrix::Identity(3, 3);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(linalg::eig_psd(asym, 2), ShapeError);
}

TEST_CASE("eig_psd agrees with squared singular values") {
  const Matrix g = testutil::random_matrix(12, 40, 8);
  const Matrix c = g * g.transpose() / 40.0;
  const auto e = linalg::eig_psd(c, 12);
  const auto s = linalg::thin_svd(g / std::sqrt(40.0), 12);
  for (int i = 0; i < 12; ++i) CHECK(testutil::rel_err(e.values(i), s.sigma(i) * s.sigma(i)) < 1e-10);
  CHECK(linalg::orthonormality_error(e.vectors) < 1e-10);
}

TEST_CASE("lstsq small examples") {
  const Matrix x = linalg::lstsq(Matrix::Identity(3, 3), Matrix::Constant(3, 1, 2.0), 0.0);
  CHECK((x.array() - 2.0).abs().maxCoeff() < 1e-14);

  // two observations of one unknown: least squares gives the mean
  Matrix phi(2, 1);
  phi << 1, 1;
  Matrix y(2, 1);
  y << 1, 3;
  CHECK(linalg::lstsq(phi, y, 0.0)(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("lstsq satisfies the normal equations and is a minimizer") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix phi = testutil::random_matrix(30, 8, seed);
    const Matrix y = testutil::random_matrix(30, 3, seed + 100);
    const double ridge = seed % 2 ? 1e-3 : 0.0;
    const Matrix x = linalg::lstsq(phi, y, ridge);
    const double m = 30.0;
    const Matrix residual = phi.transpose() * (phi * x - y) + m * ridge * x;
    CHECK(residual.cwiseAbs().maxCoeff() < 1e-9 * (1.0 + phi.norm() * y.norm()));

    auto objective = [&](const Matrix& z) {
      return (phi * z - y).squaredNorm() / m + ridge * z.squaredNorm();
    };
    const double best = objective(x);
    for (std::uint64_t k = 0; k < 20; ++k) {
      const Matrix probe = x + 1e-3 * testutil::random_matrix(8, 3, 1000 + k);
      CHECK(objective(probe) >= best);
    }
  }
}

TEST_CASE("lstsq underdetermined uses regularized normal equations") {
  const Matrix phi = testutil::random_matrix(4, 10, 2);
  const Matrix y = testutil::random_matrix(4, 1, 3);
  const Matrix x = linalg::lstsq(phi, y, 1e-6);
  CHECK(linalg::all_finite(x));
  CHECK((phi * x - y).norm() < 1e-3);
  CHECK_THROWS_AS(linalg::lstsq(phi, testutil::random_matrix(5, 1, 0), 0.0), ShapeError);
}

TEST_CASE("canonicalize_signs flips matching rows") {
  Matrix u(2, 1);
  u << 0.6, -0.8;
  Matrix vt(1, 2);
  vt << 1.0, 2.0;
  linalg::canonicalize_signs(u, &vt);
  CHECK(u(1, 0) == 0.8);
  CHECK(vt(0, 1) == -2.0);
}

TEST_CASE("thin_svd survives a sketch on which divide and conquer breaks down") {
  // frequent-directions state captured from a trained network; rank 3 plus roundoff
  std::ifstream in(std::string(ASNET_TEST_DATA) + "/bdcsvd_nan.txt");
  REQUIRE(in);
  Eigen::Index rows = 0, cols = 0;
  in >> rows >> cols;
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      std::string token;
      in >> token;
      a(i, j) = std::strtod(token.c_str(), nullptr);
    }
  REQUIRE(in);
  const auto svd = linalg::thin_svd(a, rows);
  CHECK(linalg::all_finite(svd.u));
  CHECK(svd.sigma.allFinite());
  CHECK((svd.u * svd.sigma.asDiagonal() * svd.vt - a).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(linalg::orthonormality_error(svd.u.leftCols(3)) < 1e-12);
}
