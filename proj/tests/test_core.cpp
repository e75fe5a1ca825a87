#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "nonadiabat/core.hpp"
#include "nonadiabat/rng.hpp"

using namespace nonadiabat;
using Catch::Matchers::WithinAbs;

namespace {

Matrix random_hermitian(Eigen::Index d, Rng& rng) {
  Matrix g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = complex_normal(rng);
  return 0.5 * (g + g.adjoint().eval());
}

Matrix random_positive_definite(Eigen::Index d, Rng& rng) {
  Matrix g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = complex_normal(rng);
  return g * g.adjoint() + 0.1 * Matrix::Identity(d, d);
}

Matrix matrix_exp_hermitian(const Matrix& m) {
  const HermitianEigenSystem es = hermitian_eig(m);
  RealVector exps = es.eigenvalues.array().exp();
  return es.eigenvectors * exps.asDiagonal() * es.eigenvectors.adjoint();
}

}  // namespace

TEST_CASE("hermitian_eig on reference inputs") {
  SECTION("identity") {
    const auto es = hermitian_eig(Matrix::Identity(2, 2));
    CHECK_THAT(es.eigenvalues(0), WithinAbs(1.0, 1e-14));
    CHECK_THAT(es.eigenvalues(1), WithinAbs(1.0, 1e-14));
  }
  SECTION("diagonal input keeps the standard basis") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 1.0 / 3.0;
    m(1, 1) = 2.0 / 3.0;
    const auto es = hermitian_eig(m);
    CHECK_THAT(es.eigenvalues(0), WithinAbs(1.0 / 3.0, 1e-14));
    CHECK_THAT(es.eigenvalues(1), WithinAbs(2.0 / 3.0, 1e-14));
    CHECK_THAT(std::abs(es.eigenvectors(0, 0)), WithinAbs(1.0, 1e-12));
    CHECK_THAT(std::abs(es.eigenvectors(1, 1)), WithinAbs(1.0, 1e-12));
  }
  SECTION("pauli x: hand diagonalization gives -1, +1") {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    const auto es = hermitian_eig(m);
    CHECK_THAT(es.eigenvalues(0), WithinAbs(-1.0, 1e-14));
    CHECK_THAT(es.eigenvalues(1), WithinAbs(1.0, 1e-14));
  }
  SECTION("rejects non-Hermitian input") {
    Matrix m(2, 2);
    m << 0, 1, 0, 0;
    CHECK_THROWS_AS(hermitian_eig(m), NotHermitian);
  }
}

TEST_CASE("hermitian_eig invariants on random matrices") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.index(7));
    const Matrix m = random_hermitian(d, rng);
    const auto es = hermitian_eig(m);
    const Matrix recon =
        es.eigenvectors * es.eigenvalues.cast<Complex>().asDiagonal() *
        es.eigenvectors.adjoint();
    REQUIRE((recon - m).norm() <= 1e-12 * std::max(1.0, m.norm()));
    REQUIRE((es.eigenvectors.adjoint() * es.eigenvectors -
             Matrix::Identity(d, d)).norm() <= 1e-12);
    REQUIRE_THAT(es.eigenvalues.sum(), WithinAbs(m.trace().real(), 1e-12 * std::max(1.0, std::abs(m.trace().real()))));
    for (Eigen::Index i = 1; i < d; ++i)
      REQUIRE(es.eigenvalues(i) >= es.eigenvalues(i - 1));
  }
}

TEST_CASE("matrix_log_pd on reference inputs") {
  SECTION("log of identity is zero") {
    CHECK(max_abs(matrix_log_pd(Matrix::Identity(2, 2))) <= 1e-14);
  }
  SECTION("diagonal exponentials") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = std::exp(1.0);
    m(1, 1) = std::exp(2.0);
    const Matrix l = matrix_log_pd(m);
    CHECK_THAT(l(0, 0).real(), WithinAbs(1.0, 1e-13));
    CHECK_THAT(l(1, 1).real(), WithinAbs(2.0, 1e-13));
    CHECK(std::abs(l(0, 1)) <= 1e-14);
  }
  SECTION("scalar logarithms of diag(1/3, 2/3)") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 1.0 / 3.0;
    m(1, 1) = 2.0 / 3.0;
    const Matrix l = matrix_log_pd(m);
    CHECK_THAT(l(0, 0).real(), WithinAbs(std::log(1.0 / 3.0), 1e-13));
    CHECK_THAT(l(1, 1).real(), WithinAbs(std::log(2.0 / 3.0), 1e-13));
  }
  SECTION("rejects eigenvalues at the floor") {
    Matrix m = Matrix::Zero(2, 2);
    m(1, 1) = 1.0;
    CHECK_THROWS_AS(matrix_log_pd(m), SingularOperand);
  }
}

TEST_CASE("matrix_log_pd round-trips through the exponential") {
  Rng rng(12);
  for (int trial = 0; trial < 15; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.index(7));
    const Matrix m = random_positive_definite(d, rng);
    const Matrix back = matrix_exp_hermitian(matrix_log_pd(m));
    REQUIRE((back - m).norm() <= 1e-10 * m.norm());
  }
}

TEST_CASE("vectorization stacks columns and round-trips exactly") {
  Matrix m(2, 2);
  m << Complex(1, 2), Complex(3, 4), Complex(5, 6), Complex(7, 8);
  const Vector v = vectorize(m);
  // Column stacking: (m00, m10, m01, m11).
  CHECK(v(0) == m(0, 0));
  CHECK(v(1) == m(1, 0));
  CHECK(v(2) == m(0, 1));
  CHECK(v(3) == m(1, 1));
  CHECK(devectorize(v, 2) == m);
}

TEST_CASE("left_right_superop represents rho -> A rho B") {
  SECTION("identity pair gives the identity superoperator") {
    const auto s = left_right_superop(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
    CHECK((s.matrix - Matrix::Identity(4, 4)).norm() <= 1e-15);
  }
  SECTION("projector action on the maximally mixed state") {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 2.0;
    const auto s = left_right_superop(a, Matrix::Identity(2, 2));
    const Matrix out = s.apply(0.5 * Matrix::Identity(2, 2));
    CHECK_THAT(out(0, 0).real(), WithinAbs(1.0, 1e-14));
    CHECK(std::abs(out(1, 1)) <= 1e-14);
  }
  SECTION("jump superoperator maps |e><e| to |g><g|") {
    Matrix sm(2, 2);
    sm << 0, 0, 1, 0;  // |g><e|
    const auto s = left_right_superop(sm, sm.adjoint());
    Matrix excited = Matrix::Zero(2, 2);
    excited(0, 0) = 1.0;
    const Matrix out = s.apply(excited);
    CHECK_THAT(out(1, 1).real(), WithinAbs(1.0, 1e-14));
    CHECK(std::abs(out(0, 0)) <= 1e-14);
  }
  SECTION("mismatched operand dimensions are rejected") {
    CHECK_THROWS_AS(left_right_superop(Matrix::Identity(2, 2), Matrix::Identity(3, 3)),
                    DimensionMismatch);
  }
}

TEST_CASE("superoperator composition matches operator algebra") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.index(3));
    auto rand_mat = [&](Eigen::Index n) {
      Matrix g(n, n);
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) g(i, j) = complex_normal(rng);
      return g;
    };
    const Matrix a = rand_mat(d), b = rand_mat(d), c = rand_mat(d), e = rand_mat(d);
    const Matrix rho = rand_mat(d);
    const auto s_ab = left_right_superop(a, b);
    const auto s_ce = left_right_superop(c, e);
    const Matrix via_super = devectorize(s_ab.matrix * (s_ce.matrix * vectorize(rho)), d);
    const Matrix direct = a * c * rho * e * b;
    REQUIRE((via_super - direct).norm() <= 1e-12 * std::max(1.0, direct.norm()));
  }
}

TEST_CASE("validate_density") {
  SECTION("accepts the maximally mixed state") {
    const DensityMatrix rho = validate_density(0.5 * Matrix::Identity(2, 2));
    CHECK_THAT(rho.matrix().trace().real(), WithinAbs(1.0, 1e-15));
  }
  SECTION("rejects a negative eigenvalue") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 1.5;
    m(1, 1) = -0.5;
    CHECK_THROWS_AS(validate_density(m), NotPositive);
  }
  SECTION("symmetrizes noise below tolerance") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 0.6;
    m(1, 1) = 0.4;
    m(0, 1) = Complex(0, 1e-12);
    m(1, 0) = Complex(0, 1e-12);  // anti-Hermitian perturbation
    const DensityMatrix rho = validate_density(m);
    CHECK((rho.matrix() - rho.matrix().adjoint()).norm() <= 1e-15);
  }
  SECTION("rejects trace drift") {
    CHECK_THROWS_AS(validate_density(0.6 * Matrix::Identity(2, 2)), NotNormalized);
  }
  SECTION("rejects a large anti-Hermitian part") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 0.5;
    m(1, 1) = 0.5;
    m(0, 1) = Complex(0.0, 0.3);
    m(1, 0) = Complex(0.0, 0.3);
    CHECK_THROWS_AS(validate_density(m), NotHermitian);
  }
}

TEST_CASE("extract_scaling_ratio recovers exact scalings") {
  Matrix pi = Matrix::Zero(2, 2);
  pi(0, 0) = 1.0 / 3.0;
  pi(1, 1) = 2.0 / 3.0;
  Matrix sm(2, 2);
  sm << 0, 0, 1, 0;
  SECTION("lowering operator against thermal weights") {
    const auto r = extract_scaling_ratio(pi, sm);
    CHECK_THAT(r.weight, WithinAbs(2.0, 1e-13));
    CHECK(r.spread <= 1e-13);
  }
  SECTION("disagreeing ratios produce a large spread") {
    Matrix sx(2, 2);
    sx << 0, 1, 1, 0;
    const auto r = extract_scaling_ratio(pi, sx);
    CHECK(r.spread > 0.1);
  }
  SECTION("zero operator is rejected") {
    CHECK_THROWS_AS(extract_scaling_ratio(pi, Matrix::Zero(2, 2)), ZeroOperator);
  }
}

TEST_CASE("trace_distance basics") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  Matrix b = Matrix::Zero(2, 2);
  b(1, 1) = 1.0;
  CHECK_THAT(trace_distance(a, a), WithinAbs(0.0, 1e-15));
  CHECK_THAT(trace_distance(a, b), WithinAbs(1.0, 1e-14));
}
