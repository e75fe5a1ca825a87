#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <utility>

#include "nonadiabat/errors.hpp"

// Dense complex-matrix foundation: Hermitian eigendecomposition, principal
// logarithm of positive matrices, column-stacking vectorization and
// superoperators, and density-matrix validation. Everything is a value type;
// all functions are pure and safe to call concurrently.

namespace nonadiabat {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;

inline constexpr double kHermTol = 1e-10;
inline constexpr double kTraceTol = 1e-10;
inline constexpr double kEigFloor = 1e-13;

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Tr[a b] without forming the product.
inline Complex trace_prod(const Matrix& a, const Matrix& b) {
  return a.cwiseProduct(b.transpose()).sum();
}

inline Matrix commutator(const Matrix& a, const Matrix& b) {
  return a * b - b * a;
}

inline bool is_hermitian(const Matrix& m, double tol = kHermTol) {
  return (m - m.adjoint()).norm() <= tol * std::max(1.0, m.norm());
}

struct HermitianEigenSystem {
  RealVector eigenvalues;  // ascending
  Matrix eigenvectors;     // orthonormal columns, same order
};

/// Eigendecomposition of a Hermitian matrix. Rejects inputs whose
/// anti-Hermitian part exceeds tol relative to the matrix norm.
inline HermitianEigenSystem hermitian_eig(const Matrix& m, double tol = kHermTol) {
  if (m.rows() != m.cols())
    throw DimensionMismatch("hermitian_eig: matrix is not square");
  const double scale = m.norm();
  if ((m - m.adjoint()).norm() > tol * std::max(1.0, scale))
    throw NotHermitian("hermitian_eig: anti-Hermitian part exceeds tolerance");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success)
    throw Error("EigenSolverFailure", "hermitian_eig: solver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Principal logarithm of a positive-definite Hermitian matrix,
/// V diag(ln w) V^dag. Eigenvalues at or below `floor` are rejected.
inline Matrix matrix_log_pd(const Matrix& m, double floor = kEigFloor) {
  HermitianEigenSystem es = hermitian_eig(m);
  if (es.eigenvalues.minCoeff() <= floor)
    throw SingularOperand("matrix_log_pd: eigenvalue at or below floor");
  RealVector logs = es.eigenvalues.array().log();
  Matrix result = es.eigenvectors * logs.asDiagonal() * es.eigenvectors.adjoint();
  return 0.5 * (result + result.adjoint().eval());
}

// ---------------------------------------------------------------------------
// Vectorization. Convention, fixed project-wide: vec() stacks COLUMNS left to
// right (Eigen's native storage order), so that vec(A X B) = (B^T kron A) vec(X).
// ---------------------------------------------------------------------------

inline Vector vectorize(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

inline Matrix devectorize(const Vector& v, Eigen::Index dim) {
  if (v.size() != dim * dim)
    throw DimensionMismatch("devectorize: length is not dim^2");
  return Eigen::Map<const Matrix>(v.data(), dim, dim);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Linear map on vectorized operators. `matrix` is (dim^2) x (dim^2).
struct SuperOperator {
  Eigen::Index dim{0};
  Matrix matrix;

  Matrix apply(const Matrix& rho) const {
    if (rho.rows() != dim || rho.cols() != dim)
      throw DimensionMismatch("SuperOperator::apply: operand has wrong dimension");
    return devectorize(matrix * vectorize(rho), dim);
  }
};

/// Superoperator of rho -> A rho B.
inline SuperOperator left_right_superop(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw DimensionMismatch("left_right_superop: operands must be square and equal-sized");
  return {a.rows(), kron(b.transpose(), a)};
}

inline SuperOperator identity_superop(Eigen::Index dim) {
  return {dim, Matrix::Identity(dim * dim, dim * dim)};
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

class DensityMatrix;
inline DensityMatrix validate_density(const Matrix& rho, double tol = kTraceTol);

/// Hermitian, unit-trace, positive-semidefinite (within validation tolerance).
/// Construct through validate_density.
class DensityMatrix {
 public:
  DensityMatrix() = default;

  const Matrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }
  operator const Matrix&() const { return m_; }

 private:
  friend DensityMatrix validate_density(const Matrix&, double);
  explicit DensityMatrix(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

/// Certifies rho as a density matrix: symmetrizes (rho + rho^dag)/2, then
/// checks unit trace and positivity within tol. The stored matrix has its
/// trace renormalized to exactly 1.
inline DensityMatrix validate_density(const Matrix& rho, double tol) {
  if (rho.rows() != rho.cols())
    throw DimensionMismatch("validate_density: matrix is not square");
  if (!rho.allFinite())
    throw Error("NonFinite", "validate_density: matrix has non-finite entries");
  if ((rho - rho.adjoint()).norm() > tol * std::max(1.0, rho.norm()))
    throw NotHermitian("validate_density: anti-Hermitian part exceeds tolerance");
  Matrix sym = 0.5 * (rho + rho.adjoint().eval());
  const double tr = sym.trace().real();
  if (std::abs(tr - 1.0) > tol)
    throw NotNormalized("validate_density: trace deviates from 1 beyond tolerance");
  sym /= tr;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.eigenvalues().minCoeff() < -tol)
    throw NotPositive("validate_density: negative eigenvalue beyond tolerance");
  return DensityMatrix(std::move(sym));
}

/// Trace distance (1/2)||a - b||_1 between Hermitian operators.
inline double trace_distance(const Matrix& a, const Matrix& b) {
  Matrix diff = a - b;
  diff = 0.5 * (diff + diff.adjoint().eval());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(diff);
  return 0.5 * solver.eigenvalues().cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// Entrywise-ratio scaling extraction. Shared by the jump-weight and
// Kraus-factor extractors: given positive-definite pi and operator L, tests
// whether pi L pi^{-1} = c L and recovers c. The ratio spread over the
// significant entries of L is the violation diagnostic.
// ---------------------------------------------------------------------------

struct RatioExtraction {
  double weight = 0.0;  // Re of the mean entry ratio
  double spread = 0.0;  // max relative deviation of ratios from their mean
  int entries = 0;      // number of entries above the magnitude cutoff
};

inline RatioExtraction extract_scaling_ratio(const Matrix& pi, const Matrix& pi_inv,
                                             const Matrix& op,
                                             double entry_cut_rel = 1e-10) {
  const double mx = max_abs(op);
  if (mx == 0.0) throw ZeroOperator("extract_scaling_ratio: zero operator");
  const Matrix scaled = pi * op * pi_inv;
  const double cut = entry_cut_rel * mx;
  Complex sum = 0.0;
  int count = 0;
  for (Eigen::Index j = 0; j < op.cols(); ++j)
    for (Eigen::Index i = 0; i < op.rows(); ++i)
      if (std::abs(op(i, j)) > cut) {
        sum += scaled(i, j) / op(i, j);
        ++count;
      }
  const Complex mean = sum / static_cast<double>(count);
  RatioExtraction out;
  out.entries = count;
  out.weight = mean.real();
  if (std::abs(mean) < 1e-300 || mean.real() <= 0.0) {
    out.spread = std::numeric_limits<double>::infinity();
    return out;
  }
  double spread = 0.0;
  for (Eigen::Index j = 0; j < op.cols(); ++j)
    for (Eigen::Index i = 0; i < op.rows(); ++i)
      if (std::abs(op(i, j)) > cut)
        spread = std::max(spread, std::abs(scaled(i, j) / op(i, j) - mean));
  out.spread = spread / std::abs(mean);
  return out;
}

inline Matrix hermitian_inverse_pd(const Matrix& m, double floor = kEigFloor) {
  HermitianEigenSystem es = hermitian_eig(m);
  if (es.eigenvalues.minCoeff() <= floor)
    throw SingularOperand("hermitian_inverse_pd: eigenvalue at or below floor");
  RealVector inv = es.eigenvalues.array().inverse();
  return es.eigenvectors * inv.asDiagonal() * es.eigenvectors.adjoint();
}

inline RatioExtraction extract_scaling_ratio(const Matrix& pi, const Matrix& op,
                                             double entry_cut_rel = 1e-10) {
  return extract_scaling_ratio(pi, hermitian_inverse_pd(pi), op, entry_cut_rel);
}

}  // namespace nonadiabat
