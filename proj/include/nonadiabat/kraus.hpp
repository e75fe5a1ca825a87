#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "nonadiabat/core.hpp"
#include "nonadiabat/entropy.hpp"
#include "nonadiabat/rng.hpp"

// CPTP maps in Kraus form and the classical decomposition of the relative
// entropy drop Delta D = D(E(rho)||pi) - D(rho||pi) for maps with a privileged
// representation pi M_k pi^{-1} = mu_k M_k: diagonalize rho and E(rho), form
// the transition weights w^k(a, m) = |<e_a| M_k |p_m>|^2 (a stochastic matrix
// after summing k), and evaluate Delta D entirely in terms of real numbers.

namespace nonadiabat {

struct KrausMap {
  Eigen::Index dim = 0;
  std::vector<Matrix> kraus;

  /// || sum M^dag M - I ||_F, the trace-preservation residual.
  double tp_residual() const {
    Matrix acc = Matrix::Zero(dim, dim);
    for (const Matrix& mk : kraus) acc += mk.adjoint() * mk;
    return (acc - Matrix::Identity(dim, dim)).norm();
  }
};

inline KrausMap make_kraus_map(Eigen::Index dim, std::vector<Matrix> kraus,
                               double tp_tol = 1e-10) {
  KrausMap map{dim, std::move(kraus)};
  if (map.kraus.empty())
    throw std::invalid_argument("make_kraus_map: need at least one Kraus operator");
  for (const Matrix& mk : map.kraus)
    if (mk.rows() != dim || mk.cols() != dim)
      throw DimensionMismatch("make_kraus_map: Kraus operator has wrong dimension");
  if (map.tp_residual() > tp_tol)
    throw NotNormalized("make_kraus_map: trace-preservation residual " +
                        std::to_string(map.tp_residual()) + " exceeds tolerance");
  return map;
}

inline Matrix apply_map_raw(const KrausMap& e, const Matrix& rho) {
  if (rho.rows() != e.dim || rho.cols() != e.dim)
    throw DimensionMismatch("apply_map: state has wrong dimension");
  Matrix out = Matrix::Zero(e.dim, e.dim);
  for (const Matrix& mk : e.kraus) out += mk * rho * mk.adjoint();
  return out;
}

inline DensityMatrix apply_map(const KrausMap& e, const DensityMatrix& rho) {
  return validate_density(apply_map_raw(e, rho.matrix()), 1e-11);
}

inline SuperOperator map_superoperator(const KrausMap& e) {
  Matrix s = Matrix::Zero(e.dim * e.dim, e.dim * e.dim);
  for (const Matrix& mk : e.kraus) s += kron(mk.conjugate(), mk);
  return {e.dim, std::move(s)};
}

/// Fixed point pi = E(pi), required unique and positive-definite. The
/// uniqueness gap (second-smallest singular value of S - I) is written to
/// gap_out when provided.
inline DensityMatrix invariant_state(const KrausMap& e, double* gap_out = nullptr) {
  const SuperOperator s = map_superoperator(e);
  const Eigen::Index n = s.matrix.rows();
  Eigen::BDCSVD<Matrix> svd(s.matrix - Matrix::Identity(n, n), Eigen::ComputeFullV);
  const double gap = n >= 2 ? svd.singularValues()(n - 2) : 0.0;
  if (gap_out) *gap_out = gap;
  if (gap < 1e-9)
    throw DegenerateFixedPoint("invariant_state: fixed point not unique (gap " +
                               std::to_string(gap) + ")");
  Matrix x = devectorize(svd.matrixV().col(n - 1), e.dim);
  const Complex tr = x.trace();
  if (std::abs(tr) < 1e-12)
    throw DegenerateFixedPoint("invariant_state: fixed-point vector is traceless");
  x /= tr;
  x = 0.5 * (x + x.adjoint().eval());
  x /= x.trace().real();
  Eigen::SelfAdjointEigenSolver<Matrix> es(x);
  if (es.eigenvalues().minCoeff() <= 1e-10)
    throw NotPositiveDefinite("invariant_state: fixed point not positive-definite");
  return validate_density(x);
}

/// Checks whether the state-side dual of E with respect to pi is CPTP. The
/// dual conjugates the trace adjoint by pi, rho -> pi E^dag(pi^{-1} rho); on a
/// map with a privileged representation it reduces to sum_k mu_k^{-1}
/// M_k^dag rho M_k, the reversed process. Builds the dual's Choi matrix from
/// the matrix units and returns (verdict, smallest Choi eigenvalue). The
/// verdict also requires the Choi matrix to be Hermitian and the dual to
/// preserve the trace, both within 1e-9.
inline std::pair<bool, double> dual_cptp_check(const KrausMap& e,
                                               const DensityMatrix& pi) {
  const Matrix& p = pi.matrix();
  Matrix p_inv;
  try {
    p_inv = hermitian_inverse_pd(p);
  } catch (const SingularOperand&) {
    throw SingularState("dual_cptp_check: pi is not positive-definite");
  }
  const Eigen::Index d = e.dim;
  auto dual = [&](const Matrix& x) {
    Matrix acc = Matrix::Zero(d, d);
    const Matrix px = p_inv * x;
    for (const Matrix& mk : e.kraus) acc += mk.adjoint() * px * mk;
    return (p * acc).eval();
  };

  Matrix choi = Matrix::Zero(d * d, d * d);
  double tp_residual = 0.0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      Matrix unit = Matrix::Zero(d, d);
      unit(i, j) = 1.0;
      const Matrix image = dual(unit);
      choi.block(i * d, j * d, d, d) = image;
      const double want = i == j ? 1.0 : 0.0;
      tp_residual = std::max(tp_residual, std::abs(image.trace() - Complex(want)));
    }
  const double non_herm = (choi - choi.adjoint()).norm();
  const Matrix herm_part = 0.5 * (choi + choi.adjoint().eval());
  Eigen::SelfAdjointEigenSolver<Matrix> es(herm_part);
  const double min_eig = es.eigenvalues().minCoeff();
  const bool ok = min_eig >= -1e-9 && tp_residual <= 1e-9 &&
                  non_herm <= 1e-9 * std::max(1.0, choi.norm());
  return {ok, min_eig};
}

/// Per-Kraus scaling factors mu_k with pi M_k pi^{-1} = mu_k M_k, extracted
/// entrywise exactly like the jump weights.
inline std::vector<double> extract_scaling_factors(const KrausMap& e,
                                                   const DensityMatrix& pi,
                                                   double tol) {
  const Matrix p_inv = hermitian_inverse_pd(pi.matrix());
  std::vector<double> mu;
  mu.reserve(e.kraus.size());
  for (std::size_t k = 0; k < e.kraus.size(); ++k) {
    const RatioExtraction r = extract_scaling_ratio(pi.matrix(), p_inv, e.kraus[k]);
    if (!(r.spread <= tol))
      throw NotPrivileged("extract_scaling_factors: Kraus operator " +
                          std::to_string(k) + " ratio spread " +
                          std::to_string(r.spread) + " exceeds tolerance");
    mu.push_back(r.weight);
  }
  return mu;
}

struct PrivilegedKrausInfo {
  DensityMatrix pi;
  std::vector<double> mu;
};

inline PrivilegedKrausInfo privileged_kraus_info(const KrausMap& e, double tol = 1e-8) {
  PrivilegedKrausInfo info;
  info.pi = invariant_state(e);
  info.mu = extract_scaling_factors(e, info.pi, tol);
  return info;
}

// ---------------------------------------------------------------------------
// Classical decomposition
// ---------------------------------------------------------------------------

struct ClassicalDecomposition {
  RealVector P;        // eigenvalues of rho, descending
  RealVector P_prime;  // eigenvalues of E(rho), descending
  std::vector<RealMatrix> w;  // w[k](a, m) = |<e_a| M_k |p_m>|^2
  RealMatrix W;               // sum_k w[k]; column-stochastic
  double d_S = 0.0;           // sum P' ln P' - sum P ln P
  double d_ex = 0.0;          // -sum_k Tr[M_k rho M_k^dag] ln mu_k
  double delta_D = 0.0;       // sum w P_m ln(P'_a / (mu_k P_m))
  bool support_anomaly = false;  // weight flowing into a null eigenvalue of E(rho)
};

namespace detail {

struct DiagonalBasis {
  RealVector values;  // descending
  Matrix vectors;     // columns matching `values`
};

inline DiagonalBasis descending_eig(const Matrix& m) {
  const HermitianEigenSystem es = hermitian_eig(m);
  DiagonalBasis out;
  out.values = es.eigenvalues.reverse();
  out.vectors = es.eigenvectors.rowwise().reverse();
  return out;
}

/// Decomposition against explicitly supplied diagonal bases; the public entry
/// point diagonalizes first. Kept separate so basis-degeneracy tests can remix
/// eigenvectors inside degenerate subspaces.
inline ClassicalDecomposition classical_decomposition_with_bases(
    const KrausMap& e, const std::vector<double>& mu, const DiagonalBasis& in,
    const DiagonalBasis& out) {
  ClassicalDecomposition dec;
  dec.P = in.values;
  dec.P_prime = out.values;
  const Eigen::Index d = e.dim;
  dec.W = RealMatrix::Zero(d, d);
  dec.w.reserve(e.kraus.size());
  for (const Matrix& mk : e.kraus) {
    const Matrix amp = out.vectors.adjoint() * mk * in.vectors;
    RealMatrix wk = amp.cwiseAbs2();
    dec.W += wk;
    dec.w.push_back(std::move(wk));
  }

  for (Eigen::Index m = 0; m < d; ++m) {
    const double pm = dec.P(m);
    if (pm > kEigFloor) dec.d_S -= pm * std::log(pm);
  }
  for (Eigen::Index a = 0; a < d; ++a) {
    const double pa = dec.P_prime(a);
    if (pa > kEigFloor) {
      dec.d_S += pa * std::log(pa);
    } else {
      double incoming = 0.0;
      for (Eigen::Index m = 0; m < d; ++m) incoming += dec.W(a, m) * std::max(dec.P(m), 0.0);
      if (incoming > 1e-10) dec.support_anomaly = true;
    }
  }

  const Matrix rho =
      in.vectors * in.values.cast<Complex>().asDiagonal() * in.vectors.adjoint();
  for (std::size_t k = 0; k < e.kraus.size(); ++k) {
    const double rate = trace_prod((e.kraus[k] * rho).eval(), e.kraus[k].adjoint()).real();
    dec.d_ex -= rate * std::log(mu[k]);
  }

  for (std::size_t k = 0; k < e.kraus.size(); ++k)
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index m = 0; m < d; ++m) {
        const double pm = dec.P(m);
        const double pa = dec.P_prime(a);
        if (pm <= kEigFloor || pa <= kEigFloor) continue;
        dec.delta_D += dec.w[k](a, m) * pm * std::log(pa / (mu[k] * pm));
      }
  return dec;
}

}  // namespace detail

inline ClassicalDecomposition classical_decomposition(const KrausMap& e,
                                                      const PrivilegedKrausInfo& info,
                                                      const DensityMatrix& rho) {
  if (rho.dim() != e.dim)
    throw DimensionMismatch("classical_decomposition: state has wrong dimension");
  const detail::DiagonalBasis in = detail::descending_eig(rho.matrix());
  const detail::DiagonalBasis out = detail::descending_eig(apply_map_raw(e, rho.matrix()));
  return detail::classical_decomposition_with_bases(e, info.mu, in, out);
}

/// Delta D computed along both routes: the operator route through the quantum
/// relative entropy, and the classical route through the decomposition.
inline std::pair<double, double> delta_D_pair(const KrausMap& e,
                                              const PrivilegedKrausInfo& info,
                                              const DensityMatrix& rho) {
  const DensityMatrix mapped = apply_map(e, rho);
  const double op_value =
      relative_entropy(mapped, info.pi) - relative_entropy(rho, info.pi);
  const double classical = classical_decomposition(e, info, rho).delta_D;
  return {op_value, classical};
}

/// Residual of sum_k mu_k^{-1} <a| M_k M_k^dag |a> = 1, evaluated across the
/// eigenbasis of pi; returns the largest deviation from 1.
inline double mu_normalization_check(const KrausMap& e,
                                     const PrivilegedKrausInfo& info) {
  Matrix acc = Matrix::Zero(e.dim, e.dim);
  for (std::size_t k = 0; k < e.kraus.size(); ++k)
    acc += (1.0 / info.mu[k]) * (e.kraus[k] * e.kraus[k].adjoint());
  const HermitianEigenSystem es = hermitian_eig(info.pi.matrix());
  double worst = 0.0;
  for (Eigen::Index a = 0; a < e.dim; ++a) {
    const Complex val = (es.eigenvectors.col(a).adjoint() * acc * es.eigenvectors.col(a))(0);
    worst = std::max(worst, std::abs(val - Complex(1.0)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Detailed-balance fixture generator
// ---------------------------------------------------------------------------

/// Random d-dimensional CPTP map with a privileged representation by
/// construction: transition operators M_{i<-j} = sqrt(T_ij) |pi_i><pi_j| with
/// T_ij pi_j = T_ji pi_i, plus the diagonal remainder
/// M_0 = sum_j sqrt(1 - c_j) |pi_j><pi_j| (c_j the column sums). The scaling
/// factors are mu_{i<-j} = pi_i / pi_j and mu_0 = 1.
inline std::pair<KrausMap, PrivilegedKrausInfo> generate_detailed_balance_map(
    int d, std::uint64_t seed) {
  if (d < 2 || d > 8)
    throw std::invalid_argument("generate_detailed_balance_map: need 2 <= d <= 8");
  Rng rng(seed);

  RealVector p(d);
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    acc += 1.0 + 0.5 * rng.uniform();
    p(i) = acc;
  }
  p /= p.sum();
  const Matrix basis = random_unitary(d, rng);

  RealMatrix rates = RealMatrix::Zero(d, d);  // rates(i, j): j -> i
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double t_ij = rng.uniform(0.1, 0.5);
      rates(i, j) = t_ij;                  // j -> i
      rates(j, i) = t_ij * p(j) / p(i);    // detailed balance T_ji pi_i = T_ij pi_j
    }
  RealVector col_sums = rates.colwise().sum();
  const double worst = col_sums.maxCoeff();
  if (worst > 0.9) {
    rates *= 0.85 / worst;
    col_sums = rates.colwise().sum();
  }

  std::vector<Matrix> kraus;
  std::vector<double> mu;
  Matrix residual = Matrix::Zero(d, d);
  for (int j = 0; j < d; ++j)
    residual += std::sqrt(1.0 - col_sums(j)) * (basis.col(j) * basis.col(j).adjoint());
  kraus.push_back(residual);
  mu.push_back(1.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      if (i == j || rates(i, j) == 0.0) continue;
      kraus.push_back(std::sqrt(rates(i, j)) * (basis.col(i) * basis.col(j).adjoint()));
      mu.push_back(p(i) / p(j));
    }

  KrausMap map = make_kraus_map(d, std::move(kraus));
  PrivilegedKrausInfo info;
  Matrix pi = basis * p.cast<Complex>().asDiagonal() * basis.adjoint();
  info.pi = validate_density(pi);
  info.mu = std::move(mu);
  return {std::move(map), std::move(info)};
}

}  // namespace nonadiabat
