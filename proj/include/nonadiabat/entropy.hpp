#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include "nonadiabat/consistency.hpp"
#include "nonadiabat/core.hpp"
#include "nonadiabat/model.hpp"

// Deterministic entropy functionals and rates. Two independent routes to the
// excess entropy production rate are kept side by side:
//   relative-entropy form   Tr[ rho_dot ln pi ]
//   jump-weight form        sum_k Tr[ L_k^dag L_k rho ] ln w_k
// Their gap is always computed and reported, never asserted here; equality is
// a property of consistent models and lives in the test suite.

namespace nonadiabat {

/// -sum w ln w over the spectrum, with the 0 ln 0 = 0 convention below the
/// eigenvalue floor.
inline double von_neumann_entropy(const DensityMatrix& rho) {
  const HermitianEigenSystem es = hermitian_eig(rho.matrix());
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues.size(); ++i) {
    const double w = es.eigenvalues(i);
    if (w > kEigFloor) s -= w * std::log(w);
  }
  return s;
}

/// Quantum relative entropy Tr[chi ln chi] - Tr[chi ln phi]. Returns +infinity
/// when chi has weight above 1e-10 outside the support of phi.
inline double relative_entropy(const DensityMatrix& chi, const DensityMatrix& phi) {
  if (chi.dim() != phi.dim())
    throw DimensionMismatch("relative_entropy: dimension mismatch");
  const HermitianEigenSystem ec = hermitian_eig(chi.matrix());
  const HermitianEigenSystem ep = hermitian_eig(phi.matrix());

  double chi_term = 0.0;
  for (Eigen::Index i = 0; i < ec.eigenvalues.size(); ++i) {
    const double w = ec.eigenvalues(i);
    if (w > kEigFloor) chi_term += w * std::log(w);
  }

  double cross_term = 0.0;
  double leak = 0.0;
  for (Eigen::Index i = 0; i < ep.eigenvalues.size(); ++i) {
    const double w = ep.eigenvalues(i);
    const double overlap =
        (ep.eigenvectors.col(i).adjoint() * chi.matrix() * ep.eigenvectors.col(i))(0)
            .real();
    if (w > kEigFloor)
      cross_term += overlap * std::log(w);
    else
      leak += overlap;
  }
  if (leak > 1e-10) return std::numeric_limits<double>::infinity();
  return chi_term - cross_term;
}

/// Rate of change of the von Neumann entropy, -Tr[rho_dot ln rho]. Requires a
/// full-rank state.
inline double system_entropy_rate(const LindbladModel& m, double t,
                                  const DensityMatrix& rho) {
  const HermitianEigenSystem es = hermitian_eig(rho.matrix());
  if (es.eigenvalues.minCoeff() <= kEigFloor)
    throw SingularState("system_entropy_rate: state not full-rank");
  RealVector logs = es.eigenvalues.array().log();
  const Matrix log_rho = es.eigenvectors * logs.asDiagonal() * es.eigenvectors.adjoint();
  const Matrix rho_dot = liouvillian_apply(m, t, rho.matrix());
  return -trace_prod(rho_dot, log_rho).real();
}

/// Excess rate, relative-entropy form: Tr[rho_dot ln pi].
inline double excess_rate_relative_entropy(const LindbladModel& m, double t,
                                           const DensityMatrix& rho,
                                           const SteadyStateInfo& ssi) {
  const Matrix rho_dot = liouvillian_apply(m, t, rho.matrix());
  return trace_prod(rho_dot, matrix_log_pd(ssi.pi.matrix())).real();
}

/// Excess rate, jump-weight form: sum_k Tr[L_k^dag L_k rho] ln w_k.
inline double excess_rate_weights(const LindbladModel& m, double t,
                                  const DensityMatrix& rho,
                                  const SteadyStateInfo& ssi) {
  const std::vector<double>& w = ssi.require_weights("excess_rate_weights");
  const EvaluatedOperators ops = evaluate_model(m, t);
  double rate = 0.0;
  for (std::size_t k = 0; k < ops.jump_ops.size(); ++k) {
    const Matrix& l = ops.jump_ops[k];
    rate += trace_prod((l.adjoint() * l).eval(), rho.matrix()).real() * std::log(w[k]);
  }
  return rate;
}

struct EntropyRates {
  double t = 0.0;
  double S = 0.0;              // von Neumann entropy
  double S_dot = 0.0;          // entropy rate
  double S_ex_relent = 0.0;    // excess rate, relative-entropy form
  double S_ex_weights = 0.0;   // excess rate, jump-weight form (NaN if unavailable)
  double S_na = 0.0;           // nonadiabatic rate = S_dot + S_ex_relent

  double equivalence_residual() const {
    return std::abs(S_ex_relent - S_ex_weights);
  }
};

/// Full per-time entropy accounting. S_na is assembled from the
/// relative-entropy route; the weight route is carried alongside for the
/// equivalence report (NaN when the model has no consistent weights).
inline EntropyRates nonadiabatic_rate(const LindbladModel& m, double t,
                                      const DensityMatrix& rho,
                                      const SteadyStateInfo& ssi) {
  EntropyRates out;
  out.t = t;
  out.S = von_neumann_entropy(rho);
  out.S_dot = system_entropy_rate(m, t, rho);
  out.S_ex_relent = excess_rate_relative_entropy(m, t, rho, ssi);
  out.S_ex_weights = ssi.weights ? excess_rate_weights(m, t, rho, ssi)
                                 : std::numeric_limits<double>::quiet_NaN();
  out.S_na = out.S_dot + out.S_ex_relent;
  return out;
}

/// Difference quotient (D(rho_t||pi_t) - D(rho_{t+h}||pi_t)) / h with one
/// integrator step taken at the frozen protocol value. Converges to S_na at
/// rate O(h).
inline double fd_relative_entropy_rate(const LindbladModel& m, double t,
                                       const DensityMatrix& rho,
                                       const SteadyStateInfo& ssi, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_relative_entropy_rate: h must be > 0");
  const EvaluatedOperators ops = evaluate_model(m, t);
  Matrix stepped = detail::rk4_step(
      [&ops](double, const Matrix& y) { return liouvillian_apply(ops, y); }, t, h,
      rho.matrix());
  const DensityMatrix rho_h = detail::certify_integrator_state(stepped, t + h);
  return (relative_entropy(rho, ssi.pi) - relative_entropy(rho_h, ssi.pi)) / h;
}

/// Default step: 1e-4 of the generator's characteristic time 1/||L||_F.
inline double fd_relative_entropy_rate(const LindbladModel& m, double t,
                                       const DensityMatrix& rho,
                                       const SteadyStateInfo& ssi) {
  const double scale = liouvillian_matrix(m, t).matrix.norm();
  return fd_relative_entropy_rate(m, t, rho, ssi, 1e-4 / std::max(scale, 1e-12));
}

/// Central-difference residual of Tr[rho_t d/dt ln rho_t], which vanishes for
/// exact evolutions; O(h^2) for smooth state families.
inline double vn_derivative_residual(
    const std::function<DensityMatrix(double)>& rho_fn, double t, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("vn_derivative_residual: h must be > 0");
  const DensityMatrix mid = rho_fn(t);
  Matrix log_plus, log_minus;
  try {
    log_plus = matrix_log_pd(rho_fn(t + h).matrix());
    log_minus = matrix_log_pd(rho_fn(t - h).matrix());
  } catch (const SingularOperand&) {
    throw SingularState("vn_derivative_residual: state not full-rank on [t-h, t+h]");
  }
  const Matrix diff = (log_plus - log_minus) / (2.0 * h);
  return std::abs(trace_prod(mid.matrix(), diff).real());
}

}  // namespace nonadiabat
