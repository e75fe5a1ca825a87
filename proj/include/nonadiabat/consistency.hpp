#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nonadiabat/core.hpp"
#include "nonadiabat/model.hpp"

// Certification of the thermodynamic-consistency assumptions: privileged jump
// representation (pi L_k pi^{-1} = w_k L_k with [H, pi] = [sum L^dag L, pi] = 0),
// local detailed balance between paired jumps, time-reversal symmetry, the
// commutation of the generator with the modular superoperator, and the
// log-intertwining identity ln(pi) L = L ln(w pi).
//
// Checks report; they never throw on a physics failure. Only malformed input
// throws, so an audit can enumerate every violation in one pass.

namespace nonadiabat {

enum class CheckStatus { Pass, Fail, Skipped };

struct PrivilegedCheck {
  bool pass = false;
  std::vector<double> weights;  // one per jump; 1.0 for vanished jumps
  double max_residual = 0.0;
  std::string detail;  // names the worst offender on failure
};

struct PairBalanceCheck {
  bool pass = false;
  double max_residual = 0.0;
  std::vector<double> residuals;  // per jump, relative
};

struct TimeReversalCheck {
  CheckStatus status = CheckStatus::Skipped;
  double max_residual = 0.0;
};

struct ModularCheck {
  bool pass = false;
  double commutator_norm = 0.0;
  double scale = 1.0;  // ||L||_F ||sigma||_F used for the pass decision
};

struct LogIdentityCheck {
  bool pass = false;
  double max_residual = 0.0;
};

struct ConsistencyTolerances {
  double privileged = 1e-8;
  double detailed_balance = 1e-8;
  double time_reversal = 1e-10;
  double modular = 1e-8;
  double log_identity = 1e-8;
  bool time_reversal_enabled = true;
};

struct ConsistencyReport {
  PrivilegedCheck privileged;
  PairBalanceCheck detailed_balance;
  TimeReversalCheck time_reversal;
  ModularCheck modular;
  LogIdentityCheck log_identity;
  // Declared entropy flows minus extracted log-weights, per jump. The two are
  // independent inputs; the report states their gap without asserting on it.
  std::vector<double> entropy_flow_vs_log_weight;

  bool all_pass() const {
    return privileged.pass && detailed_balance.pass &&
           time_reversal.status != CheckStatus::Fail && modular.pass &&
           log_identity.pass;
  }
};

/// Weight w with pi L pi^{-1} = w L, extracted as the mean entrywise ratio
/// over entries of L above a magnitude cutoff. Throws NotPrivileged when the
/// ratio spread exceeds tol.
inline double extract_rep_weights(const DensityMatrix& pi, const Matrix& l,
                                  double tol) {
  const RatioExtraction r = extract_scaling_ratio(pi.matrix(), l);
  if (!(r.spread <= tol))
    throw NotPrivileged("extract_rep_weights: ratio spread " +
                        std::to_string(r.spread) + " exceeds tolerance");
  return r.weight;
}

inline PrivilegedCheck check_privileged(const LindbladModel& m, double t,
                                        const SteadyStateInfo& ssi, double tol) {
  const EvaluatedOperators ops = evaluate_model(m, t);
  const Matrix& pi = ssi.pi.matrix();
  const Matrix pi_inv = hermitian_inverse_pd(pi);

  PrivilegedCheck out;
  out.pass = true;
  auto offend = [&](double res, const std::string& what) {
    out.max_residual = std::max(out.max_residual, res);
    if (res <= tol) return;
    out.pass = false;
    if (!out.detail.empty()) out.detail += "; ";
    out.detail += what + " " + std::to_string(res);
  };
  for (std::size_t k = 0; k < ops.jump_ops.size(); ++k) {
    const Matrix& l = ops.jump_ops[k];
    const double scale = l.norm();
    if (scale == 0.0) {
      out.weights.push_back(1.0);
      continue;
    }
    const RatioExtraction r = extract_scaling_ratio(pi, pi_inv, l);
    out.weights.push_back(r.weight);
    offend((pi * l * pi_inv - r.weight * l).norm() / scale,
           "jump '" + m.jumps[k].label + "' scaling residual");
  }

  offend(commutator(ops.hamiltonian, pi).norm(), "[H, pi] commutator norm");

  Matrix ll = Matrix::Zero(m.dim, m.dim);
  for (const Matrix& l : ops.jump_ops) ll += l.adjoint() * l;
  offend(commutator(ll, pi).norm(), "[sum L^dag L, pi] commutator norm");
  return out;
}

/// Verifies L_k = L_{pair(k)}^dag exp(entropy_flow_k / 2) for every jump.
inline PairBalanceCheck check_local_detailed_balance(const LindbladModel& m,
                                                     double t, double tol) {
  m.validate_structure();  // UnpairedJump on bad pairing
  const EvaluatedOperators ops = evaluate_model(m, t);
  PairBalanceCheck out;
  out.pass = true;
  for (std::size_t k = 0; k < ops.jump_ops.size(); ++k) {
    const Matrix& l = ops.jump_ops[k];
    const Matrix& l_rev = ops.jump_ops[static_cast<std::size_t>(m.jumps[k].pair_index)];
    const double scale =
        std::max(l.norm(), std::numeric_limits<double>::min());
    const double res =
        (l - l_rev.adjoint() * std::exp(0.5 * m.jumps[k].entropy_flow)).norm() / scale;
    out.residuals.push_back(res);
    out.max_residual = std::max(out.max_residual, res);
    if (!(res <= tol)) out.pass = false;
  }
  return out;
}

/// Time-reversal convention: conjugation in the computational basis
/// (spinless), so Theta L Theta = L reduces to L having real entries.
inline TimeReversalCheck check_time_reversal(const LindbladModel& m, double t,
                                             double tol, bool enabled = true) {
  TimeReversalCheck out;
  if (!enabled) {
    out.status = CheckStatus::Skipped;
    return out;
  }
  const EvaluatedOperators ops = evaluate_model(m, t);
  for (const Matrix& l : ops.jump_ops) {
    const double scale = std::max(l.norm(), std::numeric_limits<double>::min());
    out.max_residual = std::max(out.max_residual, l.imag().norm() / scale);
  }
  out.status = out.max_residual <= tol ? CheckStatus::Pass : CheckStatus::Fail;
  return out;
}

/// || [L, sigma_{-i}] ||_F with sigma_{-i}(rho) = pi rho pi^{-1}, both as
/// matrices on vectorized operators.
inline ModularCheck check_modular_commutation(const LindbladModel& m, double t,
                                              const SteadyStateInfo& ssi,
                                              double tol) {
  const SuperOperator liou = liouvillian_matrix(m, t);
  const Matrix& pi = ssi.pi.matrix();
  const SuperOperator modular = left_right_superop(pi, hermitian_inverse_pd(pi));
  ModularCheck out;
  out.commutator_norm = (liou.matrix * modular.matrix - modular.matrix * liou.matrix).norm();
  out.scale = liou.matrix.norm() * modular.matrix.norm();
  out.pass = out.commutator_norm <= tol * std::max(out.scale, 1e-300);
  if (out.scale == 0.0) out.pass = true;  // trivial generator
  return out;
}

/// Residual of ln(pi) L = L ln(w pi). The caller compares against its own
/// tolerance; the identity is exact for privileged jumps.
inline double verify_log_intertwining(const DensityMatrix& pi, const Matrix& l,
                                      double weight) {
  if (!(weight > 0.0))
    throw std::invalid_argument("verify_log_intertwining: weight must be positive");
  const Matrix log_pi = matrix_log_pd(pi.matrix());
  const Matrix shifted =
      log_pi + std::log(weight) * Matrix::Identity(pi.dim(), pi.dim());
  return (log_pi * l - l * shifted).norm();
}

/// Runs every check at (m, t) against the supplied steady-state info.
inline ConsistencyReport run_consistency_checks(
    const LindbladModel& m, double t, const SteadyStateInfo& ssi,
    const ConsistencyTolerances& tol = {}) {
  ConsistencyReport rep;
  rep.privileged = check_privileged(m, t, ssi, tol.privileged);
  rep.detailed_balance = check_local_detailed_balance(m, t, tol.detailed_balance);
  rep.time_reversal =
      check_time_reversal(m, t, tol.time_reversal, tol.time_reversal_enabled);
  rep.modular = check_modular_commutation(m, t, ssi, tol.modular);

  const EvaluatedOperators ops = evaluate_model(m, t);
  const Matrix log_pi = matrix_log_pd(ssi.pi.matrix());
  rep.log_identity.pass = true;
  for (std::size_t k = 0; k < ops.jump_ops.size(); ++k) {
    const Matrix& l = ops.jump_ops[k];
    const double w = rep.privileged.weights[k];
    rep.entropy_flow_vs_log_weight.push_back(m.jumps[k].entropy_flow - std::log(w));
    if (l.norm() == 0.0 || !(w > 0.0)) continue;
    const double res = verify_log_intertwining(ssi.pi, l, w);
    const double scale = l.norm() * std::max(1.0, log_pi.norm());
    rep.log_identity.max_residual =
        std::max(rep.log_identity.max_residual, res / scale);
  }
  rep.log_identity.pass = rep.log_identity.max_residual <= tol.log_identity;
  return rep;
}

}  // namespace nonadiabat
