#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nonadiabat/core.hpp"
#include "nonadiabat/rng.hpp"

// Driven Lindblad models: protocol evaluation, Liouvillian construction,
// steady-state solving, and fixed-step integration of the master equation
//   drho/dt = -i[H(t), rho] + sum_k ( L_k rho L_k^dag - {L_k^dag L_k, rho}/2 ).

namespace nonadiabat {

// ---------------------------------------------------------------------------
// Protocols: named piecewise-linear control channels over a time horizon.
// The interpolant is held constant before the first and after the last
// breakpoint; evaluation outside the horizon is an error.
// ---------------------------------------------------------------------------

struct Protocol {
  using Breakpoints = std::vector<std::pair<double, double>>;

  double t_start = 0.0;
  double t_end = 0.0;
  std::map<std::string, Breakpoints> channels;

  double horizon_fuzz() const {
    return 1e-9 * std::max({1.0, std::abs(t_start), std::abs(t_end)});
  }

  bool in_horizon(double t) const {
    const double fuzz = horizon_fuzz();
    return t >= t_start - fuzz && t <= t_end + fuzz;
  }

  void require_in_horizon(double t, const char* where) const {
    if (!in_horizon(t))
      throw OutOfHorizon(std::string(where) + ": t=" + std::to_string(t) +
                         " outside [" + std::to_string(t_start) + ", " +
                         std::to_string(t_end) + "]");
  }

  double value(const std::string& name, double t) const {
    require_in_horizon(t, "Protocol::value");
    auto it = channels.find(name);
    if (it == channels.end())
      throw UnresolvedReference("Protocol::value: unknown channel '" + name + "'");
    const Breakpoints& pts = it->second;
    if (pts.empty())
      throw UnresolvedReference("Protocol::value: channel '" + name + "' has no breakpoints");
    if (t <= pts.front().first) return pts.front().second;
    if (t >= pts.back().first) return pts.back().second;
    auto hi = std::upper_bound(pts.begin(), pts.end(), t,
                               [](double x, const auto& p) { return x < p.first; });
    auto lo = hi - 1;
    const double w = (t - lo->first) / (hi->first - lo->first);
    return lo->second + w * (hi->second - lo->second);
  }

  /// Breakpoint times of all channels inside [a, b], sorted, deduplicated.
  std::vector<double> breakpoint_times(double a, double b) const {
    std::vector<double> ts;
    for (const auto& [name, pts] : channels)
      for (const auto& [t, v] : pts)
        if (t > a && t < b) ts.push_back(t);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end(),
                         [](double x, double y) { return std::abs(x - y) < 1e-12; }),
             ts.end());
    return ts;
  }
};

// ---------------------------------------------------------------------------
// Model definition
// ---------------------------------------------------------------------------

/// One jump operator L_k(t) = c_k(t) * base, where c_k is either a constant
/// or a protocol channel. Jumps come in reversed pairs (pair_index) related by
/// local detailed balance with entropy flow entropy_flow per jump.
struct JumpSpec {
  std::string label;
  Matrix base;
  double amplitude = 1.0;              // used when amplitude_channel is empty
  std::string amplitude_channel;       // empty -> constant amplitude
  int pair_index = -1;                 // index of the reversed jump; may be self
  double entropy_flow = 0.0;
};

struct LindbladModel {
  Eigen::Index dim = 0;
  Matrix h_base;                                      // H_0
  std::vector<std::pair<std::string, Matrix>> h_terms;  // channel-bound terms
  std::vector<JumpSpec> jumps;
  Protocol protocol;

  bool is_time_independent() const {
    if (!h_terms.empty()) return false;
    for (const auto& j : jumps)
      if (!j.amplitude_channel.empty()) return false;
    return true;
  }

  /// Structural checks: square dim-consistent matrices, pairing involution.
  void validate_structure() const {
    auto check_dim = [&](const Matrix& m, const char* what) {
      if (m.rows() != dim || m.cols() != dim)
        throw DimensionMismatch(std::string("LindbladModel: ") + what +
                                " is not dim x dim");
    };
    check_dim(h_base, "h_base");
    for (const auto& [name, h] : h_terms) check_dim(h, "hamiltonian term");
    const int n = static_cast<int>(jumps.size());
    for (int k = 0; k < n; ++k) {
      check_dim(jumps[k].base, "jump base");
      const int p = jumps[k].pair_index;
      if (p < 0 || p >= n)
        throw UnpairedJump("LindbladModel: jump " + std::to_string(k) +
                           " has no valid pair");
      if (jumps[p].pair_index != k)
        throw UnpairedJump("LindbladModel: pairing is not an involution at jump " +
                           std::to_string(k));
    }
  }
};

struct EvaluatedOperators {
  Matrix hamiltonian;
  std::vector<Matrix> jump_ops;
};

inline double jump_amplitude(const LindbladModel& m, const JumpSpec& j, double t) {
  const double c = j.amplitude_channel.empty()
                       ? j.amplitude
                       : m.protocol.value(j.amplitude_channel, t);
  if (c < 0.0)
    throw NegativeAmplitude("evaluate_model: jump '" + j.label +
                            "' has negative amplitude at t=" + std::to_string(t));
  return c;
}

/// H(t) = H_0 + sum_j lambda_j(t) H_j and L_k(t) = c_k(t) base_k.
inline EvaluatedOperators evaluate_model(const LindbladModel& m, double t) {
  m.protocol.require_in_horizon(t, "evaluate_model");
  EvaluatedOperators out;
  out.hamiltonian = m.h_base;
  for (const auto& [name, h] : m.h_terms)
    out.hamiltonian += m.protocol.value(name, t) * h;
  if (!is_hermitian(out.hamiltonian))
    throw NotHermitian("evaluate_model: H(t) not Hermitian at t=" + std::to_string(t));
  out.jump_ops.reserve(m.jumps.size());
  for (const auto& j : m.jumps) out.jump_ops.push_back(jump_amplitude(m, j, t) * j.base);
  return out;
}

inline Matrix liouvillian_apply(const EvaluatedOperators& ops, const Matrix& rho) {
  Matrix out = Complex(0, -1) * commutator(ops.hamiltonian, rho);
  for (const Matrix& l : ops.jump_ops) {
    const Matrix ldag_l = l.adjoint() * l;
    out += l * rho * l.adjoint();
    out -= 0.5 * (ldag_l * rho + rho * ldag_l);
  }
  return out;
}

/// Right-hand side of the master equation at time t.
inline Matrix liouvillian_apply(const LindbladModel& m, double t, const Matrix& rho) {
  return liouvillian_apply(evaluate_model(m, t), rho);
}

inline SuperOperator liouvillian_matrix(const EvaluatedOperators& ops) {
  const Eigen::Index d = ops.hamiltonian.rows();
  const Matrix id = Matrix::Identity(d, d);
  Matrix s = Complex(0, -1) * (kron(id, ops.hamiltonian) -
                               kron(ops.hamiltonian.transpose(), id));
  for (const Matrix& l : ops.jump_ops) {
    const Matrix ldag_l = l.adjoint() * l;
    s += kron(l.conjugate(), l);
    s -= 0.5 * kron(id, ldag_l);
    s -= 0.5 * kron(ldag_l.transpose(), id);
  }
  return {d, std::move(s)};
}

inline SuperOperator liouvillian_matrix(const LindbladModel& m, double t) {
  return liouvillian_matrix(evaluate_model(m, t));
}

// ---------------------------------------------------------------------------
// Steady state
// ---------------------------------------------------------------------------

/// Steady state of the frozen generator, with the per-jump representation
/// weights extracted from pi when the model admits them. `gap` is the
/// second-smallest singular value of the Liouvillian matrix, reported as a
/// uniqueness certificate; `residual` is ||L pi||_F.
struct SteadyStateInfo {
  DensityMatrix pi;
  std::optional<std::vector<double>> weights;
  double gap = 0.0;
  double residual = 0.0;

  const std::vector<double>& require_weights(const char* where) const {
    if (!weights)
      throw MissingWeights(std::string(where) +
                           ": representation weights unavailable (consistency failed)");
    return *weights;
  }
};

namespace detail {

/// Weights for all jumps against a given pi; nullopt if any extraction fails.
/// Jumps that vanish at this protocol point get weight 1 (their rate is zero).
inline std::optional<std::vector<double>> try_extract_weights(
    const EvaluatedOperators& ops, const Matrix& pi, double tol) {
  Matrix pi_inv;
  try {
    pi_inv = hermitian_inverse_pd(pi);
  } catch (const Error&) {
    return std::nullopt;
  }
  std::vector<double> w;
  w.reserve(ops.jump_ops.size());
  for (const Matrix& l : ops.jump_ops) {
    if (max_abs(l) == 0.0) {
      w.push_back(1.0);
      continue;
    }
    const RatioExtraction r = extract_scaling_ratio(pi, pi_inv, l);
    if (!(r.spread <= tol)) return std::nullopt;
    w.push_back(r.weight);
  }
  return w;
}

}  // namespace detail

inline SteadyStateInfo steady_state(const LindbladModel& m, double t,
                                    double weight_tol = 1e-8) {
  const EvaluatedOperators ops = evaluate_model(m, t);
  const SuperOperator liou = liouvillian_matrix(ops);
  const Eigen::Index n = liou.matrix.rows();
  Eigen::BDCSVD<Matrix> svd(liou.matrix, Eigen::ComputeFullV);
  const RealVector& sv = svd.singularValues();  // descending
  const double gap = n >= 2 ? sv(n - 2) : 0.0;
  if (gap < 1e-9)
    throw DegenerateSteadyState("steady_state: kernel not one-dimensional (gap " +
                                std::to_string(gap) + ")");
  Matrix x = devectorize(svd.matrixV().col(n - 1), m.dim);
  const Complex tr = x.trace();
  if (std::abs(tr) < 1e-12)
    throw DegenerateSteadyState("steady_state: kernel vector is traceless");
  x /= tr;
  x = 0.5 * (x + x.adjoint().eval());
  x /= x.trace().real();
  Eigen::SelfAdjointEigenSolver<Matrix> es(x);
  if (es.eigenvalues().minCoeff() <= 1e-10)
    throw NotPositiveDefinite("steady_state: steady state not positive-definite");

  SteadyStateInfo out;
  out.pi = validate_density(x);
  out.gap = gap;
  out.residual = liou.apply(out.pi.matrix()).norm();
  out.weights = detail::try_extract_weights(ops, out.pi.matrix(), weight_tol);
  return out;
}

// ---------------------------------------------------------------------------
// Fixed-step classical fourth-order integration
// ---------------------------------------------------------------------------

namespace detail {

template <class Deriv>
Matrix rk4_step(Deriv&& f, double t, double dt, const Matrix& y) {
  const Matrix k1 = f(t, y);
  const Matrix k2 = f(t + 0.5 * dt, (y + 0.5 * dt * k1).eval());
  const Matrix k3 = f(t + 0.5 * dt, (y + 0.5 * dt * k2).eval());
  const Matrix k4 = f(t + dt, (y + dt * k3).eval());
  return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline Matrix rk4_master_step(const LindbladModel& m, double t, double dt,
                              const Matrix& rho) {
  return rk4_step(
      [&m](double s, const Matrix& y) { return liouvillian_apply(m, s, y); }, t, dt,
      rho);
}

/// Post-step validation shared by the integrators: symmetrize, renormalize the
/// trace if the drift is within tolerance, reject otherwise.
inline DensityMatrix certify_integrator_state(const Matrix& rho, double t,
                                              double drift_tol = 1e-8) {
  Matrix sym = 0.5 * (rho + rho.adjoint().eval());
  const double tr = sym.trace().real();
  if (std::abs(tr - 1.0) > drift_tol)
    throw IntegratorDrift("integrator: trace drift " + std::to_string(tr - 1.0) +
                          " at t=" + std::to_string(t));
  sym /= tr;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.eigenvalues().minCoeff() < -drift_tol)
    throw IntegratorDrift("integrator: positivity violated at t=" + std::to_string(t));
  return validate_density(sym, drift_tol);
}

/// Number of full steps and the (possibly shorter) remainder step.
struct StepPlan {
  long full_steps;
  double remainder;
};

inline StepPlan plan_steps(double span, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step size must be positive");
  if (span < 0.0) throw std::invalid_argument("time interval is reversed");
  const long n = static_cast<long>(std::floor(span / dt + 1e-9));
  double rem = span - static_cast<double>(n) * dt;
  if (rem < 1e-9 * dt) rem = 0.0;
  return {n, rem};
}

}  // namespace detail

/// Integrates the master equation from t0 to t1 with fixed step dt (final
/// step shortened to land on t1). Every stored state is validated.
inline std::vector<std::pair<double, DensityMatrix>> propagate(
    const LindbladModel& m, const DensityMatrix& rho0, double t0, double t1,
    double dt) {
  m.protocol.require_in_horizon(t0, "propagate");
  m.protocol.require_in_horizon(t1, "propagate");
  const auto plan = detail::plan_steps(t1 - t0, dt);
  std::vector<std::pair<double, DensityMatrix>> out;
  out.reserve(static_cast<std::size_t>(plan.full_steps) + 2);
  out.emplace_back(t0, rho0);
  Matrix rho = rho0.matrix();
  double t = t0;
  for (long i = 0; i < plan.full_steps; ++i) {
    rho = detail::rk4_master_step(m, t, dt, rho);
    t = t0 + static_cast<double>(i + 1) * dt;
    DensityMatrix certified = detail::certify_integrator_state(rho, t);
    rho = certified.matrix();
    out.emplace_back(t, std::move(certified));
  }
  if (plan.remainder > 0.0) {
    rho = detail::rk4_master_step(m, t, plan.remainder, rho);
    out.emplace_back(t1, detail::certify_integrator_state(rho, t1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Consistent-model fixture generator
// ---------------------------------------------------------------------------

/// Builds a d-dimensional model that satisfies the privileged-representation
/// and local-detailed-balance assumptions by construction: H diagonal in the
/// eigenbasis of a randomly chosen full-rank pi, and jump pairs
/// L_{i->j} = sqrt(rate_ij) |pi_j><pi_i| with rate_ij pi_i = rate_ji pi_j.
/// Each jump's entropy flow is ln(pi_j / pi_i), the log of its weight.
inline std::pair<LindbladModel, SteadyStateInfo> generate_consistent_model(
    int d, std::uint64_t seed) {
  if (d < 2 || d > 8)
    throw std::invalid_argument("generate_consistent_model: need 2 <= d <= 8");
  Rng rng(seed);

  // Distinct steady-state populations: unit-plus spacings, then normalize.
  RealVector p(d);
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    acc += 1.0 + 0.5 * rng.uniform();
    p(i) = acc;
  }
  p /= p.sum();

  const Matrix basis = random_unitary(d, rng);

  LindbladModel m;
  m.dim = d;
  m.protocol.t_start = 0.0;
  m.protocol.t_end = 1e6;

  RealVector energies(d);
  for (int i = 0; i < d; ++i) energies(i) = static_cast<double>(i) + 0.3 * rng.uniform();
  m.h_base = basis * energies.asDiagonal() * basis.adjoint();
  m.h_base = 0.5 * (m.h_base + m.h_base.adjoint().eval());

  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double rate_fwd = rng.uniform(0.4, 1.0);             // i -> j
      const double rate_bwd = rate_fwd * p(i) / p(j);            // detailed balance
      const int k_fwd = static_cast<int>(m.jumps.size());
      const int k_bwd = k_fwd + 1;
      JumpSpec fwd;
      fwd.label = "j" + std::to_string(i) + "to" + std::to_string(j);
      fwd.base = std::sqrt(rate_fwd) * (basis.col(j) * basis.col(i).adjoint());
      fwd.pair_index = k_bwd;
      fwd.entropy_flow = std::log(p(j) / p(i));
      JumpSpec bwd;
      bwd.label = "j" + std::to_string(j) + "to" + std::to_string(i);
      bwd.base = std::sqrt(rate_bwd) * (basis.col(i) * basis.col(j).adjoint());
      bwd.pair_index = k_fwd;
      bwd.entropy_flow = std::log(p(i) / p(j));
      m.jumps.push_back(std::move(fwd));
      m.jumps.push_back(std::move(bwd));
    }
  }
  m.validate_structure();
  return {m, steady_state(m, 0.0)};
}

// ---------------------------------------------------------------------------
// Reference two-level model: basis order (|e>, |g>), sigma_minus = |g><e|.
// H = (omega/2) sigma_z, L_minus = sqrt(gamma (nbar+1)) sigma_minus,
// L_plus = sqrt(gamma nbar) sigma_plus.
// ---------------------------------------------------------------------------

inline Matrix sigma_x() { return (Matrix(2, 2) << 0, 1, 1, 0).finished(); }
inline Matrix sigma_z() { return (Matrix(2, 2) << 1, 0, 0, -1).finished(); }
inline Matrix sigma_minus() { return (Matrix(2, 2) << 0, 0, 1, 0).finished(); }
inline Matrix sigma_plus() { return (Matrix(2, 2) << 0, 1, 0, 0).finished(); }

inline LindbladModel thermal_qubit_model(double omega = 1.0, double gamma = 1.0,
                                         double nbar = 1.0, double t_end = 100.0) {
  LindbladModel m;
  m.dim = 2;
  m.h_base = 0.5 * omega * sigma_z();
  m.protocol.t_start = 0.0;
  m.protocol.t_end = t_end;
  JumpSpec decay;
  decay.label = "decay";
  decay.base = sigma_minus();
  decay.amplitude = std::sqrt(gamma * (nbar + 1.0));
  decay.pair_index = 1;
  decay.entropy_flow = std::log((nbar + 1.0) / nbar);
  JumpSpec excite;
  excite.label = "excite";
  excite.base = sigma_plus();
  excite.amplitude = std::sqrt(gamma * nbar);
  excite.pair_index = 0;
  excite.entropy_flow = -decay.entropy_flow;
  m.jumps = {std::move(decay), std::move(excite)};
  m.validate_structure();
  return m;
}

}  // namespace nonadiabat
