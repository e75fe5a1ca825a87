// Acceptance suite: nine property-based criteria at desk scale, each printed
// as a single pass/fail line with its wall-clock budget enforced. Run all with
// `acceptance`, or one with `acceptance <n>`. Exit code is the failure count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nonadiabat/nonadiabat.hpp"
#include "oracles.hpp"

using namespace nonadiabat;

namespace {

struct CriterionResult {
  bool pass = true;
  std::ostringstream detail;
};

#define EXPECT(cond, msg)                                   \
  do {                                                      \
    if (!(cond)) {                                          \
      r.pass = false;                                       \
      if (r.detail.tellp() > 0) r.detail << "; ";           \
      r.detail << msg;                                      \
    }                                                       \
  } while (0)

DensityMatrix diag_state(double a) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = 1.0 - a;
  return validate_density(m);
}

LindbladModel ramped_qubit() {
  LindbladModel m = thermal_qubit_model();
  m.jumps[0].amplitude = 1.0;
  m.jumps[0].amplitude_channel = "hot";
  m.jumps[1].amplitude = 1.0;
  m.jumps[1].amplitude_channel = "cold";
  m.h_terms.emplace_back("detune", 0.5 * sigma_z());
  m.protocol.t_end = 2.0;
  m.protocol.channels["hot"] = {{0.0, std::sqrt(2.0)}, {1.0, 1.15}};
  m.protocol.channels["cold"] = {{0.0, 1.0}, {1.0, 0.8}};
  m.protocol.channels["detune"] = {{0.0, 0.0}, {1.0, 0.7}};
  return m;
}

struct SweepModel {
  LindbladModel model;
  bool constant = true;
};

std::vector<SweepModel> consistent_sweep(bool include_ramped) {
  std::vector<SweepModel> out;
  out.push_back({thermal_qubit_model(), true});
  if (include_ramped) out.push_back({ramped_qubit(), false});
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int d = 2 + static_cast<int>(seed % 4);  // d in {2,...,5}
    out.push_back({generate_consistent_model(d, seed).first, true});
  }
  return out;
}

// 1. Equivalence of the relative-entropy and jump-weight excess rates.
CriterionResult criterion_equivalence() {
  CriterionResult r;
  Rng rng(101);
  double worst = 0.0;
  for (const SweepModel& sm : consistent_sweep(false)) {
    const Eigen::Index d = sm.model.dim;
    std::vector<DensityMatrix> states;
    for (int i = 0; i < 5; ++i) states.push_back(random_density(d, rng, 1e-3));
    SteadyStateInfo ssi = steady_state(sm.model, 0.0);
    for (int g = 0; g < 100; ++g) {
      const double t = g * (1.0 / 99.0);
      if (!sm.constant) ssi = steady_state(sm.model, t);
      for (const DensityMatrix& rho : states) {
        const double e7 = excess_rate_relative_entropy(sm.model, t, rho, ssi);
        const double e23 = excess_rate_weights(sm.model, t, rho, ssi);
        const double norm_resid = std::abs(e7 - e23) / (1.0 + std::abs(e7));
        worst = std::max(worst, norm_resid);
      }
    }
  }
  EXPECT(worst <= 1e-9, "max normalized residual " << worst << " > 1e-9");
  r.detail << "max normalized |relent - weights| = " << worst;
  return r;
}

// 2. Positivity of the nonadiabatic rate over the same sweep, with driving.
CriterionResult criterion_positivity() {
  CriterionResult r;
  Rng rng(102);
  double worst = 0.0;
  for (const SweepModel& sm : consistent_sweep(true)) {
    const Eigen::Index d = sm.model.dim;
    std::vector<DensityMatrix> states;
    for (int i = 0; i < 5; ++i) states.push_back(random_density(d, rng, 1e-3));
    SteadyStateInfo ssi = steady_state(sm.model, 0.0);
    for (int g = 0; g < 100; ++g) {
      const double t = g * (1.0 / 99.0);
      if (!sm.constant) ssi = steady_state(sm.model, t);
      for (const DensityMatrix& rho : states)
        worst = std::min(worst, nonadiabatic_rate(sm.model, t, rho, ssi).S_na);
    }
  }
  EXPECT(worst >= -1e-9, "min S_na " << worst << " < -1e-9");
  r.detail << "min S_na over sweep = " << worst;
  return r;
}

// 3. Monotone relaxation of D(rho_t || pi) at fixed protocol value.
CriterionResult criterion_monotone_relaxation() {
  CriterionResult r;
  const LindbladModel m = thermal_qubit_model();
  const SteadyStateInfo ssi = steady_state(m, 0.0);
  Rng rng(103);
  double worst_step = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto path = propagate(m, random_density(2, rng), 0.0, 2.0, 1e-2);
    double prev = relative_entropy(path.front().second, ssi.pi);
    for (std::size_t i = 1; i < path.size(); ++i) {
      const double cur = relative_entropy(path[i].second, ssi.pi);
      worst_step = std::max(worst_step, cur - prev);
      prev = cur;
    }
  }
  EXPECT(worst_step <= 1e-10, "worst per-step increase " << worst_step << " > 1e-10");
  r.detail << "worst per-step increase = " << worst_step;
  return r;
}

// 4. Kraus monotonicity and the classical decomposition, 100 fixtures.
CriterionResult criterion_kraus() {
  CriterionResult r;
  Rng rng(104);
  double worst_delta = -1.0, worst_gap = 0.0, worst_mu_norm = 0.0, worst_stoch = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const int d = 2 + static_cast<int>(seed % 5);  // d in {2,...,6}
    const auto [map, info] = generate_detailed_balance_map(d, seed);
    worst_mu_norm = std::max(worst_mu_norm, mu_normalization_check(map, info));
    for (int i = 0; i < 5; ++i) {
      const DensityMatrix rho = random_density(d, rng);
      const auto [op_value, classical] = delta_D_pair(map, info, rho);
      worst_delta = std::max(worst_delta, op_value);
      worst_gap = std::max(worst_gap,
                           std::abs(op_value - classical) / (1.0 + std::abs(op_value)));
      const ClassicalDecomposition dec = classical_decomposition(map, info, rho);
      for (Eigen::Index c = 0; c < d; ++c)
        worst_stoch = std::max(worst_stoch, std::abs(dec.W.col(c).sum() - 1.0));
    }
  }
  EXPECT(worst_delta <= 1e-10, "max Delta D " << worst_delta << " > 1e-10");
  EXPECT(worst_gap <= 1e-9, "route gap " << worst_gap << " > 1e-9");
  EXPECT(worst_mu_norm <= 1e-9, "mu normalization " << worst_mu_norm << " > 1e-9");
  EXPECT(worst_stoch <= 1e-9, "stochasticity " << worst_stoch << " > 1e-9");
  r.detail << "max Delta D = " << worst_delta << ", route gap = " << worst_gap;
  return r;
}

// 5. Trajectory unbiasedness against the deterministic evolution.
CriterionResult criterion_unbiasedness() {
  CriterionResult r;
  const LindbladModel m = thermal_qubit_model();
  const double tau = 2.0, dt = 1e-3;
  TrajectoryOptions opts;
  opts.checkpoint_stride = 400;  // checkpoints at t = 0, 0.4, ..., 2.0
  const auto result = run_ensemble(m, diag_state(0.5), 0.0, tau, dt, 5000, 42, opts);
  double worst_excess = 0.0;
  for (std::size_t c = 1; c < result.stats.checkpoints.size(); ++c) {
    const CheckpointStat& cs = result.stats.checkpoints[c];
    worst_excess = std::max(worst_excess,
                            cs.mean_state_error - 3.0 * cs.bootstrap_se);
    EXPECT(cs.mean_state_error <= 3.0 * cs.bootstrap_se,
           "checkpoint t=" << cs.t << " error " << cs.mean_state_error << " > 3 SE "
                           << 3.0 * cs.bootstrap_se);
  }
  const SteadyStateInfo ssi = steady_state(m, 0.0);
  const auto path = propagate(m, diag_state(0.5), 0.0, tau, dt);
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const double a = excess_rate_weights(m, path[i].first, path[i].second, ssi);
    const double b = excess_rate_weights(m, path[i + 1].first, path[i + 1].second, ssi);
    integral += 0.5 * (a + b) * (path[i + 1].first - path[i].first);
  }
  const double oracle_rate = integral / tau;
  const double dev = std::abs(result.stats.ds_ex_rate.value - oracle_rate);
  EXPECT(dev <= 3.0 * result.stats.ds_ex_rate.stderror,
         "ds_ex rate deviation " << dev << " > 3 SE "
                                 << 3.0 * result.stats.ds_ex_rate.stderror);
  r.detail << "max (error - 3 SE) = " << worst_excess << ", ds_ex rate dev = " << dev;
  return r;
}

// 6. Integral fluctuation theorem on a relaxation ensemble.
CriterionResult criterion_fluctuation_theorem() {
  CriterionResult r;
  const LindbladModel m = thermal_qubit_model();
  Matrix rho0 = Matrix::Zero(2, 2);
  rho0(0, 0) = 0.9;
  rho0(1, 1) = 0.1;
  const DensityMatrix mixed = epsilon_mix(validate_density(rho0), 1e-3);
  const auto result = run_ensemble(m, mixed, 0.0, 1.0, 1e-3, 100000, 11000);
  const double dev = std::abs(result.stats.ft.value - 1.0);
  EXPECT(dev <= 3.0 * result.stats.ft.stderror,
         "|E[exp(-ds_na)] - 1| = " << dev << " > 3 SE "
                                   << 3.0 * result.stats.ft.stderror);
  EXPECT(result.stats.ds_na.value >= -3.0 * result.stats.ds_na.stderror,
         "E[ds_na] " << result.stats.ds_na.value << " below -3 SE");
  r.detail << "E[exp(-ds_na)] = " << result.stats.ft.value << " +- "
           << result.stats.ft.stderror << ", E[ds_na] = " << result.stats.ds_na.value;
  return r;
}

// 7. Appendix identities: log intertwining and the vanishing vN cross term.
CriterionResult criterion_appendix_identities() {
  CriterionResult r;
  double worst_intertwine = 0.0;
  auto check_model = [&](const LindbladModel& m, const SteadyStateInfo& ssi) {
    const auto& weights = *ssi.weights;
    const EvaluatedOperators ops = evaluate_model(m, 0.0);
    for (std::size_t k = 0; k < ops.jump_ops.size(); ++k)
      worst_intertwine =
          std::max(worst_intertwine,
                   verify_log_intertwining(ssi.pi, ops.jump_ops[k], weights[k]));
  };
  {
    const LindbladModel m = thermal_qubit_model();
    check_model(m, steady_state(m, 0.0));
  }
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto [m, ssi] = generate_consistent_model(2 + static_cast<int>(seed % 4), seed);
    check_model(m, ssi);
  }
  EXPECT(worst_intertwine <= 1e-10,
         "log-intertwining residual " << worst_intertwine << " > 1e-10");

  auto relaxing = [](double t) { return diag_state(oracle::qubit_pe(0.9, t)); };
  const double res_h = vn_derivative_residual(relaxing, 0.5, 1e-3);
  const double res_h4 = vn_derivative_residual(relaxing, 0.5, 2.5e-4);
  EXPECT(res_h <= 1e-5, "vN derivative residual " << res_h << " > 1e-5 at h=1e-3");
  const double decay = res_h / res_h4;
  EXPECT(decay >= 8.0 && decay <= 32.0,
         "h-quartering decay factor " << decay << " outside [8, 32]");
  r.detail << "intertwining = " << worst_intertwine << ", vN residual(1e-3) = "
           << res_h << ", quartering factor = " << decay;
  return r;
}

// 8. Finite-difference rate converges linearly in h to the analytic rate.
CriterionResult criterion_fd_consistency() {
  CriterionResult r;
  const LindbladModel m = thermal_qubit_model();
  const SteadyStateInfo ssi = steady_state(m, 0.0);
  Rng rng(108);
  double worst_low = 10.0, worst_high = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const DensityMatrix rho = random_density(2, rng, 1e-3);
    const double exact = nonadiabatic_rate(m, 0.0, rho, ssi).S_na;
    const double dev1 = std::abs(fd_relative_entropy_rate(m, 0.0, rho, ssi, 1e-3) - exact);
    const double dev2 = std::abs(fd_relative_entropy_rate(m, 0.0, rho, ssi, 5e-4) - exact);
    const double dev3 =
        std::abs(fd_relative_entropy_rate(m, 0.0, rho, ssi, 2.5e-4) - exact);
    for (const double ratio : {dev1 / dev2, dev2 / dev3}) {
      worst_low = std::min(worst_low, ratio);
      worst_high = std::max(worst_high, ratio);
      EXPECT(ratio >= 1.6 && ratio <= 2.4, "halving ratio " << ratio
                                                            << " outside [1.6, 2.4]");
    }
  }
  r.detail << "halving ratios in [" << worst_low << ", " << worst_high << "]";
  return r;
}

// 9. Fixed-step integrator reproduces the closed-form relaxation.
CriterionResult criterion_closed_form() {
  CriterionResult r;
  const LindbladModel m = thermal_qubit_model();
  const auto path = propagate(m, diag_state(1.0), 0.0, 1.0, 1e-3);
  const double err = std::abs(path.back().second.matrix()(0, 0).real() -
                              oracle::qubit_pe(1.0, 1.0));
  EXPECT(err <= 1e-6, "closed-form error " << err << " > 1e-6 at dt=1e-3");
  auto error_at = [&](double dt) {
    const auto p = propagate(m, diag_state(1.0), 0.0, 1.0, dt);
    return std::abs(p.back().second.matrix()(0, 0).real() - oracle::qubit_pe(1.0, 1.0));
  };
  const double ratio = error_at(0.05) / error_at(0.025);
  EXPECT(ratio >= 10.0 && ratio <= 24.0,
         "dt-halving error ratio " << ratio << " not ~16x");
  r.detail << "error(dt=1e-3) = " << err << ", halving ratio = " << ratio;
  return r;
}

struct Criterion {
  int id;
  const char* title;
  double budget_seconds;
  std::function<CriterionResult()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> cs = {
      {1, "equivalence of excess-rate definitions", 10, criterion_equivalence},
      {2, "nonadiabatic rate positivity", 10, criterion_positivity},
      {3, "monotone relaxation of relative entropy", 5, criterion_monotone_relaxation},
      {4, "Kraus monotonicity and classical decomposition", 20, criterion_kraus},
      {5, "trajectory unbiasedness", 60, criterion_unbiasedness},
      {6, "integral fluctuation theorem", 600, criterion_fluctuation_theorem},
      {7, "appendix identities", 5, criterion_appendix_identities},
      {8, "finite-difference rate consistency", 5, criterion_fd_consistency},
      {9, "closed-form qubit relaxation", 2, criterion_closed_form},
  };
  return cs;
}

int run_criterion(const Criterion& c) {
  const auto start = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = c.run();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail << "exception: " << e.what();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (elapsed >= c.budget_seconds) {
    r.pass = false;
    r.detail << "; runtime " << elapsed << " s exceeds budget " << c.budget_seconds
             << " s";
  }
  std::printf("[%s] criterion %d: %s (%.2f s) - %s\n", r.pass ? "PASS" : "FAIL", c.id,
              c.title, elapsed, r.detail.str().c_str());
  std::fflush(stdout);
  return r.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  int failures = 0;
  if (argc > 1) {
    const int want = std::atoi(argv[1]);
    for (const Criterion& c : criteria())
      if (c.id == want) return run_criterion(c);
    std::fprintf(stderr, "unknown criterion %d\n", want);
    return 64;
  }
  for (const Criterion& c : criteria()) failures += run_criterion(c);
  return failures;
}
