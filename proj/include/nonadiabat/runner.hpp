#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nonadiabat/entropy.hpp"
#include "nonadiabat/scenario.hpp"
#include "nonadiabat/trajectory.hpp"

// Verb dispatch for the command-line front end. Every verb reads a scenario,
// runs the corresponding module operations, writes its report files under the
// output directory, and reports an exit code:
//   0  success
//   2  a physics check failed (the report is still written)
//   1  input or usage error (raised as exceptions, mapped by the caller)

namespace nonadiabat {

struct RunOptions {
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<int> ntraj;
  std::vector<std::pair<std::string, double>> tol_overrides;
};

struct RunReport {
  int exit_code = 0;
  std::optional<ConsistencyReport> consistency;
  std::vector<EntropyRates> rates;
  std::optional<EnsembleStats> ensemble;
  double max_equivalence_residual = 0.0;
  double max_normalized_equivalence_residual = 0.0;
};

namespace detail {

using OrderedJson = nlohmann::ordered_json;

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("OutputError", "cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json(const std::filesystem::path& path, const OrderedJson& j) {
  write_text(path, j.dump(2) + "\n");
}

inline OrderedJson value_with_error_json(const ValueWithError& v) {
  return OrderedJson{{"value", v.value}, {"stderr", v.stderror}};
}

inline const char* status_name(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    default: return "skipped";
  }
}

inline OrderedJson consistency_json(const ConsistencyReport& rep) {
  OrderedJson j;
  j["all_pass"] = rep.all_pass();
  j["privileged_pass"] = rep.privileged.pass;
  j["privileged_max_residual"] = rep.privileged.max_residual;
  j["privileged_detail"] = rep.privileged.detail;
  j["weights"] = rep.privileged.weights;
  j["detailed_balance_pass"] = rep.detailed_balance.pass;
  j["detailed_balance_max_residual"] = rep.detailed_balance.max_residual;
  j["detailed_balance_residuals"] = rep.detailed_balance.residuals;
  j["time_reversal_status"] = status_name(rep.time_reversal.status);
  j["time_reversal_max_residual"] = rep.time_reversal.max_residual;
  j["modular_pass"] = rep.modular.pass;
  j["modular_commutator_norm"] = rep.modular.commutator_norm;
  j["log_identity_pass"] = rep.log_identity.pass;
  j["log_identity_max_residual"] = rep.log_identity.max_residual;
  j["entropy_flow_vs_log_weight"] = rep.entropy_flow_vs_log_weight;
  return j;
}

inline OrderedJson ensemble_json(const EnsembleStats& s, const RunParams& run, double eps) {
  OrderedJson j;
  j["schema"] = "nonadiabat-ensemble-v1";
  j["n_traj"] = s.n_traj;
  j["dt"] = run.dt;
  j["tau"] = run.tau;
  j["base_seed"] = run.base_seed;
  j["epsilon_mix"] = eps;
  OrderedJson chk = OrderedJson::array();
  for (const CheckpointStat& c : s.checkpoints)
    chk.push_back(OrderedJson{{"t", c.t},
                       {"mean_state_error", c.mean_state_error},
                       {"bootstrap_se", c.bootstrap_se}});
  j["checkpoints"] = std::move(chk);
  j["ds_ex_rate"] = value_with_error_json(s.ds_ex_rate);
  j["ds_na"] = value_with_error_json(s.ds_na);
  j["fluctuation"] = OrderedJson{{"value", s.ft.value},
                          {"stderr", s.ft.stderror},
                          {"min_exponent", s.min_exponent},
                          {"max_exponent", s.max_exponent}};
  return j;
}

/// Steady-state infos on a time grid; constant models are solved once.
class SteadyStateGrid {
 public:
  SteadyStateGrid(const LindbladModel& m, double weight_tol)
      : model_(m), weight_tol_(weight_tol), constant_(m.is_time_independent()) {}

  const SteadyStateInfo& at(double t) {
    if (constant_) {
      if (!cache_) cache_ = steady_state(model_, t, weight_tol_);
      return *cache_;
    }
    cache_ = steady_state(model_, t, weight_tol_);
    return *cache_;
  }

 private:
  const LindbladModel& model_;
  double weight_tol_;
  bool constant_;
  std::optional<SteadyStateInfo> cache_;
};

}  // namespace detail

inline Scenario apply_overrides(Scenario sc, const RunOptions& opt) {
  if (opt.seed) sc.run.base_seed = *opt.seed;
  if (opt.dt) sc.run.dt = *opt.dt;
  if (opt.ntraj) sc.run.n_traj = *opt.ntraj;
  for (const auto& [key, value] : opt.tol_overrides) sc.tol.set(key, value);
  return sc;
}

// ---------------------------------------------------------------------------
// Verbs
// ---------------------------------------------------------------------------

inline RunReport run_validate(const Scenario& sc, const std::filesystem::path& out) {
  RunReport report;
  detail::OrderedJson j;
  try {
    const SteadyStateInfo ssi = steady_state(sc.model, sc.run.t0, sc.tol.weight_extract);
    const ConsistencyReport rep = run_consistency_checks(
        sc.model, sc.run.t0, ssi, sc.tol.consistency(sc.flags.time_reversal_check));
    report.consistency = rep;
    j = detail::consistency_json(rep);
    j["steady_state_gap"] = ssi.gap;
    j["steady_state_residual"] = ssi.residual;
    report.exit_code = rep.all_pass() ? 0 : 2;
    std::cout << "privileged:        " << (rep.privileged.pass ? "PASS" : "FAIL")
              << "  max residual " << detail::fmt_double(rep.privileged.max_residual);
    if (!rep.privileged.pass) std::cout << "  (" << rep.privileged.detail << ")";
    std::cout << "\n";
    std::cout << "detailed balance:  " << (rep.detailed_balance.pass ? "PASS" : "FAIL")
              << "  max residual "
              << detail::fmt_double(rep.detailed_balance.max_residual) << "\n";
    std::cout << "time reversal:     " << detail::status_name(rep.time_reversal.status)
              << "  max residual "
              << detail::fmt_double(rep.time_reversal.max_residual) << "\n";
    std::cout << "modular:           " << (rep.modular.pass ? "PASS" : "FAIL")
              << "  commutator norm "
              << detail::fmt_double(rep.modular.commutator_norm) << "\n";
    std::cout << "log identity:      " << (rep.log_identity.pass ? "PASS" : "FAIL")
              << "  max residual "
              << detail::fmt_double(rep.log_identity.max_residual) << "\n";
  } catch (const DegenerateSteadyState& e) {
    j["all_pass"] = false;
    j["steady_state_error"] = e.what();
    report.exit_code = 2;
    std::cout << "steady state: FAIL (" << e.what() << ")\n";
  } catch (const NotPositiveDefinite& e) {
    j["all_pass"] = false;
    j["steady_state_error"] = e.what();
    report.exit_code = 2;
    std::cout << "steady state: FAIL (" << e.what() << ")\n";
  }
  detail::write_json(out / "consistency.json", j);
  return report;
}

inline RunReport run_steady(const Scenario& sc, const std::filesystem::path& out) {
  const SteadyStateInfo ssi = steady_state(sc.model, sc.run.t0, sc.tol.weight_extract);
  detail::OrderedJson j;
  j["schema"] = "nonadiabat-steady-v1";
  j["t"] = sc.run.t0;
  j["pi"] = detail::OrderedJson(detail::matrix_to_json(ssi.pi.matrix()));
  j["gap"] = ssi.gap;
  j["residual"] = ssi.residual;
  if (ssi.weights)
    j["weights"] = *ssi.weights;
  else
    j["weights"] = nullptr;
  detail::write_json(out / "steady.json", j);
  std::cout << "gap " << detail::fmt_double(ssi.gap) << "  residual "
            << detail::fmt_double(ssi.residual) << "\n";
  return {};
}

inline RunReport run_propagate(const Scenario& sc, const std::filesystem::path& out) {
  const DensityMatrix rho0 = epsilon_mix(sc.initial_state, sc.flags.epsilon_mix);
  const auto path =
      propagate(sc.model, rho0, sc.run.t0, sc.run.t0 + sc.run.tau, sc.run.dt);
  std::string csv = "# nonadiabat propagate v1; columns: t, then column-stacked rho as re,im pairs; epsilon_mix=" +
                    detail::fmt_double(sc.flags.epsilon_mix) + "\n";
  csv += "t";
  for (Eigen::Index c = 0; c < sc.dim; ++c)
    for (Eigen::Index r = 0; r < sc.dim; ++r) {
      const std::string tag = std::to_string(r) + std::to_string(c);
      csv += ",re" + tag + ",im" + tag;
    }
  csv += "\n";
  for (const auto& [t, rho] : path) {
    csv += detail::fmt_double(t);
    const Vector v = vectorize(rho.matrix());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      csv += "," + detail::fmt_double(v(i).real());
      csv += "," + detail::fmt_double(v(i).imag());
    }
    csv += "\n";
  }
  detail::write_text(out / "propagate.csv", csv);
  return {};
}

inline RunReport run_rates(const Scenario& sc, const std::filesystem::path& out,
                           bool equivalence_summary) {
  RunReport report;
  const DensityMatrix rho0 = epsilon_mix(sc.initial_state, sc.flags.epsilon_mix);
  const auto path =
      propagate(sc.model, rho0, sc.run.t0, sc.run.t0 + sc.run.tau, sc.run.dt);
  detail::SteadyStateGrid grid(sc.model, sc.tol.weight_extract);

  std::string csv = "# nonadiabat rates v1; epsilon_mix=" +
                    detail::fmt_double(sc.flags.epsilon_mix) + "\n";
  csv += "t,S,S_dot,S_ex_relent,S_ex_weights,S_na,equivalence_residual\n";
  bool weights_available = true;
  for (const auto& [t, rho] : path) {
    const EntropyRates r = nonadiabatic_rate(sc.model, t, rho, grid.at(t));
    report.rates.push_back(r);
    const double resid = r.equivalence_residual();
    if (std::isnan(r.S_ex_weights)) weights_available = false;
    if (!std::isnan(resid)) {
      report.max_equivalence_residual = std::max(report.max_equivalence_residual, resid);
      report.max_normalized_equivalence_residual =
          std::max(report.max_normalized_equivalence_residual,
                   resid / (1.0 + std::abs(r.S_ex_relent)));
    }
    csv += detail::fmt_double(r.t);
    csv += "," + detail::fmt_double(r.S);
    csv += "," + detail::fmt_double(r.S_dot);
    csv += "," + detail::fmt_double(r.S_ex_relent);
    csv += "," + detail::fmt_double(r.S_ex_weights);
    csv += "," + detail::fmt_double(r.S_na);
    csv += "," + detail::fmt_double(resid);
    csv += "\n";
  }
  detail::write_text(out / "rates.csv", csv);

  if (equivalence_summary) {
    detail::OrderedJson j;
    j["schema"] = "nonadiabat-equivalence-v1";
    j["grid_points"] = report.rates.size();
    j["weights_available"] = weights_available;
    j["max_abs_residual"] = report.max_equivalence_residual;
    j["max_normalized_residual"] = report.max_normalized_equivalence_residual;
    j["tolerance"] = sc.tol.equivalence;
    detail::write_json(out / "equivalence.json", j);
    std::cout << "max |relent - weights| residual "
              << detail::fmt_double(report.max_equivalence_residual) << " (normalized "
              << detail::fmt_double(report.max_normalized_equivalence_residual)
              << ") over " << report.rates.size() << " grid points\n";
  }
  return report;
}

inline RunReport run_trajectories(const Scenario& sc, const std::filesystem::path& out) {
  RunReport report;
  const DensityMatrix rho0 = epsilon_mix(sc.initial_state, sc.flags.epsilon_mix);
  TrajectoryOptions opts;
  opts.checkpoint_stride = sc.run.checkpoint_stride;
  opts.ss_refresh_interval = sc.run.ss_refresh_interval;
  opts.weight_tol = sc.tol.weight_extract;
  const EnsembleResult result =
      run_ensemble(sc.model, rho0, sc.run.t0, sc.run.tau, sc.run.dt, sc.run.n_traj,
                   sc.run.base_seed, opts);
  report.ensemble = result.stats;
  detail::write_json(out / "ensemble.json",
                     detail::ensemble_json(result.stats, sc.run, sc.flags.epsilon_mix));
  if (sc.flags.log_events) {
    std::string csv = "# nonadiabat events v1\ntraj,t,channel,log_weight\n";
    for (std::size_t i = 0; i < result.records.size(); ++i)
      for (const JumpEvent& ev : result.records[i].events) {
        csv += std::to_string(i);
        csv += "," + detail::fmt_double(ev.t);
        csv += "," + std::to_string(ev.channel);
        csv += "," + detail::fmt_double(ev.log_weight);
        csv += "\n";
      }
    detail::write_text(out / "events.csv", csv);
  }
  std::cout << "n=" << result.stats.n_traj << "  E[exp(-ds_na)] = "
            << detail::fmt_double(result.stats.ft.value) << " +- "
            << detail::fmt_double(result.stats.ft.stderror) << "  E[ds_na] = "
            << detail::fmt_double(result.stats.ds_na.value) << " +- "
            << detail::fmt_double(result.stats.ds_na.stderror) << "\n";
  return report;
}

inline RunReport run_kraus_audit(const Scenario& sc, const std::filesystem::path& out) {
  RunReport report;
  const KrausMap& map = sc.kraus;
  detail::OrderedJson j;
  j["schema"] = "nonadiabat-kraus-audit-v1";
  const double tp = map.tp_residual();
  j["tp_residual"] = tp;
  bool pass = tp <= sc.tol.kraus_tp;

  double gap = 0.0;
  DensityMatrix pi;
  try {
    pi = invariant_state(map, &gap);
  } catch (const Error& e) {
    j["fixed_point_error"] = e.what();
    j["pass"] = false;
    detail::write_json(out / "kraus_audit.json", j);
    std::cout << "kraus audit: FAIL (" << e.what() << ")\n";
    report.exit_code = 2;
    return report;
  }
  j["fixed_point_gap"] = gap;
  j["pi"] = detail::OrderedJson(detail::matrix_to_json(pi.matrix()));

  const auto [dual_ok, choi_min] = dual_cptp_check(map, pi);
  j["dual_cptp"] = dual_ok;
  j["dual_choi_min_eigenvalue"] = choi_min;
  pass = pass && dual_ok;

  bool privileged = true;
  PrivilegedKrausInfo info;
  info.pi = pi;
  try {
    info.mu = extract_scaling_factors(map, pi, sc.tol.weight_extract);
    j["mu"] = info.mu;
  } catch (const NotPrivileged& e) {
    privileged = false;
    j["mu"] = nullptr;
    j["privileged_error"] = e.what();
  }
  j["privileged"] = privileged;
  pass = pass && privileged;

  if (privileged) {
    j["mu_normalization_residual"] = mu_normalization_check(map, info);
    pass = pass && j["mu_normalization_residual"].get<double>() <= sc.tol.mu_norm;
    Rng rng(sc.run.base_seed);
    double max_delta = -std::numeric_limits<double>::infinity();
    double max_gap = 0.0, max_stoch = 0.0, max_push = 0.0;
    for (int i = 0; i < sc.run.n_rho; ++i) {
      const DensityMatrix rho = random_density(sc.dim, rng);
      const auto [op_value, classical] = delta_D_pair(map, info, rho);
      max_delta = std::max(max_delta, op_value);
      max_gap = std::max(max_gap,
                         std::abs(op_value - classical) / (1.0 + std::abs(op_value)));
      const ClassicalDecomposition dec = classical_decomposition(map, info, rho);
      for (Eigen::Index c = 0; c < sc.dim; ++c)
        max_stoch = std::max(max_stoch, std::abs(dec.W.col(c).sum() - 1.0));
      max_push = std::max(max_push, (dec.W * dec.P - dec.P_prime).norm());
    }
    j["n_rho"] = sc.run.n_rho;
    j["max_delta_D"] = max_delta;
    j["max_route_gap"] = max_gap;
    j["max_stochasticity_residual"] = max_stoch;
    j["max_pushforward_residual"] = max_push;
    pass = pass && max_delta <= sc.tol.monotonicity && max_gap <= sc.tol.equivalence &&
           max_stoch <= sc.tol.mu_norm;
  }
  j["pass"] = pass;
  detail::write_json(out / "kraus_audit.json", j);
  std::cout << "kraus audit: " << (pass ? "PASS" : "FAIL") << "  tp residual "
            << detail::fmt_double(tp) << "  dual cptp " << (dual_ok ? "yes" : "no")
            << "\n";
  report.exit_code = pass ? 0 : 2;
  return report;
}

inline RunReport run_command(const std::string& verb, const Scenario& scenario,
                             const RunOptions& opt) {
  const Scenario sc = apply_overrides(scenario, opt);
  const std::filesystem::path out(opt.out_dir);
  std::filesystem::create_directories(out);

  const bool needs_lindblad = verb != "kraus-audit";
  if (needs_lindblad && sc.kind != ScenarioKind::Lindblad)
    throw ParseError("verb '" + verb + "' requires a lindblad scenario");
  if (!needs_lindblad && sc.kind != ScenarioKind::Kraus)
    throw ParseError("verb '" + verb + "' requires a kraus scenario");

  if (verb == "validate") return run_validate(sc, out);
  if (verb == "steady") return run_steady(sc, out);
  if (verb == "propagate") return run_propagate(sc, out);
  if (verb == "rates") return run_rates(sc, out, false);
  if (verb == "equivalence") return run_rates(sc, out, true);
  if (verb == "trajectories") return run_trajectories(sc, out);
  if (verb == "kraus-audit") return run_kraus_audit(sc, out);
  throw ParseError("unknown verb '" + verb + "'");
}

}  // namespace nonadiabat
