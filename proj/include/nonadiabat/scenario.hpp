#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nonadiabat/consistency.hpp"
#include "nonadiabat/kraus.hpp"
#include "nonadiabat/model.hpp"

// Scenario files: strict-schema JSON descriptions of a Lindblad model (or a
// Kraus map) plus run parameters, tolerances, and flags. Matrices are nested
// arrays of [re, im] pairs. Unknown keys are rejected so fixtures stay
// diff-able and typos surface immediately.

namespace nonadiabat {

inline constexpr const char* kScenarioSchema = "nonadiabat-scenario-v1";

struct RunParams {
  double t0 = 0.0;
  double tau = 1.0;
  double dt = 1e-3;
  int n_traj = 1000;
  std::uint64_t base_seed = 1;
  int checkpoint_stride = 0;
  double ss_refresh_interval = 0.0;
  int n_rho = 5;  // sample states for kraus-audit
};

struct ScenarioFlags {
  bool time_reversal_check = true;
  double epsilon_mix = 0.0;
  bool log_events = false;
};

/// Named tolerance registry; every value can be overridden from the scenario
/// file or --tol-override.
struct ToleranceSet {
  double privileged = 1e-8;
  double detailed_balance = 1e-8;
  double time_reversal = 1e-10;
  double modular = 1e-8;
  double log_identity = 1e-8;
  double weight_extract = 1e-8;
  double kraus_tp = 1e-10;
  double equivalence = 1e-9;
  double monotonicity = 1e-10;
  double mu_norm = 1e-9;

  void set(const std::string& key, double value) {
    if (key == "privileged") privileged = value;
    else if (key == "detailed_balance") detailed_balance = value;
    else if (key == "time_reversal") time_reversal = value;
    else if (key == "modular") modular = value;
    else if (key == "log_identity") log_identity = value;
    else if (key == "weight_extract") weight_extract = value;
    else if (key == "kraus_tp") kraus_tp = value;
    else if (key == "equivalence") equivalence = value;
    else if (key == "monotonicity") monotonicity = value;
    else if (key == "mu_norm") mu_norm = value;
    else
      throw UnresolvedReference("unknown tolerance key '" + key + "'");
  }

  ConsistencyTolerances consistency(bool time_reversal_enabled) const {
    ConsistencyTolerances t;
    t.privileged = privileged;
    t.detailed_balance = detailed_balance;
    t.time_reversal = time_reversal;
    t.modular = modular;
    t.log_identity = log_identity;
    t.time_reversal_enabled = time_reversal_enabled;
    return t;
  }
};

enum class ScenarioKind { Lindblad, Kraus };

struct Scenario {
  ScenarioKind kind = ScenarioKind::Lindblad;
  Eigen::Index dim = 0;
  LindbladModel model;         // Lindblad scenarios
  DensityMatrix initial_state;  // Lindblad scenarios
  KrausMap kraus;              // Kraus scenarios
  RunParams run;
  ScenarioFlags flags;
  ToleranceSet tol;
};

namespace detail {

using Json = nlohmann::json;

inline void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) known = true;
    if (!known)
      throw ParseError(where + ": unknown key '" + key + "'");
  }
}

inline const Json& require_key(const Json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + ": missing key '" + key + "'");
  return *it;
}

inline double as_number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  return j.get<double>();
}

inline Matrix parse_matrix(const Json& j, Eigen::Index dim, const std::string& where) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != dim)
    throw ParseError(where + ": expected " + std::to_string(dim) + " rows");
  Matrix m(dim, dim);
  for (Eigen::Index r = 0; r < dim; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != dim)
      throw ParseError(where + ": row " + std::to_string(r) + " must have " +
                       std::to_string(dim) + " entries");
    for (Eigen::Index c = 0; c < dim; ++c) {
      const Json& entry = row[static_cast<std::size_t>(c)];
      if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number() ||
          !entry[1].is_number())
        throw ParseError(where + ": entry (" + std::to_string(r) + "," +
                         std::to_string(c) + ") must be an [re, im] pair");
      m(r, c) = Complex(entry[0].get<double>(), entry[1].get<double>());
    }
  }
  if (!m.allFinite()) throw ParseError(where + ": non-finite matrix entry");
  return m;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Protocol parse_protocol(const Json& j) {
  reject_unknown_keys(j, {"horizon", "channels"}, "protocol");
  const Json& horizon = require_key(j, "horizon", "protocol");
  if (!horizon.is_array() || horizon.size() != 2)
    throw ParseError("protocol.horizon: expected [t_start, t_end]");
  Protocol p;
  p.t_start = as_number(horizon[0], "protocol.horizon[0]");
  p.t_end = as_number(horizon[1], "protocol.horizon[1]");
  if (!(p.t_end > p.t_start))
    throw ParseError("protocol.horizon: t_end must exceed t_start");
  if (auto it = j.find("channels"); it != j.end()) {
    if (!it->is_object()) throw ParseError("protocol.channels: expected an object");
    for (const auto& [name, pts] : it->items()) {
      if (!pts.is_array() || pts.empty())
        throw ParseError("protocol.channels." + name + ": expected breakpoints");
      Protocol::Breakpoints bp;
      double prev_t = -std::numeric_limits<double>::infinity();
      for (const Json& pt : pts) {
        if (!pt.is_array() || pt.size() != 2)
          throw ParseError("protocol.channels." + name + ": breakpoints are [t, value]");
        const double t = as_number(pt[0], "breakpoint time");
        const double v = as_number(pt[1], "breakpoint value");
        if (!(t > prev_t))
          throw ParseError("protocol.channels." + name +
                           ": breakpoint times must be strictly increasing");
        prev_t = t;
        bp.emplace_back(t, v);
      }
      p.channels[name] = std::move(bp);
    }
  }
  return p;
}

inline void parse_run(const Json& j, RunParams& run) {
  reject_unknown_keys(j,
                      {"t0", "tau", "dt", "n_traj", "base_seed", "checkpoint_stride",
                       "ss_refresh_interval", "n_rho"},
                      "run");
  if (auto it = j.find("t0"); it != j.end()) run.t0 = as_number(*it, "run.t0");
  if (auto it = j.find("tau"); it != j.end()) run.tau = as_number(*it, "run.tau");
  if (auto it = j.find("dt"); it != j.end()) run.dt = as_number(*it, "run.dt");
  if (auto it = j.find("n_traj"); it != j.end()) run.n_traj = it->get<int>();
  if (auto it = j.find("base_seed"); it != j.end())
    run.base_seed = it->get<std::uint64_t>();
  if (auto it = j.find("checkpoint_stride"); it != j.end())
    run.checkpoint_stride = it->get<int>();
  if (auto it = j.find("ss_refresh_interval"); it != j.end())
    run.ss_refresh_interval = as_number(*it, "run.ss_refresh_interval");
  if (auto it = j.find("n_rho"); it != j.end()) run.n_rho = it->get<int>();
}

inline void parse_flags(const Json& j, ScenarioFlags& flags) {
  reject_unknown_keys(j, {"time_reversal_check", "epsilon_mix", "log_events"}, "flags");
  if (auto it = j.find("time_reversal_check"); it != j.end())
    flags.time_reversal_check = it->get<bool>();
  if (auto it = j.find("epsilon_mix"); it != j.end())
    flags.epsilon_mix = as_number(*it, "flags.epsilon_mix");
  if (auto it = j.find("log_events"); it != j.end()) flags.log_events = it->get<bool>();
}

inline void parse_tolerances(const Json& j, ToleranceSet& tol) {
  if (!j.is_object()) throw ParseError("tolerances: expected an object");
  for (const auto& [key, value] : j.items())
    tol.set(key, as_number(value, "tolerances." + key));
}

}  // namespace detail

inline Scenario parse_scenario_json(const nlohmann::json& j) {
  using detail::require_key;
  if (!j.is_object()) throw ParseError("scenario: top level must be an object");
  detail::reject_unknown_keys(j,
                              {"schema", "kind", "dim", "hamiltonian", "jumps",
                               "protocol", "initial_state", "kraus", "run",
                               "tolerances", "flags"},
                              "scenario");
  const std::string schema = require_key(j, "schema", "scenario").get<std::string>();
  if (schema != kScenarioSchema)
    throw SchemaVersionMismatch("scenario schema '" + schema + "', expected '" +
                                kScenarioSchema + "'");
  Scenario sc;
  const std::string kind = require_key(j, "kind", "scenario").get<std::string>();
  if (kind == "lindblad")
    sc.kind = ScenarioKind::Lindblad;
  else if (kind == "kraus")
    sc.kind = ScenarioKind::Kraus;
  else
    throw ParseError("scenario.kind: expected 'lindblad' or 'kraus'");
  sc.dim = require_key(j, "dim", "scenario").get<Eigen::Index>();
  if (sc.dim < 1 || sc.dim > 64)
    throw ParseError("scenario.dim: expected 1 <= dim <= 64");

  if (auto it = j.find("run"); it != j.end()) detail::parse_run(*it, sc.run);
  if (auto it = j.find("flags"); it != j.end()) detail::parse_flags(*it, sc.flags);
  if (auto it = j.find("tolerances"); it != j.end())
    detail::parse_tolerances(*it, sc.tol);

  if (sc.kind == ScenarioKind::Kraus) {
    const detail::Json& ops = require_key(j, "kraus", "scenario");
    if (!ops.is_array() || ops.empty())
      throw ParseError("scenario.kraus: expected a non-empty array of matrices");
    std::vector<Matrix> kraus;
    for (std::size_t k = 0; k < ops.size(); ++k)
      kraus.push_back(detail::parse_matrix(ops[k], sc.dim,
                                           "kraus[" + std::to_string(k) + "]"));
    sc.kraus = make_kraus_map(sc.dim, std::move(kraus), sc.tol.kraus_tp);
    return sc;
  }

  LindbladModel& m = sc.model;
  m.dim = sc.dim;
  m.protocol = detail::parse_protocol(require_key(j, "protocol", "scenario"));

  const detail::Json& ham = require_key(j, "hamiltonian", "scenario");
  detail::reject_unknown_keys(ham, {"base", "terms"}, "hamiltonian");
  m.h_base = detail::parse_matrix(require_key(ham, "base", "hamiltonian"), sc.dim,
                                  "hamiltonian.base");
  if (auto it = ham.find("terms"); it != ham.end()) {
    if (!it->is_array()) throw ParseError("hamiltonian.terms: expected an array");
    for (const detail::Json& term : *it) {
      detail::reject_unknown_keys(term, {"channel", "matrix"}, "hamiltonian term");
      const std::string channel =
          require_key(term, "channel", "hamiltonian term").get<std::string>();
      if (!m.protocol.channels.count(channel))
        throw UnresolvedReference("hamiltonian term references undeclared channel '" +
                                  channel + "'");
      m.h_terms.emplace_back(
          channel, detail::parse_matrix(require_key(term, "matrix", "hamiltonian term"),
                                        sc.dim, "hamiltonian term"));
    }
  }

  const detail::Json& jumps = require_key(j, "jumps", "scenario");
  if (!jumps.is_array()) throw ParseError("scenario.jumps: expected an array");
  std::map<std::string, int> jump_index;
  std::vector<std::string> pair_names;
  for (std::size_t k = 0; k < jumps.size(); ++k) {
    const detail::Json& spec = jumps[k];
    const std::string where = "jumps[" + std::to_string(k) + "]";
    detail::reject_unknown_keys(spec, {"name", "base", "amplitude", "pair", "entropy_flow"},
                                where);
    JumpSpec jump;
    jump.label = require_key(spec, "name", where).get<std::string>();
    if (jump_index.count(jump.label))
      throw ParseError(where + ": duplicate jump name '" + jump.label + "'");
    jump.base = detail::parse_matrix(require_key(spec, "base", where), sc.dim,
                                     where + ".base");
    const detail::Json& amp = require_key(spec, "amplitude", where);
    if (amp.is_number()) {
      jump.amplitude = amp.get<double>();
      if (jump.amplitude < 0.0)
        throw ParseError(where + ".amplitude: must be nonnegative");
    } else if (amp.is_object()) {
      detail::reject_unknown_keys(amp, {"channel"}, where + ".amplitude");
      jump.amplitude_channel =
          require_key(amp, "channel", where + ".amplitude").get<std::string>();
      if (!m.protocol.channels.count(jump.amplitude_channel))
        throw UnresolvedReference(where + " references undeclared channel '" +
                                  jump.amplitude_channel + "'");
    } else {
      throw ParseError(where + ".amplitude: expected a number or {\"channel\": ...}");
    }
    jump.entropy_flow = detail::as_number(require_key(spec, "entropy_flow", where),
                                          where + ".entropy_flow");
    pair_names.push_back(require_key(spec, "pair", where).get<std::string>());
    jump_index[jump.label] = static_cast<int>(k);
    m.jumps.push_back(std::move(jump));
  }
  for (std::size_t k = 0; k < m.jumps.size(); ++k) {
    auto it = jump_index.find(pair_names[k]);
    if (it == jump_index.end())
      throw UnresolvedReference("jumps[" + std::to_string(k) +
                                "] references undeclared pair '" + pair_names[k] + "'");
    m.jumps[k].pair_index = it->second;
  }
  m.validate_structure();

  const Matrix rho0 = detail::parse_matrix(require_key(j, "initial_state", "scenario"),
                                           sc.dim, "initial_state");
  try {
    sc.initial_state = validate_density(rho0);
  } catch (const Error& e) {
    throw ParseError(std::string("initial_state: ") + e.what());
  }
  return sc;
}

inline Scenario parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("scenario '" + path + "': " + e.what());
  }
  return parse_scenario_json(j);
}

/// (1 - eps) rho + eps I/d, with eps from the scenario flags.
inline DensityMatrix epsilon_mix(const DensityMatrix& rho, double eps) {
  if (eps <= 0.0) return rho;
  Matrix m = (1.0 - eps) * rho.matrix();
  m += (eps / static_cast<double>(rho.dim())) *
       Matrix::Identity(rho.dim(), rho.dim());
  return validate_density(m);
}

}  // namespace nonadiabat
