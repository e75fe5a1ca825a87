#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "nonadiabat/entropy.hpp"
#include "nonadiabat/model.hpp"
#include "nonadiabat/rng.hpp"
#include "nonadiabat/stats.hpp"

// Quantum-jump Monte Carlo unraveling of the master equation. Fixed-step
// first-order scheme: per step, jump k fires with probability
// Tr[L_k^dag L_k rho_c] dt (at most one jump per step, guarded by
// sum_k p_k < 0.1); otherwise the no-jump update
//   rho_c <- (rho_c - i dt (Heff rho_c - rho_c Heff^dag)) / norm,
// with Heff = H - (i/2) sum_k L_k^dag L_k. The unconditioned state is
// co-evolved with the deterministic integrator on the same grid.
//
// Stochastic entropy bookkeeping per trajectory:
//   s(t)        = -Tr[rho_c ln rho_u]
//   ds_ex       accumulates ln w_k at each jump
//   ds_na total = (s(tau) - s(0)) + ds_ex total.

namespace nonadiabat {

struct ConditionedState {
  DensityMatrix rho_c;  // conditioned on the observed jump record
  DensityMatrix rho_u;  // unconditioned, co-evolved
};

struct JumpEvent {
  double t = 0.0;
  int channel = -1;
  double log_weight = 0.0;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::vector<JumpEvent> events;
  std::vector<double> checkpoint_times;
  std::vector<double> s_series;          // stochastic entropy at checkpoints
  std::vector<DensityMatrix> conditioned;  // kept for ensemble statistics
  double ds_ex_total = 0.0;
  double ds_na_total = 0.0;
};

struct TrajectoryOptions {
  int checkpoint_stride = 0;        // in steps; <= 0 keeps endpoints only
  double ss_refresh_interval = 0.0;  // <= 0 refreshes at protocol breakpoints only
  double weight_tol = 1e-8;          // spread tolerance for weight extraction
  int bootstrap_resamples = 200;
};

namespace detail {

constexpr double kJumpBudget = 0.1;  // max sum_k p_k per step

struct StepWork {
  Matrix t1, t2;
  std::vector<double> probs;
};

/// One stochastic update of the conditioned state, in place. `u` is the
/// step's single uniform draw. Returns the jump channel, or -1 for no jump.
inline int advance_conditioned(Matrix& rho, const Matrix& heff,
                               const std::vector<Matrix>& jump_ops,
                               const std::vector<Matrix>& jump_rates, double t,
                               double dt, double u, StepWork& w) {
  const std::size_t nk = jump_ops.size();
  w.probs.resize(nk);
  double total = 0.0;
  for (std::size_t k = 0; k < nk; ++k) {
    double p = trace_prod(jump_rates[k], rho).real() * dt;
    if (p < 0.0) p = 0.0;
    w.probs[k] = p;
    total += p;
  }
  if (total >= kJumpBudget)
    throw StepTooLarge("trajectory step at t=" + std::to_string(t) +
                       ": jump probability sum " + std::to_string(total) +
                       " >= " + std::to_string(kJumpBudget));
  if (u < total) {
    double acc = 0.0;
    std::size_t pick = nk - 1;
    for (std::size_t k = 0; k < nk; ++k) {
      acc += w.probs[k];
      if (u < acc) {
        pick = k;
        break;
      }
    }
    w.t1.noalias() = jump_ops[pick] * rho;
    w.t2.noalias() = w.t1 * jump_ops[pick].adjoint();
    const double tr = w.t2.trace().real();
    if (!(tr > 0.0))
      throw Error("JumpNormalization",
                  "trajectory step: selected jump has vanishing norm");
    rho = w.t2 / tr;
    return static_cast<int>(pick);
  }
  w.t1.noalias() = heff * rho;
  w.t2.noalias() = rho * heff.adjoint();
  rho += Complex(0.0, -dt) * (w.t1 - w.t2);
  const double tr = rho.trace().real();
  if (!(tr > 0.0))
    throw StepTooLarge("trajectory step: no-jump norm collapsed");
  rho /= tr;
  w.t1 = rho.adjoint();
  rho = 0.5 * (rho + w.t1);
  return -1;
}

inline Matrix effective_hamiltonian(const EvaluatedOperators& ops) {
  Matrix heff = ops.hamiltonian;
  for (const Matrix& l : ops.jump_ops)
    heff += Complex(0.0, -0.5) * (l.adjoint() * l);
  return heff;
}

inline Matrix log_full_rank(const Matrix& rho, const char* where) {
  try {
    return matrix_log_pd(rho);
  } catch (const SingularOperand&) {
    throw SingularState(std::string(where) +
                        ": unconditioned state not full-rank; start from a "
                        "full-rank or epsilon-mixed state");
  }
}

}  // namespace detail

/// Projective draw from rho0's eigenbasis: |p_m><p_m| with probability equal
/// to the eigenvalue, so the expectation over draws is rho0.
inline DensityMatrix sample_initial_pure_state(const DensityMatrix& rho0, Rng& rng) {
  const HermitianEigenSystem es = hermitian_eig(rho0.matrix());
  const double u = rng.uniform();
  double acc = 0.0;
  Eigen::Index pick = es.eigenvalues.size() - 1;
  for (Eigen::Index i = 0; i < es.eigenvalues.size(); ++i) {
    acc += std::max(es.eigenvalues(i), 0.0);
    if (u < acc) {
      pick = i;
      break;
    }
  }
  const Vector v = es.eigenvectors.col(pick);
  return validate_density(v * v.adjoint());
}

struct StepIncrements {
  double ds = 0.0;
  double ds_ex = 0.0;
  int jump_channel = -1;
};

/// One step of the stochastic master equation, with the unconditioned state
/// co-evolved deterministically. Consumes exactly one uniform variate.
inline std::pair<ConditionedState, StepIncrements> trajectory_step(
    const ConditionedState& state, const LindbladModel& m, double t, double dt,
    const SteadyStateInfo& ssi, Rng& rng) {
  m.protocol.require_in_horizon(t, "trajectory_step");
  m.protocol.require_in_horizon(t + dt, "trajectory_step");
  const std::vector<double>& weights = ssi.require_weights("trajectory_step");

  const EvaluatedOperators ops = evaluate_model(m, t);
  std::vector<Matrix> rates;
  rates.reserve(ops.jump_ops.size());
  for (const Matrix& l : ops.jump_ops) rates.push_back(l.adjoint() * l);
  const Matrix heff = detail::effective_hamiltonian(ops);

  const Matrix log_u0 = detail::log_full_rank(state.rho_u.matrix(), "trajectory_step");
  const double s0 = -trace_prod(state.rho_c.matrix(), log_u0).real();

  Matrix rho_c = state.rho_c.matrix();
  detail::StepWork work;
  const int jump =
      detail::advance_conditioned(rho_c, heff, ops.jump_ops, rates, t, dt,
                                  rng.uniform(), work);

  const Matrix rho_u_next = detail::rk4_master_step(m, t, dt, state.rho_u.matrix());
  ConditionedState next;
  next.rho_c = validate_density(rho_c, 1e-8);
  next.rho_u = detail::certify_integrator_state(rho_u_next, t + dt);

  const Matrix log_u1 = detail::log_full_rank(next.rho_u.matrix(), "trajectory_step");
  StepIncrements inc;
  inc.ds = -trace_prod(next.rho_c.matrix(), log_u1).real() - s0;
  if (jump >= 0) {
    inc.ds_ex = std::log(weights[static_cast<std::size_t>(jump)]);
    inc.jump_channel = jump;
  }
  return {std::move(next), inc};
}

// ---------------------------------------------------------------------------
// Trajectory engine: shares the deterministic work (step tables, steady-state
// weight schedule, unconditioned path and its logarithms at checkpoints)
// across all trajectories of an ensemble.
// ---------------------------------------------------------------------------

class TrajectoryEngine {
 public:
  TrajectoryEngine(const LindbladModel& m, const DensityMatrix& rho0, double t0,
                   double tau, double dt, TrajectoryOptions opts = {})
      : model_(m), dt_(dt), opts_(opts) {
    if (!(tau > 0.0)) throw std::invalid_argument("TrajectoryEngine: tau must be > 0");
    m.protocol.require_in_horizon(t0, "TrajectoryEngine");
    m.protocol.require_in_horizon(t0 + tau, "TrajectoryEngine");
    const auto plan = detail::plan_steps(tau, dt);
    const long n_steps = plan.full_steps + (plan.remainder > 0.0 ? 1 : 0);
    if (n_steps < 1) throw std::invalid_argument("TrajectoryEngine: no steps in [t0, t0+tau]");
    step_times_.resize(static_cast<std::size_t>(n_steps) + 1);
    for (long i = 0; i <= plan.full_steps; ++i)
      step_times_[static_cast<std::size_t>(i)] = t0 + static_cast<double>(i) * dt;
    if (plan.remainder > 0.0) step_times_.back() = t0 + tau;

    // Checkpoint step indices: multiples of the stride plus both endpoints.
    const long stride = opts.checkpoint_stride > 0 ? opts.checkpoint_stride : n_steps;
    checkpoint_steps_.push_back(0);
    for (long i = stride; i < n_steps; i += stride) checkpoint_steps_.push_back(i);
    checkpoint_steps_.push_back(n_steps);

    build_weight_schedule(t0, t0 + tau);
    build_step_tables();
    build_unconditioned_path(rho0);

    initial_eig_ = hermitian_eig(rho0.matrix());
  }

  TrajectoryRecord run(std::uint64_t seed) const {
    Rng rng(seed);
    TrajectoryRecord rec;
    rec.seed = seed;
    rec.dt = dt_;

    Matrix rho_c = draw_initial(rng);
    detail::StepWork work;
    std::size_t next_chk = 0;
    auto checkpoint = [&](long step_index) {
      if (next_chk < checkpoint_steps_.size() &&
          checkpoint_steps_[next_chk] == step_index) {
        rec.checkpoint_times.push_back(step_times_[static_cast<std::size_t>(step_index)]);
        rec.s_series.push_back(
            -trace_prod(rho_c, log_unconditioned_[next_chk]).real());
        rec.conditioned.push_back(validate_density(rho_c, 1e-8));
        ++next_chk;
      }
    };
    checkpoint(0);

    const long n_steps = static_cast<long>(step_times_.size()) - 1;
    for (long i = 0; i < n_steps; ++i) {
      const auto& tab = tables_[table_index(i)];
      const double t = step_times_[static_cast<std::size_t>(i)];
      const double step = step_times_[static_cast<std::size_t>(i) + 1] - t;
      const int jump = detail::advance_conditioned(
          rho_c, tab.heff, tab.jump_ops, tab.jump_rates, t, step, rng.uniform(), work);
      if (jump >= 0) {
        const double lw = step_log_weights_[static_cast<std::size_t>(i)]
                                           [static_cast<std::size_t>(jump)];
        rec.ds_ex_total += lw;
        rec.events.push_back({t, jump, lw});
      }
      checkpoint(i + 1);
    }

    rec.ds_na_total = (rec.s_series.back() - rec.s_series.front()) + rec.ds_ex_total;
    return rec;
  }

  const std::vector<double>& step_times() const { return step_times_; }
  const std::vector<long>& checkpoint_steps() const { return checkpoint_steps_; }
  std::vector<double> checkpoint_times() const {
    std::vector<double> ts;
    for (long s : checkpoint_steps_) ts.push_back(step_times_[static_cast<std::size_t>(s)]);
    return ts;
  }
  /// Deterministic (unconditioned) state at checkpoint index c.
  const DensityMatrix& unconditioned(std::size_t c) const { return unconditioned_[c]; }
  std::size_t checkpoint_count() const { return checkpoint_steps_.size(); }

 private:
  struct StepTable {
    Matrix heff;
    std::vector<Matrix> jump_ops;
    std::vector<Matrix> jump_rates;
  };

  void build_weight_schedule(double t0, double t1) {
    std::vector<double> starts = {t0};
    if (!model_.is_time_independent()) {
      for (double b : model_.protocol.breakpoint_times(t0, t1)) starts.push_back(b);
      if (opts_.ss_refresh_interval > 0.0)
        for (double t = t0 + opts_.ss_refresh_interval; t < t1 - 1e-12;
             t += opts_.ss_refresh_interval)
          starts.push_back(t);
      std::sort(starts.begin(), starts.end());
      starts.erase(std::unique(starts.begin(), starts.end(),
                               [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                   starts.end());
    }
    segment_starts_ = starts;
    for (double ts : segment_starts_) {
      const SteadyStateInfo ssi = steady_state(model_, ts, opts_.weight_tol);
      std::vector<double> lw;
      for (double w : ssi.require_weights("TrajectoryEngine"))
        lw.push_back(std::log(w));
      segment_log_weights_.push_back(std::move(lw));
    }
  }

  std::size_t segment_for(double t) const {
    auto it = std::upper_bound(segment_starts_.begin(), segment_starts_.end(),
                               t + 1e-12);
    return static_cast<std::size_t>(std::max<std::ptrdiff_t>(
        0, std::distance(segment_starts_.begin(), it) - 1));
  }

  void build_step_tables() {
    const long n_steps = static_cast<long>(step_times_.size()) - 1;
    const bool constant = model_.is_time_independent();
    const long n_tables = constant ? 1 : n_steps;
    tables_.reserve(static_cast<std::size_t>(n_tables));
    for (long i = 0; i < n_tables; ++i) {
      const EvaluatedOperators ops = evaluate_model(model_, step_times_[static_cast<std::size_t>(i)]);
      StepTable tab;
      tab.heff = detail::effective_hamiltonian(ops);
      tab.jump_rates.reserve(ops.jump_ops.size());
      for (const Matrix& l : ops.jump_ops) tab.jump_rates.push_back(l.adjoint() * l);
      tab.jump_ops = ops.jump_ops;
      tables_.push_back(std::move(tab));
    }
    step_log_weights_.resize(static_cast<std::size_t>(n_steps));
    for (long i = 0; i < n_steps; ++i)
      step_log_weights_[static_cast<std::size_t>(i)] =
          segment_log_weights_[segment_for(step_times_[static_cast<std::size_t>(i)])];
  }

  std::size_t table_index(long step) const {
    return tables_.size() == 1 ? 0 : static_cast<std::size_t>(step);
  }

  void build_unconditioned_path(const DensityMatrix& rho0) {
    Matrix rho = rho0.matrix();
    std::size_t next_chk = 0;
    auto checkpoint = [&](long step_index, const DensityMatrix& state) {
      if (next_chk < checkpoint_steps_.size() &&
          checkpoint_steps_[next_chk] == step_index) {
        unconditioned_.push_back(state);
        log_unconditioned_.push_back(
            detail::log_full_rank(state.matrix(), "TrajectoryEngine"));
        ++next_chk;
      }
    };
    checkpoint(0, rho0);
    const long n_steps = static_cast<long>(step_times_.size()) - 1;
    for (long i = 0; i < n_steps; ++i) {
      const double t = step_times_[static_cast<std::size_t>(i)];
      const double step = step_times_[static_cast<std::size_t>(i) + 1] - t;
      rho = detail::rk4_master_step(model_, t, step, rho);
      const DensityMatrix certified =
          detail::certify_integrator_state(rho, t + step);
      rho = certified.matrix();
      checkpoint(i + 1, certified);
    }
  }

  Matrix draw_initial(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    Eigen::Index pick = initial_eig_.eigenvalues.size() - 1;
    for (Eigen::Index i = 0; i < initial_eig_.eigenvalues.size(); ++i) {
      acc += std::max(initial_eig_.eigenvalues(i), 0.0);
      if (u < acc) {
        pick = i;
        break;
      }
    }
    const Vector v = initial_eig_.eigenvectors.col(pick);
    return v * v.adjoint();
  }

  LindbladModel model_;
  double dt_;
  TrajectoryOptions opts_;
  std::vector<double> step_times_;
  std::vector<long> checkpoint_steps_;
  std::vector<StepTable> tables_;
  std::vector<double> segment_starts_;
  std::vector<std::vector<double>> segment_log_weights_;
  std::vector<std::vector<double>> step_log_weights_;
  std::vector<DensityMatrix> unconditioned_;
  std::vector<Matrix> log_unconditioned_;
  HermitianEigenSystem initial_eig_;
};

/// Single stochastic realization. Deterministic given (seed, dt, model).
inline TrajectoryRecord run_trajectory(const LindbladModel& m,
                                       const DensityMatrix& rho0, double t0,
                                       double tau, double dt,
                                       std::uint64_t seed,
                                       TrajectoryOptions opts = {}) {
  return TrajectoryEngine(m, rho0, t0, tau, dt, opts).run(seed);
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

struct CheckpointStat {
  double t = 0.0;
  double mean_state_error = 0.0;  // trace distance ||mean rho_c - rho_u||
  double bootstrap_se = 0.0;
};

struct EnsembleStats {
  int n_traj = 0;
  std::vector<CheckpointStat> checkpoints;
  ValueWithError ds_ex_rate;  // time-averaged stochastic excess rate
  ValueWithError ds_na;       // mean nonadiabatic entropy production
  ValueWithError ft;          // mean of exp(-ds_na)
  double min_exponent = 0.0;  // extremes of -ds_na, for tail diagnostics
  double max_exponent = 0.0;
};

struct EnsembleResult {
  EnsembleStats stats;
  std::vector<TrajectoryRecord> records;
};

/// Worker cap: hardware concurrency, optionally limited by NONADIABAT_THREADS.
inline int ensemble_worker_cap() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("NONADIABAT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0 && static_cast<unsigned>(v) < hw) hw = static_cast<unsigned>(v);
  }
  return static_cast<int>(hw);
}

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t s, std::uint64_t salt) {
  std::uint64_t z = s + salt + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

struct FluctuationEstimate {
  double value = 0.0;
  double stderror = 0.0;
  double min_exponent = 0.0;
  double max_exponent = 0.0;
};

/// Sample mean and bootstrap standard error of exp(-ds_na) over records,
/// together with the extreme exponents.
inline FluctuationEstimate fluctuation_functional(
    std::span<const TrajectoryRecord> records, int resamples = 200,
    std::uint64_t boot_seed = 0x0F1DC7A71ULL) {
  if (records.size() < 2)
    throw InsufficientSamples("fluctuation_functional: need at least 2 records");
  std::vector<double> values;
  values.reserve(records.size());
  FluctuationEstimate out;
  out.min_exponent = std::numeric_limits<double>::infinity();
  out.max_exponent = -std::numeric_limits<double>::infinity();
  for (const TrajectoryRecord& r : records) {
    values.push_back(std::exp(-r.ds_na_total));
    out.min_exponent = std::min(out.min_exponent, -r.ds_na_total);
    out.max_exponent = std::max(out.max_exponent, -r.ds_na_total);
  }
  out.value = mean(values);
  Rng rng(boot_seed);
  out.stderror = bootstrap_se(values, resamples, rng);
  return out;
}

/// Runs n trajectories (seed = base_seed + i), possibly concurrently; results
/// are aggregated in index order so the statistics are independent of the
/// worker count.
inline EnsembleResult run_ensemble(const LindbladModel& m, const DensityMatrix& rho0,
                                   double t0, double tau, double dt, int n,
                                   std::uint64_t base_seed,
                                   TrajectoryOptions opts = {}) {
  if (n < 1) throw std::invalid_argument("run_ensemble: n must be >= 1");
  const TrajectoryEngine engine(m, rho0, t0, tau, dt, opts);

  EnsembleResult result;
  result.records.resize(static_cast<std::size_t>(n));
  {
    const int workers = std::min(n, ensemble_worker_cap());
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1))
          result.records[static_cast<std::size_t>(i)] =
              engine.run(base_seed + static_cast<std::uint64_t>(i));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    };
    if (workers <= 1) {
      body();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(workers));
      for (int w = 0; w < workers; ++w) pool.emplace_back(body);
      for (std::thread& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
  }

  EnsembleStats& stats = result.stats;
  stats.n_traj = n;
  const int resamples = std::max(opts.bootstrap_resamples, 200);
  const std::vector<double> chk_times = engine.checkpoint_times();
  const std::size_t n_chk = engine.checkpoint_count();
  const double inv_n = 1.0 / static_cast<double>(n);

  Rng boot(detail::mix_seed(base_seed, 0xB005EDULL));
  for (std::size_t c = 0; c < n_chk; ++c) {
    Matrix mean_state = Matrix::Zero(m.dim, m.dim);
    for (const TrajectoryRecord& r : result.records)
      mean_state += r.conditioned[c].matrix();
    mean_state *= inv_n;
    CheckpointStat cs;
    cs.t = chk_times[c];
    cs.mean_state_error = trace_distance(mean_state, engine.unconditioned(c).matrix());
    std::vector<double> boot_dist;
    boot_dist.reserve(static_cast<std::size_t>(resamples));
    Matrix resampled(m.dim, m.dim);
    for (int b = 0; b < resamples; ++b) {
      resampled.setZero();
      for (int i = 0; i < n; ++i)
        resampled += result.records[boot.index(static_cast<std::size_t>(n))]
                         .conditioned[c]
                         .matrix();
      resampled *= inv_n;
      boot_dist.push_back(trace_distance(resampled, engine.unconditioned(c).matrix()));
    }
    cs.bootstrap_se = sample_sd(boot_dist);
    stats.checkpoints.push_back(cs);
  }

  std::vector<double> ex_rates, na_values;
  ex_rates.reserve(result.records.size());
  na_values.reserve(result.records.size());
  for (const TrajectoryRecord& r : result.records) {
    ex_rates.push_back(r.ds_ex_total / tau);
    na_values.push_back(r.ds_na_total);
  }
  Rng boot_ex(detail::mix_seed(base_seed, 0xE8ULL));
  stats.ds_ex_rate = {mean(ex_rates), bootstrap_se(ex_rates, resamples, boot_ex)};
  Rng boot_na(detail::mix_seed(base_seed, 0x7AULL));
  stats.ds_na = {mean(na_values), bootstrap_se(na_values, resamples, boot_na)};
  if (n >= 2) {
    const FluctuationEstimate ft = fluctuation_functional(
        result.records, resamples, detail::mix_seed(base_seed, 0xF7ULL));
    stats.ft = {ft.value, ft.stderror};
    stats.min_exponent = ft.min_exponent;
    stats.max_exponent = ft.max_exponent;
  } else {
    const double na = result.records.front().ds_na_total;
    stats.ft = {std::exp(-na), 0.0};
    stats.min_exponent = stats.max_exponent = -na;
  }
  return result;
}

}  // namespace nonadiabat
