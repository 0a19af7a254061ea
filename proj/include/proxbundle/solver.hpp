#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "proxbundle/error.hpp"
#include "proxbundle/model.hpp"
#include "proxbundle/problems.hpp"
#include "proxbundle/proxqp.hpp"

namespace proxbundle {

enum class StepKind { Descent, Null, Stop };
enum class RunStatus { Converged, MaxIter, QpFailure };

inline const char* to_string(StepKind k) {
  switch (k) {
    case StepKind::Descent: return "descent";
    case StepKind::Null: return "null";
    case StepKind::Stop: return "stop";
  }
  return "?";
}

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "Converged";
    case RunStatus::MaxIter: return "MaxIter";
    case RunStatus::QpFailure: return "QpFailure";
  }
  return "?";
}

struct SolverConfig {
  double rho{1.0};   ///< proximal coefficient
  double beta{0.5};  ///< descent parameter in (0, 1)
  double eps{1e-6};  ///< stopping precision, strictly positive
  Variant variant{Variant::Aggregate};
  PrunePolicy prune_policy{PrunePolicy::keep_all()};
  int max_iter{100000};
  QpSettings qp{};
  /// Keep z_next, s and g_next in the stored trace. Long runs can drop them;
  /// the scalar columns and the shared centers are always kept.
  bool record_vectors{true};

  void validate() const {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidInput("rho must be positive");
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidInput("beta must lie in (0, 1)");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidInput("eps must be positive");
    if (max_iter <= 0) throw InvalidInput("max_iter must be positive");
    if (!(qp.stationarity_tol > 0.0) || qp.max_inner_iter <= 0 || !(qp.activity_tol > 0.0)) {
      throw InvalidInput("QP settings must be positive");
    }
  }
};

/// Everything one iteration produced at iteration k.
struct IterationRecord {
  int k{};
  std::shared_ptr<const Vector> center;  ///< x^k, shared by the records of one series
  Vector z_next;        ///< z^{k+1}
  double f_center{};    ///< F(x^k)
  double f_znext{};     ///< F(z^{k+1}); NaN on the Stop record
  double model_val{};   ///< model^k(z^{k+1})
  double v{};           ///< F(x^k) - model^k(z^{k+1})
  double eta{};         ///< optimal value of the master problem
  Vector s;             ///< -rho (z^{k+1} - x^k)
  Vector g_next;        ///< subgradient at z^{k+1}; empty on the Stop record
  StepKind step_kind{StepKind::Null};
  double dist_sq{};     ///< ||z^{k+1} - x^k||^2
  double norm_s_minus_g{std::numeric_limits<double>::quiet_NaN()};
};

struct Trace {
  std::vector<IterationRecord> records;
  RunStatus status{RunStatus::MaxIter};
  SolverConfig config;
  std::string problem_name;
  Eigen::Index dim{};
  std::string message;  ///< diagnostic for QpFailure
};

/// Descent iff F(z) <= F(x) - beta (F(x) - model(z)); the boundary counts as descent.
inline StepKind descent_test(double f_znext, double f_center, double model_val, double beta) {
  return f_znext <= f_center - beta * (f_center - model_val) ? StepKind::Descent : StepKind::Null;
}

/// Stop iff the predicted decrease v is at most eps.
inline bool stopping_test(double v, double eps) { return v <= eps; }

/// Solver state between iterations.
struct SolverState {
  int k{1};
  std::shared_ptr<const Vector> center;
  double f_center{};
  CuttingPlaneModel model;
  bool stopped{false};
  std::vector<double> warm_start;  ///< previous multipliers mapped onto `model`

  /// Initial state: z^1 = x^1, one cut at x^1, empty aggregate.
  static SolverState initial(const ProblemSpec& problem, const Vector& x1, const SolverConfig& config) {
    config.validate();
    const OracleValue ov = eval_oracle(problem, x1);
    Cut first{x1, ov.f, ov.g, 1};
    CuttingPlaneModel model = config.variant == Variant::MultiCut
                                  ? CuttingPlaneModel::multi_cut(std::move(first))
                                  : CuttingPlaneModel::aggregate(AffineMinorant::bottom(x1.size()),
                                                                 std::move(first));
    return SolverState{1, std::make_shared<const Vector>(x1), ov.f, std::move(model), false, {}};
  }
};

/// One iteration, updating `state` in place.
inline IterationRecord advance(SolverState& state, const ProblemSpec& problem, const SolverConfig& config) {
  if (state.stopped) throw InvalidInput("iterate: run already stopped");
  const Vector& center = *state.center;

  ProxSolution sol = solve_prox(state.model, center, config.rho, config.qp, state.warm_start);

  IterationRecord rec;
  rec.k = state.k;
  rec.center = state.center;
  rec.f_center = state.f_center;
  rec.model_val = sol.model_val;
  rec.v = state.f_center - sol.model_val;
  rec.eta = sol.eta;
  rec.dist_sq = (sol.z_next - center).squaredNorm();

  if (stopping_test(rec.v, config.eps)) {
    rec.step_kind = StepKind::Stop;
    rec.f_znext = std::numeric_limits<double>::quiet_NaN();
    rec.z_next = std::move(sol.z_next);
    rec.s = std::move(sol.s);
    state.stopped = true;
    return rec;
  }

  const OracleValue ov = eval_oracle(problem, sol.z_next);
  rec.f_znext = ov.f;
  rec.norm_s_minus_g = (sol.s - ov.g).norm();
  rec.step_kind = descent_test(ov.f, state.f_center, sol.model_val, config.beta);

  const auto new_id = static_cast<std::size_t>(state.k + 1);
  Cut cut{sol.z_next, ov.f, ov.g, new_id};
  if (config.variant == Variant::MultiCut) {
    std::vector<double> weights = sol.multipliers;
    weights.push_back(0.0);
    const CuttingPlaneModel grown = add_cut(state.model, std::move(cut));
    state.model = prune(grown, weights, new_id, config.prune_policy, config.qp.activity_tol);
    // Carry the surviving weights over as the next warm start.
    const auto kept = state.model.cut_ids();
    const auto all = grown.cut_ids();
    state.warm_start.assign(kept.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0, j = 0; i < all.size() && j < kept.size(); ++i) {
      if (all[i] == kept[j]) {
        state.warm_start[j] = weights[i];
        total += weights[i];
        ++j;
      }
    }
    if (total > 0.0) {
      for (double& w : state.warm_start) w /= total;
    } else {
      state.warm_start.clear();
    }
  } else {
    state.model = add_cut(aggregate_update(state.model, sol), std::move(cut));
    state.warm_start = {1.0, 0.0};
  }

  if (rec.step_kind == StepKind::Descent) {
    state.center = std::make_shared<const Vector>(sol.z_next);
    state.f_center = ov.f;
  }
  state.k += 1;
  rec.z_next = std::move(sol.z_next);
  rec.s = std::move(sol.s);
  rec.g_next = ov.g;
  return rec;
}

/// One iteration on a copy of `state`.
inline std::pair<SolverState, IterationRecord> iterate(const SolverState& state, const ProblemSpec& problem,
                                                       const SolverConfig& config) {
  SolverState next = state;
  IterationRecord rec = advance(next, problem, config);
  return {std::move(next), std::move(rec)};
}

struct RunResult {
  Vector center;
  double f_center{};
  Trace trace;
};

/// Observer called with the initial state (record null) and then after every
/// iteration with the new state and the full record just produced.
using StateObserver = std::function<void(const SolverState&, const IterationRecord*)>;

/// Runs the method from x1 until the stopping test fires, max_iter records
/// are produced, or the master problem fails.
inline RunResult run(const ProblemSpec& problem, const Vector& x1, const SolverConfig& config,
                     const StateObserver& observer = {}) {
  SolverState state = SolverState::initial(problem, x1, config);
  if (observer) observer(state, nullptr);

  Trace trace;
  trace.config = config;
  trace.problem_name = problem.name;
  trace.dim = problem.dim;
  trace.status = RunStatus::MaxIter;

  while (static_cast<int>(trace.records.size()) < config.max_iter) {
    IterationRecord rec;
    try {
      rec = advance(state, problem, config);
    } catch (const ConvergenceFailure& e) {
      trace.status = RunStatus::QpFailure;
      trace.message = e.what();
      break;
    }
    if (observer) observer(state, &rec);
    if (!config.record_vectors) {
      rec.z_next = Vector();
      rec.s = Vector();
      rec.g_next = Vector();
    }
    trace.records.push_back(std::move(rec));
    if (state.stopped) {
      trace.status = RunStatus::Converged;
      break;
    }
  }
  return {*state.center, state.f_center, std::move(trace)};
}

}  // namespace proxbundle
