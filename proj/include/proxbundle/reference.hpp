#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "proxbundle/error.hpp"
#include "proxbundle/problems.hpp"
#include "proxbundle/solver.hpp"

namespace proxbundle {

struct ReferenceResult {
  Vector x_star;
  double f_star{};
  std::string method;  ///< "bundle" or "grid"
};

namespace detail {

/// Repeated grid search on shrinking boxes around the best point.
inline ReferenceResult grid_refine(const ProblemSpec& problem, int points_per_axis = 201, int rounds = 14) {
  const Eigen::Index n = problem.dim;
  if (n > 2) throw UnsupportedDimension("grid refinement supports dimension <= 2");
  if (!problem.box.lower.allFinite() || !problem.box.upper.allFinite()) {
    throw InvalidInput("grid refinement needs a finite box");
  }
  Vector lo = problem.box.lower;
  Vector hi = problem.box.upper;
  ReferenceResult best{(lo + hi) / 2.0, std::numeric_limits<double>::infinity(), "grid"};
  const int per = std::max(points_per_axis, 3);
  Vector x(n);
  for (int round = 0; round < rounds; ++round) {
    const Vector h = (hi - lo) / static_cast<double>(per - 1);
    const long total = n == 1 ? per : static_cast<long>(per) * per;
    for (long idx = 0; idx < total; ++idx) {
      x(0) = lo(0) + static_cast<double>(idx % per) * h(0);
      if (n == 2) x(1) = lo(1) + static_cast<double>(idx / per) * h(1);
      const double f = problem.oracle(x).f;
      if (f < best.f_star) {
        best.f_star = f;
        best.x_star = x;
      }
    }
    // Next box: four grid steps around the best point.
    lo = best.x_star - 4.0 * h;
    hi = best.x_star + 4.0 * h;
  }
  return best;
}

}  // namespace detail

/// High-accuracy estimate of (x*, F*). The bundle run uses eps = target_gap *
/// min(alpha, 1) so the stopping accuracy bound gives F - F* <= target_gap;
/// alpha comes from `alpha_estimate`, the problem's reference, or 1e-2.
/// Problems of dimension <= 2 are also grid-refined; the lower value wins.
inline ReferenceResult reference_solve(const ProblemSpec& problem, double target_gap,
                                       std::optional<double> alpha_estimate = std::nullopt,
                                       int max_iter = 1000000) {
  if (!(target_gap > 0.0)) throw InvalidInput("reference_solve: target_gap must be positive");
  double alpha = 1e-2;
  if (alpha_estimate) {
    alpha = *alpha_estimate;
  } else if (problem.reference) {
    alpha = problem.reference->alpha;
  }
  if (!(alpha > 0.0)) throw InvalidInput("reference_solve: alpha estimate must be positive");

  SolverConfig cfg;
  cfg.variant = Variant::MultiCut;
  cfg.eps = target_gap * std::min(alpha, 1.0);
  cfg.max_iter = max_iter;
  cfg.record_vectors = false;
  const RunResult run_result = run(problem, problem.default_x1, cfg);
  if (run_result.trace.status == RunStatus::QpFailure) {
    throw ConvergenceFailure("reference_solve: " + run_result.trace.message, run_result.center,
                             std::numeric_limits<double>::quiet_NaN());
  }
  ReferenceResult best{run_result.center, run_result.f_center, "bundle"};
  if (problem.dim <= 2 && problem.box.lower.allFinite() && problem.box.upper.allFinite()) {
    ReferenceResult grid = detail::grid_refine(problem);
    if (grid.f_star < best.f_star) best = std::move(grid);
  }
  return best;
}

}  // namespace proxbundle
