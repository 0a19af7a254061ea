#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/QR>

#include "proxbundle/error.hpp"
#include "proxbundle/model.hpp"
#include "proxbundle/prox_solution.hpp"

namespace proxbundle {

struct QpSettings {
  double stationarity_tol{1e-10};  ///< relative
  int max_inner_iter{10000};
  double activity_tol{1e-10};
};

struct KktResidual {
  double stationarity{};    ///< ||sum_j lambda_j g_j + rho (z - center)||
  double feasibility{};     ///< max(0, -min lambda, |sum lambda - 1|)
  double complementarity{};  ///< max_j lambda_j (model_val - piece_j(z))
};

/// Axis-aligned box.
struct Box {
  Vector lower;
  Vector upper;

  Eigen::Index dim() const { return lower.size(); }
  bool contains(const Vector& x) const {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }
};

/// Raw KKT residuals of `candidate` for the master problem on `model`.
inline KktResidual kkt_residual(const CuttingPlaneModel& model, const Vector& center, double rho,
                                const ProxSolution& candidate) {
  detail::require_dim(center, model.dim(), "kkt_residual center");
  detail::require_dim(candidate.z_next, model.dim(), "kkt_residual z_next");
  if (candidate.multipliers.size() != model.piece_count()) {
    throw InvalidInput("kkt_residual: multiplier count does not match model pieces");
  }
  KktResidual r;
  Vector combo = rho * (candidate.z_next - center);
  double sum = 0.0;
  double min_weight = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < model.piece_count(); ++j) {
    const double lam = candidate.multipliers[j];
    combo += lam * model.piece_slope(j);
    sum += lam;
    min_weight = std::min(min_weight, lam);
    r.complementarity = std::max(
        r.complementarity, lam * (candidate.model_val - model.piece_value(j, candidate.z_next)));
  }
  r.stationarity = combo.norm();
  r.feasibility = std::max({0.0, -min_weight, std::abs(sum - 1.0)});
  return r;
}

namespace detail {

struct KktScales {
  double gradient;  ///< 1 + max_j ||g_j||
  double value;     ///< 1 + max piece_scale(j, z) over weighted pieces
};

/// Far-away cuts can have large piece scales without affecting the solution,
/// so the value scale only looks at pieces carrying weight.
inline KktScales kkt_scales(const CuttingPlaneModel& model, const Vector& z, std::span<const double> weights) {
  KktScales sc{1.0, 1.0};
  for (std::size_t j = 0; j < model.piece_count(); ++j) {
    sc.gradient = std::max(sc.gradient, 1.0 + model.piece_slope(j).norm());
    if (j < weights.size() && weights[j] > 0.0) sc.value = std::max(sc.value, 1.0 + model.piece_scale(j, z));
  }
  return sc;
}

inline double relative_kkt(const KktResidual& r, const KktScales& sc) {
  return std::max({r.stationarity / sc.gradient, r.feasibility, r.complementarity / sc.value});
}

}  // namespace detail

/// Scaled maximum of the three KKT residuals; the quantity solve_prox drives
/// below QpSettings::stationarity_tol.
inline double relative_kkt_residual(const CuttingPlaneModel& model, const Vector& center, double rho,
                                    const ProxSolution& candidate) {
  return detail::relative_kkt(kkt_residual(model, center, rho, candidate),
                              detail::kkt_scales(model, candidate.z_next, candidate.multipliers));
}

namespace detail {

inline ProxSolution finish_solution(const CuttingPlaneModel& model, const Vector& center, double rho,
                                    std::vector<double> weights, Vector s) {
  ProxSolution sol;
  sol.multipliers = std::move(weights);
  sol.s = std::move(s);
  sol.z_next = center - sol.s / rho;
  sol.model_val = evaluate(model, sol.z_next).value;
  sol.eta = sol.model_val + 0.5 * rho * (sol.z_next - center).squaredNorm();
  sol.kkt_residual = relative_kkt_residual(model, center, rho, sol);
  return sol;
}

/// Closed form for one or two pieces: the dual is a scalar quadratic in the
/// weight theta of piece 0. Returns nothing when the result misses the KKT
/// tolerance, so the caller can fall back to the general method.
inline std::optional<ProxSolution> solve_two_piece(const CuttingPlaneModel& model, const Vector& center,
                                                   double rho, const QpSettings& settings) {
  if (model.piece_count() == 1) {
    return finish_solution(model, center, rho, {1.0}, model.piece_slope(0));
  }
  const Vector& g0 = model.piece_slope(0);
  const Vector& g1 = model.piece_slope(1);
  const double b0 = model.piece_value(0, center);
  const double b1 = model.piece_value(1, center);
  const Vector d = g0 - g1;
  const double dd = d.squaredNorm();
  double theta;
  if (dd == 0.0) {
    theta = b0 >= b1 ? 1.0 : 0.0;
  } else {
    theta = std::clamp((rho * (b0 - b1) - d.dot(g1)) / dd, 0.0, 1.0);
  }
  ProxSolution sol = finish_solution(model, center, rho, {theta, 1.0 - theta}, g1 + theta * d);
  if (!(sol.kkt_residual <= settings.stationarity_tol)) return std::nullopt;
  return sol;
}

}  // namespace detail

/// Solves min_x model(x) + (rho/2)||x - center||^2 through its dual
///
///   min  (1/(2 rho)) ||G lambda||^2 - <b, lambda>   over the unit simplex,
///
/// where column j of G is the slope of piece j and b_j its value at the
/// center. The primal point is z = center - G lambda / rho. The dual gradient
/// in coordinate j is -piece_j(z), so optimality means every piece carrying
/// weight attains the max at z and no other piece exceeds it.
///
/// Primal active-set method on the support of lambda. The reduced Hessian on a
/// face is singular exactly when the slopes on the support are affinely
/// dependent; the objective is then linear along a null direction, which is
/// followed until a weight reaches zero.
///
/// `warm_start`, if it has one entry per piece and lies on the simplex, is
/// used as the initial point.
inline ProxSolution solve_prox(const CuttingPlaneModel& model, const Vector& center, double rho,
                               const QpSettings& settings = {},
                               std::span<const double> warm_start = {}) {
  detail::require_dim(center, model.dim(), "solve_prox center");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidInput("solve_prox: rho must be positive");
  if (!center.allFinite()) throw InvalidInput("solve_prox: non-finite center");

  const Eigen::Index n = model.dim();
  const std::size_t m = model.piece_count();
  if (m <= 2) {
    if (auto sol = detail::solve_two_piece(model, center, rho, settings)) return *std::move(sol);
  }
  Matrix G(n, static_cast<Eigen::Index>(m));
  Vector b(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    G.col(jj) = model.piece_slope(j);
    b(jj) = model.piece_value(j, center);
  }

  std::vector<double> lambda(m, 0.0);
  std::vector<std::size_t> support;

  bool warm = warm_start.size() == m;
  if (warm) {
    double sum = 0.0;
    for (double w : warm_start) {
      if (!(w >= 0.0) || !std::isfinite(w)) warm = false;
      sum += w;
    }
    warm = warm && std::abs(sum - 1.0) < 1e-8;
    if (warm) {
      for (std::size_t j = 0; j < m; ++j) {
        if (warm_start[j] > 0.0) {
          lambda[j] = warm_start[j] / sum;
          support.push_back(j);
        }
      }
    }
  }
  if (!warm) {
    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double val = G.col(jj).squaredNorm() / (2.0 * rho) - b(jj);
      if (val < best_val) {
        best_val = val;
        best = j;
      }
    }
    lambda[best] = 1.0;
    support = {best};
  }

  auto combined_slope = [&] {
    Vector gs = Vector::Zero(n);
    for (std::size_t j : support) gs += lambda[j] * G.col(static_cast<Eigen::Index>(j));
    return gs;
  };
  // piece_j(z) with z = center - gs / rho, computed from the center values so
  // that it is exact for the trial point implied by the current weights.
  auto piece_at = [&](std::size_t j, const Vector& gs) {
    const auto jj = static_cast<Eigen::Index>(j);
    return b(jj) - G.col(jj).dot(gs) / rho;
  };

  const double inv_sqrt_rho = 1.0 / std::sqrt(rho);
  bool face_optimal = support.size() == 1;
  bool converged = false;
  int iter = 0;

  for (; iter < settings.max_inner_iter; ++iter) {
    Vector gs = combined_slope();

    if (!face_optimal) {
      const std::size_t k = support.size() - 1;
      const auto kk = static_cast<Eigen::Index>(k);
      const auto f0 = static_cast<Eigen::Index>(support[0]);
      Matrix A(n, kk);
      Vector r(kk);
      const double w0 = piece_at(support[0], gs);
      for (std::size_t i = 1; i <= k; ++i) {
        const auto fi = static_cast<Eigen::Index>(support[i]);
        A.col(static_cast<Eigen::Index>(i - 1)) = (G.col(fi) - G.col(f0)) * inv_sqrt_rho;
        r(static_cast<Eigen::Index>(i - 1)) = w0 - piece_at(support[i], gs);
      }

      Eigen::ColPivHouseholderQR<Matrix> qr(A.rows(), A.cols());
      qr.setThreshold(1e-11);
      qr.compute(A);
      const Eigen::Index rank = qr.rank();

      Vector y(kk);
      bool unbounded_direction = false;
      if (rank == kk) {
        // A^T A y = -r  with  A P = Q R.
        const auto R = qr.matrixR().topLeftCorner(kk, kk).template triangularView<Eigen::Upper>();
        Vector rhs = -(qr.colsPermutation().transpose() * r);
        Vector t = R.transpose().solve(rhs);
        Vector u = R.solve(t);
        y = qr.colsPermutation() * u;
      } else {
        // Null vector of A: R11 u1 + R12 e_1 = 0, remaining free components 0.
        Vector up = Vector::Zero(kk);
        up(rank) = 1.0;
        if (rank > 0) {
          const Matrix Rfull = qr.matrixR().topLeftCorner(rank, kk).template triangularView<Eigen::Upper>();
          Vector rhs = -Rfull.col(rank);
          up.head(rank) =
              Rfull.topLeftCorner(rank, rank).template triangularView<Eigen::Upper>().solve(rhs);
        }
        y = qr.colsPermutation() * up;
        // The dual objective changes at rate <r, y> along y; go downhill.
        if (r.dot(y) > 0.0) y = -y;
        unbounded_direction = true;
      }

      std::vector<double> p(support.size());
      p[0] = -y.sum();
      for (std::size_t i = 1; i <= k; ++i) p[i] = y(static_cast<Eigen::Index>(i - 1));

      double step = unbounded_direction ? std::numeric_limits<double>::infinity() : 1.0;
      std::size_t blocking = support.size();
      for (std::size_t i = 0; i < support.size(); ++i) {
        if (p[i] < 0.0) {
          const double ratio = -lambda[support[i]] / p[i];
          if (ratio < step) {
            step = ratio;
            blocking = i;
          }
        }
      }
      if (!std::isfinite(step)) {
        // A null direction that leaves the simplex face only through
        // roundoff; nothing to follow.
        face_optimal = true;
        continue;
      }
      for (std::size_t i = 0; i < support.size(); ++i) lambda[support[i]] += step * p[i];
      if (blocking < support.size()) {
        lambda[support[blocking]] = 0.0;
        support.erase(support.begin() + static_cast<std::ptrdiff_t>(blocking));
        for (std::size_t i = 0; i < support.size();) {
          if (lambda[support[i]] <= 0.0) {
            lambda[support[i]] = 0.0;
            support.erase(support.begin() + static_cast<std::ptrdiff_t>(i));
          } else {
            ++i;
          }
        }
        face_optimal = support.size() == 1;
        continue;
      }
      face_optimal = true;
      gs = combined_slope();
    }

    // Optimal on the current face: look for a piece above the supported ones.
    Vector z = center - gs / rho;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j : support) top = std::max(top, piece_at(j, gs));
    const double tol = settings.stationarity_tol * detail::kkt_scales(model, z, lambda).value;
    std::size_t entering = m;
    double worst = tol;
    for (std::size_t j = 0; j < m; ++j) {
      if (lambda[j] > 0.0) continue;
      const double excess = piece_at(j, gs) - top;
      if (excess > worst) {
        worst = excess;
        entering = j;
      }
    }
    if (entering == m) {
      converged = true;
      break;
    }
    support.push_back(entering);
    face_optimal = false;
  }

  const double total = std::accumulate(lambda.begin(), lambda.end(), 0.0);
  for (double& l : lambda) l = std::max(0.0, l) / total;

  Vector s = Vector::Zero(n);
  for (std::size_t j = 0; j < m; ++j) {
    if (lambda[j] > 0.0) s += lambda[j] * G.col(static_cast<Eigen::Index>(j));
  }
  ProxSolution sol = detail::finish_solution(model, center, rho, std::move(lambda), std::move(s));
  sol.inner_iterations = iter;

  if (!converged || !(sol.kkt_residual <= settings.stationarity_tol)) {
    throw ConvergenceFailure("solve_prox: KKT residual " + std::to_string(sol.kkt_residual) +
                                 " after " + std::to_string(iter) + " inner iterations",
                             sol.z_next, sol.kkt_residual);
  }
  return sol;
}

/// Bounding box of the single-piece minimizers center - g_j / rho, padded.
/// The master problem's minimizer is a convex combination of these points.
inline Box certified_box(const CuttingPlaneModel& model, const Vector& center, double rho) {
  detail::require_dim(center, model.dim(), "certified_box");
  Box box{Vector::Constant(model.dim(), std::numeric_limits<double>::infinity()),
          Vector::Constant(model.dim(), -std::numeric_limits<double>::infinity())};
  for (std::size_t j = 0; j < model.piece_count(); ++j) {
    const Vector p = center - model.piece_slope(j) / rho;
    box.lower = box.lower.cwiseMin(p);
    box.upper = box.upper.cwiseMax(p);
  }
  const double pad = 0.01 * (box.upper - box.lower).maxCoeff() + 1e-9;
  box.lower.array() -= pad;
  box.upper.array() += pad;
  return box;
}

/// Lipschitz constant of model(x) + (rho/2)||x - center||^2 on `box`.
inline double prox_objective_lipschitz(const CuttingPlaneModel& model, const Vector& center,
                                       double rho, const Box& box) {
  double g = 0.0;
  for (std::size_t j = 0; j < model.piece_count(); ++j) g = std::max(g, model.piece_slope(j).norm());
  const Vector far = (box.lower - center).cwiseAbs().cwiseMax((box.upper - center).cwiseAbs());
  return g + rho * far.norm();
}

/// Grid search for the master problem; an oracle for solve_prox in up to
/// three dimensions. Multipliers are not produced.
inline ProxSolution brute_force_prox(const CuttingPlaneModel& model, const Vector& center, double rho,
                                     const Box& box, int points_per_axis) {
  const Eigen::Index n = model.dim();
  if (n > 3) throw UnsupportedDimension("brute_force_prox supports dimension <= 3");
  detail::require_dim(center, n, "brute_force_prox center");
  detail::require_dim(box.lower, n, "brute_force_prox box");
  detail::require_dim(box.upper, n, "brute_force_prox box");
  if (points_per_axis < 2) throw InvalidInput("brute_force_prox needs at least 2 points per axis");

  // Pieces as intercept + <slope, x>, flattened for the inner loop.
  const std::size_t m = model.piece_count();
  std::vector<double> intercept(m);
  std::vector<double> slope(m * 3, 0.0);
  const Vector origin = Vector::Zero(n);
  for (std::size_t j = 0; j < m; ++j) {
    intercept[j] = model.piece_value(j, origin);
    for (Eigen::Index d = 0; d < n; ++d) slope[j * 3 + static_cast<std::size_t>(d)] = model.piece_slope(j)(d);
  }

  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> step{0, 0, 0};
  std::array<int, 3> count{1, 1, 1};
  std::array<double, 3> c{0, 0, 0};
  for (Eigen::Index d = 0; d < n; ++d) {
    const auto dd = static_cast<std::size_t>(d);
    lo[dd] = box.lower(d);
    step[dd] = (box.upper(d) - box.lower(d)) / (points_per_axis - 1);
    count[dd] = points_per_axis;
    c[dd] = center(d);
  }

  double best = std::numeric_limits<double>::infinity();
  std::array<int, 3> best_idx{0, 0, 0};
  std::vector<double> partial(m);
  for (int i0 = 0; i0 < count[0]; ++i0) {
    const double x0 = lo[0] + i0 * step[0];
    for (int i1 = 0; i1 < count[1]; ++i1) {
      const double x1 = lo[1] + i1 * step[1];
      for (std::size_t j = 0; j < m; ++j) {
        partial[j] = intercept[j] + slope[j * 3] * x0 + slope[j * 3 + 1] * x1;
      }
      const double q01 = (x0 - c[0]) * (x0 - c[0]) + (x1 - c[1]) * (x1 - c[1]);
      for (int i2 = 0; i2 < count[2]; ++i2) {
        const double x2 = lo[2] + i2 * step[2];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, partial[j] + slope[j * 3 + 2] * x2);
        const double obj = mx + 0.5 * rho * (q01 + (x2 - c[2]) * (x2 - c[2]));
        if (obj < best) {
          best = obj;
          best_idx = {i0, i1, i2};
        }
      }
    }
  }

  ProxSolution sol;
  sol.z_next = Vector(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    const auto dd = static_cast<std::size_t>(d);
    sol.z_next(d) = lo[dd] + best_idx[dd] * step[dd];
  }
  sol.model_val = evaluate(model, sol.z_next).value;
  sol.eta = sol.model_val + 0.5 * rho * (sol.z_next - center).squaredNorm();
  sol.s = -rho * (sol.z_next - center);
  sol.kkt_residual = std::numeric_limits<double>::quiet_NaN();
  return sol;
}

}  // namespace proxbundle
