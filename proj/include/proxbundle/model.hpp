#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "proxbundle/error.hpp"
#include "proxbundle/prox_solution.hpp"

namespace proxbundle {

/// Linearization F(point) + <subgrad, x - point> of F at `point`.
struct Cut {
  Vector point;
  double value{};
  Vector subgrad;
  std::size_t id{};  ///< iteration index at which the point was generated

  double operator()(const Vector& x) const { return value + subgrad.dot(x - point); }
};

/// intercept + <slope, x>, or the constant -inf when `is_bottom`.
struct AffineMinorant {
  Vector slope;
  double intercept{};
  bool is_bottom{true};

  static AffineMinorant bottom(Eigen::Index n) { return {Vector::Zero(n), 0.0, true}; }

  double operator()(const Vector& x) const {
    return is_bottom ? -std::numeric_limits<double>::infinity() : intercept + slope.dot(x);
  }
};

enum class Variant { MultiCut, Aggregate };

inline const char* to_string(Variant v) {
  return v == Variant::MultiCut ? "multicut" : "aggregate";
}

struct PrunePolicy {
  enum class Kind { KeepAll, KeepActive, MaxSize };
  Kind kind{Kind::KeepAll};
  std::size_t max_size{0};

  static PrunePolicy keep_all() { return {Kind::KeepAll, 0}; }
  static PrunePolicy keep_active() { return {Kind::KeepActive, 0}; }
  static PrunePolicy bounded(std::size_t m) { return {Kind::MaxSize, m}; }
};

/// Piece id reserved for the aggregate affine function. Cut ids start at 1.
inline constexpr std::size_t kAggregatePieceId = 0;

struct ModelValue {
  double value;
  std::size_t piece;  ///< id of a maximizing piece (lowest id among ties)
};

/// Piecewise-linear lower model of F.
///
/// MultiCut: max over the retained cuts (the bundle J_k), kept in increasing
/// id order. Aggregate: max of one aggregate affine function and the newest
/// cut; the aggregate may be the -inf sentinel. Values are immutable; the
/// free functions below return updated copies. Cuts are shared between
/// copies.
class CuttingPlaneModel {
 public:
  static CuttingPlaneModel multi_cut(Cut first) {
    validate_cut(first, first.point.size());
    CuttingPlaneModel m(Variant::MultiCut, first.point.size());
    m.cuts_.push_back(std::make_shared<const Cut>(std::move(first)));
    return m;
  }

  static CuttingPlaneModel aggregate(AffineMinorant agg, Cut newest) {
    const auto n = newest.point.size();
    validate_cut(newest, n);
    if (!agg.is_bottom) {
      detail::require_dim(agg.slope, n, "aggregate slope");
      if (!agg.slope.allFinite() || !std::isfinite(agg.intercept)) {
        throw InvalidInput("aggregate minorant has non-finite entries");
      }
    } else {
      agg.slope = Vector::Zero(n);
      agg.intercept = 0.0;
    }
    CuttingPlaneModel m(Variant::Aggregate, n);
    m.aggregate_ = std::move(agg);
    m.cuts_.push_back(std::make_shared<const Cut>(std::move(newest)));
    return m;
  }

  Variant variant() const noexcept { return variant_; }
  Eigen::Index dim() const noexcept { return dim_; }

  /// Number of cuts: |J_k| for MultiCut, 1 for Aggregate.
  std::size_t cut_count() const noexcept { return cuts_.size(); }
  const Cut& cut(std::size_t i) const { return *cuts_.at(i); }
  const Cut& newest() const { return *cuts_.back(); }
  const AffineMinorant& aggregate_piece() const noexcept { return aggregate_; }

  std::vector<std::size_t> cut_ids() const {
    std::vector<std::size_t> ids;
    ids.reserve(cuts_.size());
    for (const auto& c : cuts_) ids.push_back(c->id);
    return ids;
  }

  // Uniform view over the pieces entering the max, in increasing id order.
  // For Aggregate the non-bottom aggregate comes first (id 0).

  std::size_t piece_count() const noexcept { return cuts_.size() + (has_aggregate() ? 1 : 0); }

  std::size_t piece_id(std::size_t i) const {
    if (has_aggregate()) return i == 0 ? kAggregatePieceId : cuts_.at(i - 1)->id;
    return cuts_.at(i)->id;
  }

  const Vector& piece_slope(std::size_t i) const {
    if (has_aggregate()) return i == 0 ? aggregate_.slope : cuts_.at(i - 1)->subgrad;
    return cuts_.at(i)->subgrad;
  }

  double piece_value(std::size_t i, const Vector& x) const {
    if (has_aggregate()) return i == 0 ? aggregate_(x) : (*cuts_.at(i - 1))(x);
    return (*cuts_.at(i))(x);
  }

  /// Magnitude of the terms summed when evaluating piece i at x; the
  /// floating-point error of piece_value is a small multiple of eps times this.
  double piece_scale(std::size_t i, const Vector& x) const {
    if (has_aggregate() && i == 0) {
      return std::abs(aggregate_.intercept) + aggregate_.slope.norm() * x.norm();
    }
    const Cut& c = *cuts_.at(has_aggregate() ? i - 1 : i);
    return std::abs(c.value) + c.subgrad.norm() * (x - c.point).norm();
  }

  bool has_aggregate() const noexcept {
    return variant_ == Variant::Aggregate && !aggregate_.is_bottom;
  }

 private:
  CuttingPlaneModel(Variant v, Eigen::Index n) : variant_(v), dim_(n), aggregate_(AffineMinorant::bottom(n)) {}

  static void validate_cut(const Cut& c, Eigen::Index n) {
    if (n == 0) throw InvalidInput("cut has dimension 0");
    detail::require_dim(c.point, n, "cut point");
    detail::require_dim(c.subgrad, n, "cut subgradient");
    if (!c.point.allFinite() || !c.subgrad.allFinite() || !std::isfinite(c.value)) {
      throw InvalidInput("cut " + std::to_string(c.id) + " has non-finite entries");
    }
    if (c.id == 0) throw InvalidInput("cut ids must be positive");
  }

  friend CuttingPlaneModel add_cut(const CuttingPlaneModel&, Cut);
  friend CuttingPlaneModel prune(const CuttingPlaneModel&, std::span<const double>, std::size_t,
                                 const PrunePolicy&, double);
  friend CuttingPlaneModel aggregate_update(const CuttingPlaneModel&, const ProxSolution&);

  Variant variant_;
  Eigen::Index dim_;
  AffineMinorant aggregate_;
  std::vector<std::shared_ptr<const Cut>> cuts_;
};

/// Pointwise max over the pieces, with the id of a maximizing piece.
inline ModelValue evaluate(const CuttingPlaneModel& model, const Vector& x) {
  detail::require_dim(x, model.dim(), "evaluate");
  ModelValue best{-std::numeric_limits<double>::infinity(), model.piece_id(0)};
  for (std::size_t i = 0; i < model.piece_count(); ++i) {
    const double v = model.piece_value(i, x);
    if (v > best.value) best = {v, model.piece_id(i)};
  }
  return best;
}

/// Adds the cut generated at the current iteration. MultiCut appends it to the
/// bundle; Aggregate replaces the newest cut and keeps the aggregate.
inline CuttingPlaneModel add_cut(const CuttingPlaneModel& model, Cut cut) {
  CuttingPlaneModel::validate_cut(cut, model.dim());
  for (const auto& c : model.cuts_) {
    if (c->id >= cut.id) {
      throw InvalidInput("cut id " + std::to_string(cut.id) + " is not greater than existing id " +
                         std::to_string(c->id));
    }
  }
  CuttingPlaneModel next = model;
  auto ptr = std::make_shared<const Cut>(std::move(cut));
  if (model.variant() == Variant::MultiCut) {
    next.cuts_.push_back(std::move(ptr));
  } else {
    next.cuts_.back() = std::move(ptr);
  }
  return next;
}

/// Selects the retained bundle. The newest cut and every cut whose multiplier
/// exceeds `activity_tol` are always kept; the policy decides about the rest.
/// `multipliers` are indexed like the model's cuts.
inline CuttingPlaneModel prune(const CuttingPlaneModel& model, std::span<const double> multipliers,
                               std::size_t newest_id, const PrunePolicy& policy,
                               double activity_tol) {
  if (model.variant() != Variant::MultiCut) throw InvalidInput("prune requires a multi-cut model");
  const std::size_t m = model.cut_count();
  if (multipliers.size() != m) {
    throw InvalidInput("prune: " + std::to_string(multipliers.size()) + " multipliers for " +
                       std::to_string(m) + " cuts");
  }
  const double sum = std::accumulate(multipliers.begin(), multipliers.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-8) throw InvalidInput("prune: multipliers do not sum to 1");

  std::vector<bool> keep(m, false);
  bool newest_found = false;
  std::size_t mandatory = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const bool is_newest = model.cuts_[i]->id == newest_id;
    newest_found = newest_found || is_newest;
    if (is_newest || multipliers[i] > activity_tol) {
      keep[i] = true;
      ++mandatory;
    }
  }
  if (!newest_found) throw InvalidInput("prune: newest id " + std::to_string(newest_id) + " not in bundle");

  switch (policy.kind) {
    case PrunePolicy::Kind::KeepAll:
      return model;
    case PrunePolicy::Kind::KeepActive:
      break;
    case PrunePolicy::Kind::MaxSize: {
      if (mandatory > policy.max_size) {
        throw PolicyInfeasible("prune: " + std::to_string(mandatory) +
                               " mandatory cuts exceed bundle cap " + std::to_string(policy.max_size));
      }
      std::vector<std::size_t> optional;
      for (std::size_t i = 0; i < m; ++i) {
        if (!keep[i]) optional.push_back(i);
      }
      // Highest multiplier first, most recent first among ties.
      std::stable_sort(optional.begin(), optional.end(), [&](std::size_t a, std::size_t b) {
        if (multipliers[a] != multipliers[b]) return multipliers[a] > multipliers[b];
        return a > b;
      });
      const std::size_t room = policy.max_size - mandatory;
      for (std::size_t j = 0; j < std::min(room, optional.size()); ++j) keep[optional[j]] = true;
      break;
    }
  }

  CuttingPlaneModel next(Variant::MultiCut, model.dim());
  for (std::size_t i = 0; i < m; ++i) {
    if (keep[i]) next.cuts_.push_back(model.cuts_[i]);
  }
  return next;
}

/// Replaces the aggregate by theta * aggregate + (1 - theta) * newest, with
/// theta the multiplier the master problem put on the aggregate piece, so that
/// the new aggregate has slope s and passes through (z_next, model_val).
inline CuttingPlaneModel aggregate_update(const CuttingPlaneModel& model, const ProxSolution& sol) {
  if (model.variant() != Variant::Aggregate) {
    throw InvalidInput("aggregate_update requires an aggregate model");
  }
  if (sol.multipliers.size() != model.piece_count()) {
    throw InvalidInput("aggregate_update: solution has " + std::to_string(sol.multipliers.size()) +
                       " multipliers, model has " + std::to_string(model.piece_count()) + " pieces");
  }
  detail::require_dim(sol.z_next, model.dim(), "aggregate_update z_next");
  detail::require_dim(sol.s, model.dim(), "aggregate_update s");

  const Cut& newest = model.newest();
  double theta = 0.0;
  if (model.has_aggregate()) {
    const double total = sol.multipliers[0] + sol.multipliers[1];
    theta = total > 0.0 ? std::clamp(sol.multipliers[0] / total, 0.0, 1.0) : 0.0;
  }
  AffineMinorant next_agg;
  next_agg.is_bottom = false;
  const double newest_intercept = newest.value - newest.subgrad.dot(newest.point);
  if (model.has_aggregate()) {
    const AffineMinorant& agg = model.aggregate_piece();
    next_agg.slope = theta * agg.slope + (1.0 - theta) * newest.subgrad;
    next_agg.intercept = theta * agg.intercept + (1.0 - theta) * newest_intercept;
  } else {
    next_agg.slope = newest.subgrad;
    next_agg.intercept = newest_intercept;
  }

  constexpr double kTol = 1e-7;
  const double at_z = next_agg(sol.z_next);
  const double scale = 1.0 + std::abs(sol.model_val) + sol.s.lpNorm<Eigen::Infinity>() *
                                                           (1.0 + sol.z_next.lpNorm<Eigen::Infinity>());
  if (std::abs(at_z - sol.model_val) > kTol * scale ||
      (next_agg.slope - sol.s).lpNorm<Eigen::Infinity>() > kTol * (1.0 + sol.s.lpNorm<Eigen::Infinity>())) {
    throw InvalidInput("aggregate_update: solution does not match the model");
  }

  CuttingPlaneModel next = model;
  next.aggregate_ = std::move(next_agg);
  return next;
}

}  // namespace proxbundle
