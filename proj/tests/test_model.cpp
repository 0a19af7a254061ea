#include <gtest/gtest.h>

#include "proxbundle/model.hpp"
#include "proxbundle/proxqp.hpp"

using namespace proxbundle;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

Cut cut1(double z, double f, double g, std::size_t id) { return Cut{v1(z), f, v1(g), id}; }

// |x| linearized at -1 and +1.
CuttingPlaneModel abs_model() {
  return add_cut(CuttingPlaneModel::multi_cut(cut1(1, 1, 1, 1)), cut1(-1, 1, -1, 2));
}

}  // namespace

TEST(Evaluate, SingleCut) {
  const auto m = CuttingPlaneModel::multi_cut(cut1(0, 0, 1, 1));
  const auto r = evaluate(m, v1(2));
  EXPECT_DOUBLE_EQ(r.value, 2.0);
  EXPECT_EQ(r.piece, 1u);
}

TEST(Evaluate, AbsPiecesPickNegativeSlope) {
  const auto r = evaluate(abs_model(), v1(-0.5));
  EXPECT_DOUBLE_EQ(r.value, 0.5);
  EXPECT_EQ(r.piece, 2u);
}

TEST(Evaluate, BottomAggregateIgnored) {
  const auto m = CuttingPlaneModel::aggregate(AffineMinorant::bottom(1), cut1(0, 0, 1, 1));
  EXPECT_DOUBLE_EQ(evaluate(m, v1(3)).value, 3.0);
  EXPECT_FALSE(m.has_aggregate());
  EXPECT_EQ(m.piece_count(), 1u);
}

TEST(Evaluate, TieGoesToLowestId) {
  const auto r = evaluate(abs_model(), v1(0));
  EXPECT_DOUBLE_EQ(r.value, 0.0);
  EXPECT_EQ(r.piece, 1u);
}

TEST(Evaluate, DimensionMismatchThrows) {
  EXPECT_THROW(evaluate(abs_model(), Vector::Zero(2)), InvalidInput);
}

TEST(AddCut, NewCutExactAtItsPoint) {
  const auto m = add_cut(CuttingPlaneModel::multi_cut(cut1(0, 0, 0, 1)), cut1(1, 1, 1, 2));
  EXPECT_EQ(m.cut_count(), 2u);
  EXPECT_DOUBLE_EQ(evaluate(m, v1(1)).value, 1.0);
}

TEST(AddCut, AggregateReplacesNewestOnly) {
  const AffineMinorant agg{v1(0.3), 0.0, false};
  const auto m = CuttingPlaneModel::aggregate(agg, cut1(0, 0, 1, 1));
  const auto m2 = add_cut(m, cut1(-1, 1, -1, 2));
  EXPECT_EQ(m2.cut_count(), 1u);
  EXPECT_EQ(m2.newest().id, 2u);
  EXPECT_DOUBLE_EQ(m2.aggregate_piece().slope(0), 0.3);
  EXPECT_DOUBLE_EQ(m2.aggregate_piece().intercept, 0.0);
}

TEST(AddCut, MultiCutKeepsAllPieces) {
  auto m = abs_model();
  m = add_cut(m, cut1(0, 0.5, 0, 3));
  EXPECT_EQ(m.cut_ids(), (std::vector<std::size_t>{1, 2, 3}));
  // max(x, -x, 0.5) at 0.2
  EXPECT_DOUBLE_EQ(evaluate(m, v1(0.2)).value, 0.5);
  EXPECT_EQ(evaluate(m, v1(0.2)).piece, 3u);
}

TEST(AddCut, RejectsNonIncreasingId) {
  EXPECT_THROW(add_cut(abs_model(), cut1(0, 0, 0, 2)), InvalidInput);
  EXPECT_THROW(add_cut(abs_model(), cut1(0, 0, 0, 1)), InvalidInput);
}

TEST(AddCut, RejectsDimensionMismatch) {
  EXPECT_THROW(add_cut(abs_model(), Cut{Vector::Zero(2), 0.0, Vector::Zero(2), 5}), InvalidInput);
}

TEST(Prune, KeepActiveBothActive) {
  const std::vector<double> w{0.5, 0.5};
  const auto m = prune(abs_model(), w, 2, PrunePolicy::keep_active(), 1e-10);
  EXPECT_EQ(m.cut_ids(), (std::vector<std::size_t>{1, 2}));
}

TEST(Prune, NewestAlwaysKept) {
  const std::vector<double> w{1.0, 0.0};
  const auto m = prune(abs_model(), w, 2, PrunePolicy::keep_active(), 1e-10);
  EXPECT_EQ(m.cut_ids(), (std::vector<std::size_t>{1, 2}));
}

TEST(Prune, MaxSizeFillsByMultiplier) {
  auto m = CuttingPlaneModel::multi_cut(cut1(0, 0, 1, 1));
  for (std::size_t id = 2; id <= 5; ++id) m = add_cut(m, cut1(static_cast<double>(id), 0, 1, id));
  const std::vector<double> w{0.6, 0.4, 0, 0, 0};
  EXPECT_EQ(prune(m, w, 5, PrunePolicy::bounded(3), 1e-10).cut_ids(), (std::vector<std::size_t>{1, 2, 5}));
  EXPECT_EQ(prune(m, w, 5, PrunePolicy::bounded(4), 1e-10).cut_ids().size(), 4u);
  EXPECT_THROW(prune(m, w, 5, PrunePolicy::bounded(2), 1e-10), PolicyInfeasible);
}

TEST(Prune, KeepAllKeepsEverything) {
  const std::vector<double> w{1.0, 0.0};
  EXPECT_EQ(prune(abs_model(), w, 2, PrunePolicy::keep_all(), 1e-10).cut_count(), 2u);
}

TEST(Prune, RejectsBadMultipliers) {
  const std::vector<double> short_w{1.0};
  EXPECT_THROW(prune(abs_model(), short_w, 2, PrunePolicy::keep_active(), 1e-10), InvalidInput);
  const std::vector<double> not_simplex{0.6, 0.6};
  EXPECT_THROW(prune(abs_model(), not_simplex, 2, PrunePolicy::keep_active(), 1e-10), InvalidInput);
}

TEST(AggregateUpdate, FromBottomThetaZero) {
  const auto m = CuttingPlaneModel::aggregate(AffineMinorant::bottom(1), cut1(0, 0, 1, 1));
  const auto sol = solve_prox(m, v1(0), 1.0);
  EXPECT_NEAR(sol.z_next(0), -1.0, 1e-14);
  EXPECT_NEAR(sol.model_val, -1.0, 1e-14);
  const auto m2 = aggregate_update(m, sol);
  ASSERT_TRUE(m2.has_aggregate());
  EXPECT_NEAR(m2.aggregate_piece().slope(0), 1.0, 1e-14);
  EXPECT_NEAR(m2.aggregate_piece()(v1(-1)), -1.0, 1e-14);
}

TEST(AggregateUpdate, KinkCombination) {
  const AffineMinorant agg{v1(1.0), 0.0, false};
  const auto m = CuttingPlaneModel::aggregate(agg, cut1(0, 0, -1, 1));
  const auto sol = solve_prox(m, v1(0.3), 1.0);
  EXPECT_NEAR(sol.z_next(0), 0.0, 1e-12);
  EXPECT_NEAR(sol.model_val, 0.0, 1e-12);
  EXPECT_NEAR(sol.multipliers[0], 0.65, 1e-12);
  const auto m2 = aggregate_update(m, sol);
  EXPECT_NEAR(m2.aggregate_piece().slope(0), 0.3, 1e-12);
  EXPECT_NEAR(m2.aggregate_piece().intercept, 0.0, 1e-12);
}

TEST(AggregateUpdate, IdenticalPieces) {
  const AffineMinorant agg{v1(1.0), 0.0, false};
  const auto m = CuttingPlaneModel::aggregate(agg, cut1(0, 0, 1, 1));
  const auto sol = solve_prox(m, v1(0), 1.0);
  const auto m2 = aggregate_update(m, sol);
  EXPECT_NEAR(m2.aggregate_piece().slope(0), 1.0, 1e-14);
  EXPECT_NEAR(m2.aggregate_piece().intercept, 0.0, 1e-14);
}

TEST(AggregateUpdate, MismatchedSolutionThrows) {
  const auto m = CuttingPlaneModel::aggregate(AffineMinorant::bottom(1), cut1(0, 0, 1, 1));
  auto sol = solve_prox(m, v1(0), 1.0);
  sol.model_val += 0.5;
  EXPECT_THROW(aggregate_update(m, sol), InvalidInput);
  EXPECT_THROW(aggregate_update(abs_model(), solve_prox(abs_model(), v1(0), 1.0)), InvalidInput);
}
