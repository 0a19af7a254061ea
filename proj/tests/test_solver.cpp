#include <gtest/gtest.h>

#include "proxbundle/problems.hpp"
#include "proxbundle/solver.hpp"

using namespace proxbundle;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

ProblemSpec half_square_shifted() {
  ProblemSpec p;
  p.name = "half-square";
  p.dim = 1;
  p.oracle = [](const Vector& x) { return OracleValue{0.5 * (x(0) - 1) * (x(0) - 1), v1(x(0) - 1)}; };
  p.default_x1 = v1(0);
  p.box = Box{v1(-3), v1(3)};
  return p;
}

ProblemSpec abs_problem() {
  ProblemSpec p;
  p.name = "abs";
  p.dim = 1;
  p.oracle = [](const Vector& x) { return OracleValue{std::abs(x(0)), v1(x(0) > 0 ? 1.0 : (x(0) < 0 ? -1.0 : 0.0))}; };
  p.default_x1 = v1(0);
  p.box = Box{v1(-3), v1(3)};
  return p;
}

}  // namespace

TEST(DescentTest, Cases) {
  EXPECT_EQ(descent_test(8.5, 10, 8, 0.5), StepKind::Descent);
  EXPECT_EQ(descent_test(9.5, 10, 8, 0.5), StepKind::Null);
  EXPECT_EQ(descent_test(9.0, 10, 8, 0.5), StepKind::Descent);
}

TEST(StoppingTest, Cases) {
  EXPECT_TRUE(stopping_test(1e-3, 1e-2));
  EXPECT_TRUE(stopping_test(1e-2, 1e-2));
  EXPECT_FALSE(stopping_test(2e-2, 1e-2));
}

TEST(Config, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.eps = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = SolverConfig{};
  c.beta = 1.0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = SolverConfig{};
  c.rho = -1;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = SolverConfig{};
  c.max_iter = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(Iterate, FirstTrialPointIsGradientStep) {
  const auto p = half_square_shifted();
  SolverConfig cfg;
  const auto st = SolverState::initial(p, p.default_x1, cfg);
  const auto [next, rec] = iterate(st, p, cfg);
  // Cut at 0: 0.5 - x. z = 0 - (-1) = 1.
  EXPECT_EQ(rec.k, 1);
  EXPECT_DOUBLE_EQ(rec.z_next(0), 1.0);
  EXPECT_DOUBLE_EQ(rec.model_val, -0.5);
  EXPECT_DOUBLE_EQ(rec.eta, 0.0);
  EXPECT_DOUBLE_EQ(rec.v, 1.0);
  EXPECT_DOUBLE_EQ(rec.f_znext, 0.0);
  EXPECT_EQ(rec.step_kind, StepKind::Descent);
  EXPECT_DOUBLE_EQ((*next.center)(0), 1.0);
  EXPECT_EQ(next.k, 2);
  // Input state untouched.
  EXPECT_DOUBLE_EQ((*st.center)(0), 0.0);
  EXPECT_EQ(st.k, 1);
}

TEST(Iterate, StopRecordLeavesCenter) {
  const auto p = abs_problem();
  SolverConfig cfg;
  cfg.eps = 10.0;
  auto st = SolverState::initial(p, v1(0.5), cfg);
  const auto [next, rec] = iterate(st, p, cfg);
  EXPECT_EQ(rec.step_kind, StepKind::Stop);
  EXPECT_TRUE(std::isnan(rec.f_znext));
  EXPECT_TRUE(next.stopped);
  EXPECT_DOUBLE_EQ((*next.center)(0), 0.5);
  EXPECT_THROW(iterate(next, p, cfg), InvalidInput);
}

TEST(Iterate, VariantsAgreeAtFirstStep) {
  BuiltinParams bp;
  bp.dim = 5;
  const auto p = builtin("maxquad", bp);
  SolverConfig a;
  a.variant = Variant::Aggregate;
  SolverConfig m = a;
  m.variant = Variant::MultiCut;
  const auto ra = iterate(SolverState::initial(p, p.default_x1, a), p, a).second;
  const auto rm = iterate(SolverState::initial(p, p.default_x1, m), p, m).second;
  EXPECT_EQ(ra.z_next, rm.z_next);
  EXPECT_EQ(ra.eta, rm.eta);
}

TEST(Run, L1quadConverges) {
  BuiltinParams bp;
  bp.c = v1(1.0);
  const auto p = builtin("l1quad", bp);
  for (auto variant : {Variant::Aggregate, Variant::MultiCut}) {
    SolverConfig cfg;
    cfg.variant = variant;
    cfg.eps = 1e-6;
    const auto r = run(p, p.default_x1, cfg);
    EXPECT_EQ(r.trace.status, RunStatus::Converged);
    EXPECT_LE(r.f_center - 0.375, 2e-6);
    EXPECT_EQ(r.trace.records.back().step_kind, StepKind::Stop);
  }
}

TEST(Run, HugeEpsStopsImmediately) {
  BuiltinParams bp;
  bp.dim = 10;
  const auto p = builtin("maxq", bp);
  SolverConfig cfg;
  cfg.eps = 1e6;
  const auto r = run(p, p.default_x1, cfg);
  EXPECT_EQ(r.trace.status, RunStatus::Converged);
  EXPECT_LE(r.trace.records.size(), 2u);
}

TEST(Run, MaxIterCap) {
  BuiltinParams bp;
  bp.dim = 10;
  const auto p = builtin("maxq", bp);
  SolverConfig cfg;
  cfg.eps = 1e-12;
  cfg.max_iter = 3;
  const auto r = run(p, p.default_x1, cfg);
  EXPECT_EQ(r.trace.status, RunStatus::MaxIter);
  EXPECT_EQ(r.trace.records.size(), 3u);
}

TEST(Run, QpFailureIsReported) {
  BuiltinParams bp;
  bp.dim = 10;
  const auto p = builtin("maxq", bp);
  SolverConfig cfg;
  cfg.variant = Variant::MultiCut;
  cfg.qp.max_inner_iter = 1;
  const auto r = run(p, p.default_x1, cfg);
  EXPECT_EQ(r.trace.status, RunStatus::QpFailure);
  EXPECT_FALSE(r.trace.message.empty());
}

TEST(Run, RecordsAreConsecutive) {
  BuiltinParams bp;
  bp.dim = 2;
  const auto p = builtin("maxquad", bp);
  SolverConfig cfg;
  cfg.variant = Variant::MultiCut;
  const auto r = run(p, p.default_x1, cfg);
  for (std::size_t i = 0; i < r.trace.records.size(); ++i) {
    EXPECT_EQ(r.trace.records[i].k, static_cast<int>(i) + 1);
    if (i + 1 < r.trace.records.size()) EXPECT_NE(r.trace.records[i].step_kind, StepKind::Stop);
  }
}

TEST(Run, CompactRecordsShareCenters) {
  BuiltinParams bp;
  bp.dim = 2;
  const auto p = builtin("maxquad", bp);
  SolverConfig cfg;
  cfg.record_vectors = false;
  const auto r = run(p, p.default_x1, cfg);
  ASSERT_GT(r.trace.records.size(), 2u);
  for (std::size_t i = 1; i < r.trace.records.size(); ++i) {
    const auto& prev = r.trace.records[i - 1];
    const auto& cur = r.trace.records[i];
    EXPECT_EQ(cur.z_next.size(), 0);
    if (prev.step_kind == StepKind::Null) EXPECT_EQ(prev.center.get(), cur.center.get());
  }
}

TEST(Run, ObserverSeesEveryState) {
  const auto p = builtin("l1quad");
  SolverConfig cfg;
  int calls = 0;
  int with_record = 0;
  const auto r = run(p, p.default_x1, cfg, [&](const SolverState&, const IterationRecord* rec) {
    ++calls;
    if (rec) ++with_record;
  });
  EXPECT_EQ(calls, static_cast<int>(r.trace.records.size()) + 1);
  EXPECT_EQ(with_record, static_cast<int>(r.trace.records.size()));
}

TEST(Run, OracleErrorAborts) {
  ProblemSpec p = abs_problem();
  p.oracle = [](const Vector& x) { return OracleValue{std::nan(""), x}; };
  SolverConfig cfg;
  EXPECT_THROW(run(p, p.default_x1, cfg), InvalidInput);
}
