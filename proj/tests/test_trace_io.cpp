#include <gtest/gtest.h>

#include "proxbundle/problems.hpp"
#include "proxbundle/trace_io.hpp"

using namespace proxbundle;

namespace {

Trace sample_trace() {
  BuiltinParams bp;
  bp.dim = 2;
  const auto p = builtin("maxquad", bp);
  SolverConfig cfg;
  cfg.variant = Variant::MultiCut;
  cfg.eps = 1e-5;
  return run(p, p.default_x1, cfg).trace;
}

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

TEST(TraceCsv, RoundTripIsExact) {
  const Trace t = sample_trace();
  Trace back = read_trace_csv(write_trace_csv(t));
  ASSERT_EQ(back.records.size(), t.records.size());
  EXPECT_EQ(back.problem_name, "maxquad");
  EXPECT_EQ(back.dim, 2);
  EXPECT_EQ(back.status, t.status);
  EXPECT_EQ(back.config.variant, Variant::MultiCut);
  EXPECT_EQ(back.config.eps, 1e-5);
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    const auto& a = t.records[i];
    const auto& b = back.records[i];
    EXPECT_EQ(a.k, b.k);
    EXPECT_EQ(a.step_kind, b.step_kind);
    EXPECT_TRUE(same_double(a.f_center, b.f_center));
    EXPECT_TRUE(same_double(a.f_znext, b.f_znext));
    EXPECT_TRUE(same_double(a.model_val, b.model_val));
    EXPECT_TRUE(same_double(a.v, b.v));
    EXPECT_TRUE(same_double(a.eta, b.eta));
    EXPECT_TRUE(same_double(a.dist_sq, b.dist_sq));
    EXPECT_TRUE(same_double(a.norm_s_minus_g, b.norm_s_minus_g));
  }

  attach_trace_vectors(back, write_trace_vectors(t));
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    EXPECT_EQ(*back.records[i].center, *t.records[i].center);
    EXPECT_EQ(back.records[i].z_next, t.records[i].z_next);
    EXPECT_EQ(back.records[i].s, t.records[i].s);
    EXPECT_EQ(back.records[i].g_next, t.records[i].g_next);
  }
}

TEST(TraceCsv, RejectsMalformedInput) {
  const std::string good = write_trace_csv(sample_trace());
  EXPECT_THROW(read_trace_csv(""), ParseError);
  EXPECT_THROW(read_trace_csv("not,a,trace\n"), ParseError);

  std::string bad_number = good;
  bad_number.replace(bad_number.rfind(",") + 1, 1, "x");
  EXPECT_THROW(read_trace_csv(bad_number), ParseError);

  std::string missing_meta = good.substr(good.find('\n') + 1);
  EXPECT_THROW(read_trace_csv(missing_meta), ParseError);

  std::string bad_kind = good;
  const auto pos = bad_kind.find(",descent,");
  ASSERT_NE(pos, std::string::npos);
  bad_kind.replace(pos, 9, ",sideways,");
  EXPECT_THROW(read_trace_csv(bad_kind), ParseError);
}

TEST(TraceCsv, RejectsOutOfOrderRecords) {
  std::string text = write_trace_csv(sample_trace());
  const auto pos = text.find("\n2,");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 3, "\n7,");
  EXPECT_THROW(read_trace_csv(text), ParseError);
}

TEST(TraceVectors, RejectsMismatchedSidecar) {
  const Trace t = sample_trace();
  Trace back = read_trace_csv(write_trace_csv(t));
  EXPECT_THROW(attach_trace_vectors(back, "{"), ParseError);
  EXPECT_THROW(attach_trace_vectors(back, R"({"records": []})"), ParseError);
}
