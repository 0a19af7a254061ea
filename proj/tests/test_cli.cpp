#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "cli.hpp"

using namespace proxbundle;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "proxbundle");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("proxbundle_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SolveHappyPath) {
  const auto r = invoke({"solve", "--problem", "l1quad", "--eps", "1e-6", "--trace", path("t.csv")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("config: problem=l1quad"), std::string::npos);
  EXPECT_NE(r.out.find("status=Converged"), std::string::npos);
  EXPECT_NE(r.out.find("gap="), std::string::npos);
  EXPECT_TRUE(fs::exists(path("t.csv")));
}

TEST_F(CliTest, SolveRejectsBadArguments) {
  EXPECT_EQ(invoke({"solve", "--problem", "nosuch"}).code, 2);
  EXPECT_EQ(invoke({"solve", "--problem", "l1quad", "--eps", "0"}).code, 2);
  EXPECT_EQ(invoke({"solve", "--problem", "l1quad", "--beta", "1.5"}).code, 2);
  EXPECT_EQ(invoke({"solve", "--problem", "l1quad", "--variant", "other"}).code, 2);
  EXPECT_EQ(invoke({"solve", "--problem", "l1quad", "--x1", "1,2"}).code, 2);
  EXPECT_EQ(invoke({"solve"}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({}).code, 2);
  const auto r = invoke({"solve", "--problem", "nosuch"});
  EXPECT_NE(r.err.find("l1quad"), std::string::npos);
}

TEST_F(CliTest, SolveFromProblemFile) {
  std::ofstream(path("abs.json")) << R"({"name": "abs", "dim": 1,
      "pieces": [{"A": "zero", "b": [1], "c": 0}, {"A": "zero", "b": [-1], "c": 0}], "default_x1": [2]})";
  const auto r = invoke({"solve", "--problem-file", path("abs.json"), "--variant", "multicut"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("status=Converged"), std::string::npos);
}

TEST_F(CliTest, VerifyFreshTracePasses) {
  ASSERT_EQ(invoke({"solve", "--problem", "maxquad", "--dim", "2", "--trace", path("t.csv"), "--vectors",
                    path("v.json")})
                .code,
            0);
  const auto r = invoke({"verify", "--problem", "maxquad", "--dim", "2", "--trace", path("t.csv"), "--vectors",
                         path("v.json"), "--report", path("r.json")});
  // The literal Moreau-Yosida bound does not hold on this problem; every other check passes.
  EXPECT_EQ(r.code, 1) << r.out << r.err;
  const auto report = nlohmann::json::parse(cli::read_file(path("r.json")));
  for (const auto& e : report["checks"]) {
    if (e["name"] == "moreau_bound") continue;
    EXPECT_TRUE(e["ok"].get<bool>()) << e.dump();
  }

  ASSERT_EQ(invoke({"solve", "--problem", "l1quad", "--trace", path("l.csv"), "--vectors", path("lv.json")}).code, 0);
  const auto ok = invoke({"verify", "--problem", "l1quad", "--trace", path("l.csv"), "--vectors", path("lv.json")});
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("all checks passed"), std::string::npos);
}

TEST_F(CliTest, VerifyFlagsPlantedViolation) {
  ASSERT_EQ(invoke({"solve", "--problem", "l1quad", "--eps", "1e-8", "--trace", path("t.csv")}).code, 0);
  Trace t = read_trace_csv(cli::read_file(path("t.csv")));
  std::size_t idx = 0;
  while (idx + 1 < t.records.size() && t.records[idx].step_kind != StepKind::Null) ++idx;
  ASSERT_LT(idx + 1, t.records.size());
  t.records[idx + 1].eta -= 1.0;
  cli::write_file(path("bad.csv"), write_trace_csv(t));
  const auto r = invoke({"verify", "--problem", "l1quad", "--trace", path("bad.csv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("some checks FAILED"), std::string::npos);
}

TEST_F(CliTest, VerifyRejectsMismatchAndMalformed) {
  ASSERT_EQ(invoke({"solve", "--problem", "l1quad", "--trace", path("t.csv")}).code, 0);
  EXPECT_EQ(invoke({"verify", "--problem", "maxq", "--trace", path("t.csv")}).code, 2);
  EXPECT_EQ(invoke({"verify", "--problem", "l1quad", "--dim", "3", "--trace", path("t.csv")}).code, 2);
  cli::write_file(path("junk.csv"), "garbage\n");
  EXPECT_EQ(invoke({"verify", "--problem", "l1quad", "--trace", path("junk.csv")}).code, 2);
  EXPECT_EQ(invoke({"verify", "--problem", "l1quad", "--trace", path("missing.csv")}).code, 2);
}

TEST_F(CliTest, SweepTable) {
  const auto r = invoke({"sweep", "--problem", "l1quad", "--eps-list", "1e-2,1e-3,1e-4", "--output", path("s.csv")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("eps,L,sum_n,total,L_bound,total_bound,gamma,M_hat,status"), std::string::npos);
  EXPECT_NE(r.out.find("# fit_constant="), std::string::npos);
  EXPECT_TRUE(fs::exists(path("s.csv")));
}

TEST_F(CliTest, SweepRejectsShortOrUnsortedLists) {
  EXPECT_EQ(invoke({"sweep", "--problem", "l1quad", "--eps-list", "1e-2,1e-3"}).code, 2);
  EXPECT_EQ(invoke({"sweep", "--problem", "l1quad", "--eps-list", "1e-2,1e-3,1e-2"}).code, 2);
}

TEST_F(CliTest, ListProblems) {
  const auto r = invoke({"list-problems"});
  EXPECT_EQ(r.code, 0);
  for (const auto& n : builtin_names()) EXPECT_NE(r.out.find(n), std::string::npos);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = invoke({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("solve"), std::string::npos);
}
