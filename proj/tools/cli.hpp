#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "proxbundle/analysis.hpp"
#include "proxbundle/problems.hpp"
#include "proxbundle/solver.hpp"
#include "proxbundle/trace_io.hpp"

namespace proxbundle::cli {

inline constexpr int kOk = 0;
inline constexpr int kCheckFailure = 1;
inline constexpr int kUsage = 2;

struct ProblemArgs {
  std::string name;
  std::string file;
  long dim{0};
  std::uint64_t seed{1};
};

struct SolveArgs {
  std::string x1;
  double rho{1.0};
  double beta{0.5};
  double eps{1e-6};
  std::string variant{"aggregate"};
  int max_iter{100000};
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << text;
  if (!out) throw InvalidInput("write to '" + path + "' failed");
}

inline std::uint64_t default_seed() {
  if (const char* env = std::getenv("BUNDLE_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*env == '\0' || *end != '\0') throw InvalidInput("BUNDLE_SEED must be a nonnegative integer");
    return v;
  }
  return 1;
}

inline ProblemSpec resolve_problem(const ProblemArgs& a) {
  if (!a.file.empty()) {
    if (!a.name.empty()) throw InvalidInput("give either --problem or --problem-file, not both");
    return parse_problem_file(read_file(a.file));
  }
  if (a.name.empty()) throw InvalidInput("a problem is required (--problem or --problem-file)");
  BuiltinParams bp;
  if (a.dim < 0) throw InvalidInput("--dim must be positive");
  bp.dim = a.dim;
  bp.seed = a.seed;
  return builtin(a.name, bp);
}

inline Vector parse_vector(const std::string& text, Eigen::Index n) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidInput("bad number '" + item + "' in --x1");
    }
  }
  if (static_cast<Eigen::Index>(vals.size()) != n) {
    throw InvalidInput("--x1 has " + std::to_string(vals.size()) + " entries, problem dimension is " +
                       std::to_string(n));
  }
  return Eigen::Map<Vector>(vals.data(), n);
}

inline SolverConfig make_config(const SolveArgs& a) {
  SolverConfig cfg;
  cfg.rho = a.rho;
  cfg.beta = a.beta;
  cfg.eps = a.eps;
  cfg.variant = detail::parse_variant(a.variant);
  cfg.max_iter = a.max_iter;
  cfg.validate();
  return cfg;
}

inline void echo_config(std::ostream& out, const ProblemSpec& p, const SolverConfig& c, const Vector& x1) {
  out << "config: problem=" << p.name << " dim=" << p.dim << " variant=" << to_string(c.variant)
      << " rho=" << c.rho << " beta=" << c.beta << " eps=" << c.eps << " max_iter=" << c.max_iter << " x1=";
  for (Eigen::Index i = 0; i < x1.size(); ++i) out << (i ? "," : "") << x1(i);
  out << '\n';
}

inline void add_problem_flags(CLI::App* cmd, ProblemArgs& a) {
  cmd->add_option("--problem", a.name, "builtin problem name");
  cmd->add_option("--problem-file", a.file, "JSON problem file");
  cmd->add_option("--dim", a.dim, "problem dimension (builtin problems)");
  cmd->add_option("--seed", a.seed, "generator seed (default: BUNDLE_SEED or 1)");
}

inline void add_solver_flags(CLI::App* cmd, SolveArgs& a) {
  cmd->add_option("--rho", a.rho, "proximal coefficient")->capture_default_str();
  cmd->add_option("--beta", a.beta, "descent parameter in (0,1)")->capture_default_str();
  cmd->add_option("--eps", a.eps, "stopping precision")->capture_default_str();
  cmd->add_option("--variant", a.variant, "multicut or aggregate")->capture_default_str();
  cmd->add_option("--max-iter", a.max_iter, "iteration cap")->capture_default_str();
}

inline void print_report(std::ostream& out, const CheckReport& report) {
  out << std::left << std::setw(18) << "check" << std::setw(10) << "passed" << std::setw(10) << "checked"
      << std::setw(16) << "worst_margin" << "status\n";
  for (const auto& e : report.entries) {
    std::ostringstream margin;
    if (e.checked > 0) {
      margin << std::setprecision(4) << e.worst_margin;
    } else {
      margin << "-";
    }
    out << std::setw(18) << e.name << std::setw(10) << e.passed << std::setw(10) << e.checked << std::setw(16)
        << margin.str() << (e.skipped ? "skipped" : (e.ok() ? "ok" : "FAILED"));
    if (!e.note.empty()) out << " (" << e.note << ")";
    out << '\n';
  }
  out << std::right;
}

inline int cmd_solve(const ProblemArgs& pa, const SolveArgs& sa, const std::string& trace_path,
                     const std::string& vectors_path, std::ostream& out) {
  const ProblemSpec problem = resolve_problem(pa);
  SolverConfig cfg = make_config(sa);
  cfg.record_vectors = !vectors_path.empty();
  const Vector x1 = sa.x1.empty() ? problem.default_x1 : parse_vector(sa.x1, problem.dim);
  echo_config(out, problem, cfg, x1);
  const RunResult result = run(problem, x1, cfg);
  if (!trace_path.empty()) write_file(trace_path, write_trace_csv(result.trace));
  if (!vectors_path.empty()) write_file(vectors_path, write_trace_vectors(result.trace));

  const auto descents = std::count_if(result.trace.records.begin(), result.trace.records.end(),
                                      [](const IterationRecord& r) { return r.step_kind == StepKind::Descent; });
  out << std::setprecision(12) << "status=" << to_string(result.trace.status)
      << " iterations=" << result.trace.records.size() << " descent_steps=" << descents
      << " f=" << result.f_center;
  if (problem.reference) out << " gap=" << result.f_center - problem.reference->f_star;
  out << '\n';
  if (result.trace.status == RunStatus::QpFailure) {
    out << "master problem failed: " << result.trace.message << '\n';
    return kCheckFailure;
  }
  return kOk;
}

inline int cmd_verify(const ProblemArgs& pa, const std::string& trace_path, const std::string& vectors_path,
                      double slack, const std::string& report_path, std::ostream& out) {
  Trace trace;
  try {
    trace = read_trace_csv(read_file(trace_path));
    if (!vectors_path.empty()) attach_trace_vectors(trace, read_file(vectors_path));
  } catch (const ParseError& e) {
    throw InvalidInput(std::string("malformed trace: ") + e.what() + " at " + e.where());
  }
  const ProblemSpec problem = resolve_problem(pa);
  if (trace.problem_name != problem.name || trace.dim != problem.dim) {
    throw InvalidInput("trace was produced by problem '" + trace.problem_name + "' (dim " +
                       std::to_string(trace.dim) + "), not '" + problem.name + "' (dim " +
                       std::to_string(problem.dim) + ")");
  }
  const SolverConfig cfg = trace.config;
  cfg.validate();
  out << "config: problem=" << problem.name << " dim=" << problem.dim << " variant=" << to_string(cfg.variant)
      << " rho=" << cfg.rho << " beta=" << cfg.beta << " eps=" << cfg.eps << " records=" << trace.records.size()
      << " status=" << to_string(trace.status) << " slack=" << slack << '\n';
  CheckOptions opts;
  opts.slack = slack;
  const CheckReport report = check_trace(trace, problem, cfg, opts);
  print_report(out, report);
  if (!report_path.empty()) write_file(report_path, to_json(report).dump(2) + "\n");
  out << (report.all_passed() ? "all checks passed" : "some checks FAILED") << '\n';
  return report.all_passed() ? kOk : kCheckFailure;
}

struct SweepRow {
  double eps{};
  RunStatus status{};
  RateBounds bounds;
  bool ok{};
};

inline int cmd_sweep(const ProblemArgs& pa, const SolveArgs& sa, const std::vector<double>& eps_list,
                     const std::string& output_path, std::ostream& out) {
  if (eps_list.size() < 3) throw InvalidInput("--eps-list needs at least 3 values");
  for (std::size_t i = 1; i < eps_list.size(); ++i) {
    if (!(eps_list[i] < eps_list[i - 1])) throw InvalidInput("--eps-list must be strictly decreasing");
  }
  const ProblemSpec problem = resolve_problem(pa);
  if (!problem.reference) throw InvalidInput("sweep needs a problem with reference data");
  SolverConfig base = make_config(sa);
  base.record_vectors = false;
  echo_config(out, problem, base, problem.default_x1);

  std::vector<SweepRow> rows;
  std::vector<std::pair<double, double>> points;
  for (double eps : eps_list) {
    SolverConfig cfg = base;
    cfg.eps = eps;
    cfg.validate();
    const RunResult r = run(problem, problem.default_x1, cfg);
    SweepRow row;
    row.eps = eps;
    row.status = r.trace.status;
    row.ok = r.trace.status == RunStatus::Converged;
    if (!r.trace.records.empty()) {
      const auto& first = r.trace.records.front();
      row.bounds = theoretical_bounds(r.trace, problem, cfg, first.eta, first.f_center);
    }
    points.emplace_back(eps, static_cast<double>(row.bounds.total_observed));
    rows.push_back(std::move(row));
  }

  std::ostringstream table;
  table << "eps,L,sum_n,total,L_bound,total_bound,gamma,M_hat,status\n";
  for (const auto& row : rows) {
    const auto& b = row.bounds;
    table << std::setprecision(6) << row.eps << ',' << b.L_observed << ',' << b.null_observed << ','
          << b.total_observed << ',' << b.L_bound << ',' << b.total_bound << ',' << std::setprecision(12)
          << b.gamma << ',' << std::setprecision(6) << b.M_hat << ','
          << (row.ok ? to_string(row.status) : std::string("FAILED:") + to_string(row.status)) << '\n';
  }
  const RateFit fit = fit_rate(points);
  table << "# fit_constant=" << std::setprecision(6) << fit.fit_constant << " max_ratio=" << fit.max_ratio
        << "\n# ratios=";
  for (std::size_t i = 0; i < fit.ratios.size(); ++i) table << (i ? "," : "") << fit.ratios[i];
  table << '\n';
  out << table.str();
  if (!output_path.empty()) write_file(output_path, table.str());
  const bool all_ok = std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.ok; });
  return all_ok ? kOk : kCheckFailure;
}

inline int cmd_list(std::ostream& out) {
  for (const auto& name : builtin_names()) {
    const ProblemSpec p = builtin(name);
    out << std::left << std::setw(16) << name << "default dim " << p.dim;
    if (p.reference) out << ", f* = " << std::setprecision(10) << p.reference->f_star << ", alpha = " << p.reference->alpha;
    out << '\n';
  }
  out << std::right;
  return kOk;
}

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Proximal bundle method solver and verifier"};
  app.require_subcommand(1);

  ProblemArgs pa;
  SolveArgs sa;
  std::string trace_path;
  std::string vectors_path;
  std::string report_path;
  std::string output_path;
  double slack = 1e-8;
  std::vector<double> eps_list;

  try {
    pa.seed = default_seed();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  auto* solve = app.add_subcommand("solve", "run the method on one problem");
  add_problem_flags(solve, pa);
  add_solver_flags(solve, sa);
  solve->add_option("--x1", sa.x1, "starting point, comma separated");
  solve->add_option("--trace", trace_path, "CSV trace output");
  solve->add_option("--vectors", vectors_path, "JSON sidecar with per-iteration vectors");

  auto* verify = app.add_subcommand("verify", "check a trace against the convergence inequalities");
  add_problem_flags(verify, pa);
  verify->add_option("--trace", trace_path, "CSV trace")->required();
  verify->add_option("--vectors", vectors_path, "JSON sidecar written by solve");
  verify->add_option("--slack", slack, "relative slack")->capture_default_str();
  verify->add_option("--report", report_path, "JSON report output");

  auto* sweep = app.add_subcommand("sweep", "iteration counts over a decreasing eps list");
  add_problem_flags(sweep, pa);
  add_solver_flags(sweep, sa);
  sweep->add_option("--eps-list", eps_list, "comma separated eps values")->delimiter(',')->required();
  sweep->add_option("--output", output_path, "CSV table output");

  auto* list = app.add_subcommand("list-problems", "list builtin problems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (solve->parsed()) return cmd_solve(pa, sa, trace_path, vectors_path, out);
    if (verify->parsed()) return cmd_verify(pa, trace_path, vectors_path, slack, report_path, out);
    if (sweep->parsed()) return cmd_sweep(pa, sa, eps_list, output_path, out);
    if (list->parsed()) return cmd_list(out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace proxbundle::cli
