#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxbundle/error.hpp"
#include "proxbundle/model.hpp"
#include "proxbundle/problems.hpp"
#include "proxbundle/proxqp.hpp"
#include "proxbundle/solver.hpp"

namespace proxbundle {

/// min{1, (1-beta) rho v / ||s - g||^2}, with 1 when s = g.
inline double mu_bar(double v, double norm_s_minus_g_sq, double rho, double beta) {
  if (!(norm_s_minus_g_sq > 0.0)) return 1.0;
  return std::min(1.0, (1.0 - beta) * rho * v / norm_s_minus_g_sq);
}

inline double mu_bar(double v, const Vector& s, const Vector& g, double rho, double beta) {
  if (s.size() != g.size()) throw InvalidInput("mu_bar: s and g differ in dimension");
  return mu_bar(v, (s - g).squaredNorm(), rho, beta);
}

inline double phi(double t) {
  if (!(t >= 0.0)) throw InvalidInput("phi: argument must be nonnegative");
  return t <= 1.0 ? t * t : 2.0 * t - 1.0;
}

/// Maximal run of records sharing one proximal center.
struct SeriesSegment {
  int ell{};
  Vector center;     ///< empty when the trace carries no vectors
  double f_center{};
  int first_k{};
  int last_k{};
  int n_null{};
  StepKind ends_with{StepKind::Null};
};

/// A new series begins after every descent record.
inline std::vector<SeriesSegment> segment_trace(const Trace& trace) {
  std::vector<SeriesSegment> out;
  bool open = false;
  for (const auto& r : trace.records) {
    if (!open) {
      SeriesSegment seg;
      seg.ell = static_cast<int>(out.size()) + 1;
      if (r.center) seg.center = *r.center;
      seg.f_center = r.f_center;
      seg.first_k = r.k;
      out.push_back(std::move(seg));
      open = true;
    }
    auto& seg = out.back();
    seg.last_k = r.k;
    seg.ends_with = r.step_kind;
    if (r.step_kind == StepKind::Null) ++seg.n_null;
    if (r.step_kind == StepKind::Descent) open = false;
  }
  return out;
}

struct MEstimate {
  double value{};
  std::string note;  ///< "no null steps" when the max is empty
};

/// max over null records of ||s - g||^2 / rho.
inline MEstimate estimate_M(const Trace& trace, double rho) {
  if (!(rho > 0.0)) throw InvalidInput("estimate_M: rho must be positive");
  MEstimate m;
  bool any = false;
  for (const auto& r : trace.records) {
    if (r.step_kind != StepKind::Null) continue;
    any = true;
    m.value = std::max(m.value, r.norm_s_minus_g * r.norm_s_minus_g / rho);
  }
  if (!any) m.note = "no null steps";
  return m;
}

struct CheckEntry {
  std::string name;
  std::string label;
  long checked{};
  long passed{};
  double worst_margin{std::numeric_limits<double>::infinity()};
  double tolerance{};
  bool skipped{false};
  std::string note;
  long first_failure_k{-1};

  bool ok() const { return skipped || passed == checked; }

  /// Records one inequality greater >= lesser, scaled by 1 + |scale|.
  void add(double greater, double lesser, double scale, int k) {
    const double margin = (greater - lesser) / (1.0 + std::abs(scale));
    ++checked;
    const bool pass = margin >= -tolerance;
    if (pass) ++passed;
    if (!pass && first_failure_k < 0) first_failure_k = k;
    if (std::isnan(margin)) {
      worst_margin = std::numeric_limits<double>::quiet_NaN();
    } else if (!std::isnan(worst_margin)) {
      worst_margin = std::min(worst_margin, margin);
    }
  }
};

struct CheckReport {
  std::vector<CheckEntry> entries;

  bool all_passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const CheckEntry& e) { return e.ok(); });
  }
  const CheckEntry& at(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.name == name) return e;
    }
    throw InvalidInput("no check named '" + name + "'");
  }
  std::vector<std::string> failed() const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
      if (!e.ok()) out.push_back(e.name);
    }
    return out;
  }
};

inline nlohmann::json to_json(const CheckReport& report) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : report.entries) {
    nlohmann::json j{{"name", e.name},       {"label", e.label},     {"checked", e.checked},
                     {"passed", e.passed},   {"tolerance", e.tolerance}, {"skipped", e.skipped},
                     {"ok", e.ok()}};
    if (e.checked > 0 && std::isfinite(e.worst_margin)) {
      j["worst_margin"] = e.worst_margin;
    } else {
      j["worst_margin"] = nullptr;
    }
    if (e.first_failure_k >= 0) j["first_failure_k"] = e.first_failure_k;
    if (!e.note.empty()) j["note"] = e.note;
    arr.push_back(std::move(j));
  }
  return nlohmann::json{{"all_passed", report.all_passed()}, {"checks", arr}};
}

struct MoreauValue {
  double lower{};
  double upper{};
  Vector argmin;
  int iterations{};
};

/// Brackets F_rho(y) = min_x F(x) + rho/2 ||x - y||^2 by cutting planes with
/// the center fixed at y. The lower bound is the master value, the upper bound
/// the best true objective seen.
inline MoreauValue moreau_bounds(const ProblemSpec& problem, const Vector& y, double rho, double accuracy,
                                 int max_iter = 20000) {
  if (!(rho > 0.0)) throw InvalidInput("moreau_ref: rho must be positive");
  if (!(accuracy > 0.0)) throw InvalidInput("moreau_ref: accuracy must be positive");
  detail::require_dim(y, problem.dim, "moreau_ref point");
  const OracleValue first = eval_oracle(problem, y);
  CuttingPlaneModel model = CuttingPlaneModel::multi_cut(Cut{y, first.f, first.g, 1});
  MoreauValue out;
  out.upper = first.f;
  out.argmin = y;
  out.lower = -std::numeric_limits<double>::infinity();
  std::vector<double> warm;
  for (int it = 1; it <= max_iter; ++it) {
    const ProxSolution sol = solve_prox(model, y, rho, QpSettings{}, warm);
    out.lower = std::max(out.lower, sol.eta);
    const OracleValue ov = eval_oracle(problem, sol.z_next);
    const double value = ov.f + 0.5 * rho * (sol.z_next - y).squaredNorm();
    if (value < out.upper) {
      out.upper = value;
      out.argmin = sol.z_next;
    }
    out.iterations = it;
    if (out.upper - out.lower <= accuracy) return out;
    std::vector<double> weights = sol.multipliers;
    weights.push_back(0.0);
    const auto id = static_cast<std::size_t>(it + 1);
    const CuttingPlaneModel grown = add_cut(model, Cut{sol.z_next, ov.f, ov.g, id});
    model = prune(grown, weights, id, PrunePolicy::keep_active(), 1e-12);
    warm.clear();
  }
  throw ConvergenceFailure("moreau_ref: accuracy " + std::to_string(accuracy) + " not reached; gap " +
                               std::to_string(out.upper - out.lower),
                           out.argmin, out.upper - out.lower);
}

/// F_rho(y) to within `accuracy`, returned as the certified upper value.
inline double moreau_ref(const ProblemSpec& problem, const Vector& y, double rho, double accuracy) {
  return moreau_bounds(problem, y, rho, accuracy).upper;
}

struct CheckOptions {
  double slack{1e-8};
  /// Moreau checks: run only for dim <= max_moreau_dim.
  Eigen::Index max_moreau_dim{2};
  double moreau_accuracy{1e-10};
  double moreau_slack{1e-7};
};

namespace detail {

inline double effective_M(double m_hat, double eps) { return std::max(m_hat, eps); }

}  // namespace detail

/// Evaluates every per-iteration inequality and bound on a completed trace.
/// Violations are reported, never thrown.
inline CheckReport check_trace(const Trace& trace, const ProblemSpec& problem, const SolverConfig& config,
                               const CheckOptions& opts = {}) {
  const double slack = opts.slack;
  const double beta = config.beta;
  const double rho = config.rho;
  const double eps = config.eps;
  const auto& recs = trace.records;
  const bool has_ref = problem.reference.has_value();
  const bool has_centers = !recs.empty() && std::all_of(recs.begin(), recs.end(), [](const IterationRecord& r) {
    return static_cast<bool>(r.center);
  });

  auto entry = [&](const char* name, const char* label) {
    CheckEntry e;
    e.name = name;
    e.label = label;
    e.tolerance = slack;
    return e;
  };
  CheckEntry a = entry("null_increment", "null-step increment of eta");
  CheckEntry b = entry("descent_eta", "eta change at descent steps");
  CheckEntry c = entry("half_gap", "half-gap at every iteration");
  CheckEntry d = entry("moreau_bound", "Moreau-Yosida bound at centers");
  CheckEntry e = entry("gap_from_eta", "gap bound from the master value");
  CheckEntry f = entry("final_accuracy", "accuracy at termination");
  CheckEntry g = entry("descent_rate", "linear rate at descent steps");
  CheckEntry h = entry("null_contraction", "null-step contraction with gamma");
  CheckEntry i = entry("restart_bound", "restart bound at series starts");
  CheckEntry j = entry("bounded_iterates", "distance of centers to x*");
  CheckEntry d2 = entry("moreau_scaled", "Moreau-Yosida bound with rho scaling");
  d.tolerance = d2.tolerance = opts.moreau_slack;

  // Checks that need only the scalar columns.
  const MEstimate m_hat = estimate_M(trace, rho);
  const double M = detail::effective_M(m_hat.value, eps);
  const double gamma = 1.0 - (1.0 - beta) * (1.0 - beta) * eps / (2.0 * M);
  if (!m_hat.note.empty()) {
    h.note = m_hat.note;
  } else if (eps > m_hat.value) {
    h.note = "eps exceeds the observed M; gamma built from M = eps";
  }

  for (std::size_t idx = 0; idx < recs.size(); ++idx) {
    const auto& r = recs[idx];
    {
      const double lhs = r.f_center - r.eta;
      const double rhs = 0.5 * (r.f_center - r.model_val);
      c.add(lhs, rhs, rhs, r.k);
    }
    if (idx + 1 >= recs.size()) continue;
    const auto& nx = recs[idx + 1];
    if (r.step_kind == StepKind::Null) {
      const double mu = mu_bar(r.v, r.norm_s_minus_g * r.norm_s_minus_g, rho, beta);
      const double rhs = r.eta + 0.5 * (1.0 - beta) * mu * r.v;
      a.add(nx.eta, rhs, rhs, r.k);
      const double bound = gamma * (r.f_center - r.eta);
      h.add(bound, r.f_center - nx.eta, bound, r.k);
    } else if (r.step_kind == StepKind::Descent) {
      const double step = -rho * r.dist_sq;
      b.add(nx.eta - r.eta, step, step, r.k);
      const double decrease = (nx.f_center - r.f_center) / beta;
      b.add(step, decrease, decrease, r.k);
    }
  }

  // Series starts whose predecessor ended with a descent.
  const auto segments = segment_trace(trace);
  for (std::size_t l = 1; l < segments.size(); ++l) {
    const auto& prev = segments[l - 1];
    const auto& cur = segments[l];
    if (prev.ends_with != StepKind::Descent) continue;
    const double eta_start = recs[static_cast<std::size_t>(cur.first_k - 1)].eta;
    const double bound = 1.5 / beta * (prev.f_center - cur.f_center);
    i.add(bound, cur.f_center - eta_start, bound, cur.first_k);
  }

  if (!has_ref) {
    for (CheckEntry* ent : {&d, &d2, &e, &f, &g, &j}) {
      ent->skipped = true;
      ent->note = "no reference";
    }
  } else {
    const auto& ref = *problem.reference;
    const double fs = ref.f_star;
    const double abar = std::min(ref.alpha, 1.0);
    for (const auto& r : recs) {
      const double bound = (r.f_center - r.eta) / abar;
      e.add(bound, r.f_center - fs, bound, r.k);
      if (r.step_kind == StepKind::Descent) {
        const double rhs = (1.0 - abar * beta) * (r.f_center - fs);
        g.add(rhs, r.f_znext - fs, rhs, r.k);
      }
    }
    if (trace.status == RunStatus::Converged && !recs.empty()) {
      const double bound = eps / abar;
      f.add(bound, recs.back().f_center - fs, fs, recs.back().k);
    } else {
      f.skipped = true;
      f.note = "run did not converge";
    }

    if (!has_centers) {
      d.skipped = d2.skipped = j.skipped = true;
      d.note = d2.note = j.note = "trace carries no centers";
    } else {
      const Vector& x1 = *recs.front().center;
      const double f1 = recs.front().f_center;
      const double radius = (x1 - ref.x_star).squaredNorm() + 2.0 * (1.0 - beta) / (beta * rho) * (f1 - fs);
      for (const auto& seg : segments) {
        const double dist = (seg.center - ref.x_star).squaredNorm();
        j.add(radius + 1e-8, dist, 0.0, seg.first_k);
      }
      if (problem.dim > opts.max_moreau_dim) {
        d.skipped = d2.skipped = true;
        d.note = d2.note = "dimension above " + std::to_string(opts.max_moreau_dim);
      } else {
        long skipped_at_min = 0;
        for (const auto& seg : segments) {
          const double dist = (seg.center - ref.x_star).squaredNorm();
          if (dist == 0.0) {
            ++skipped_at_min;
            continue;
          }
          const double gap = std::max(seg.f_center - fs, 0.0);
          const double bound = seg.f_center - dist * phi(gap / dist);
          const double scaled = seg.f_center - 0.5 * rho * dist * phi(gap / (rho * dist));
          try {
            const double fr = moreau_ref(problem, seg.center, rho, opts.moreau_accuracy);
            d.add(bound, fr, bound, seg.first_k);
            d2.add(scaled, fr, scaled, seg.first_k);
          } catch (const ConvergenceFailure& ex) {
            d.add(bound, std::numeric_limits<double>::quiet_NaN(), bound, seg.first_k);
            d2.add(scaled, std::numeric_limits<double>::quiet_NaN(), scaled, seg.first_k);
            d.note = d2.note = ex.what();
          }
        }
        if (skipped_at_min > 0) d.note = d2.note = std::to_string(skipped_at_min) + " center(s) at x* skipped";
      }
    }
  }
  for (CheckEntry* ent : {&a, &b, &c, &h, &i}) {
    if (ent->checked == 0 && ent->note.empty()) ent->note = "nothing to check";
  }

  CheckReport report;
  report.entries = {a, b, c, d, d2, e, f, g, h, i, j};
  return report;
}

struct RateBounds {
  double M_hat{};
  double M_used{};  ///< max(M_hat, eps); NaN when M_hat is 0
  bool gamma_defined{false};
  double gamma{std::numeric_limits<double>::quiet_NaN()};
  double C{std::numeric_limits<double>::quiet_NaN()};
  double alpha_bar{};
  double L_bound{};
  double L_bound_raw{};
  std::vector<double> n_ell_bounds;      ///< raw, one per series
  std::vector<double> n_ell_bounds_pos;  ///< max(raw, 0)
  double total_bound{};
  int L_observed{};
  long null_observed{};
  long total_observed{};
  std::vector<std::string> notes;
};

/// Counting bounds computed ex post from the run-wide M estimate. `eta1` and
/// `f1` are the first master value and F(x1).
inline RateBounds theoretical_bounds(const Trace& trace, const ProblemSpec& problem, const SolverConfig& config,
                                     double eta1, double f1) {
  if (!problem.reference) throw InvalidInput("theoretical_bounds: problem has no reference data");
  const auto& ref = *problem.reference;
  const double beta = config.beta;
  const double eps = config.eps;
  RateBounds rb;
  rb.alpha_bar = std::min(ref.alpha, 1.0);
  const MEstimate m = estimate_M(trace, config.rho);
  rb.M_hat = m.value;
  if (!m.note.empty()) rb.notes.push_back(m.note);

  const auto segments = segment_trace(trace);
  rb.L_observed = static_cast<int>(segments.size());
  for (const auto& s : segments) rb.null_observed += s.n_null;
  rb.total_observed = static_cast<long>(trace.records.size());

  const double gap1 = f1 - ref.f_star;
  const double log_rate = std::log(1.0 - rb.alpha_bar * beta);
  const double descents_term = (std::log(beta * eps) - std::log(gap1)) / log_rate;
  rb.L_bound_raw = gap1 > 0.0 ? 1.0 + descents_term : 1.0;
  rb.L_bound = std::max(rb.L_bound_raw, 1.0);

  const double brackets = std::log(rb.alpha_bar) + std::log(2.0 * beta * rb.alpha_bar / 3.0) + std::log(beta / 3.0);
  const double descents_part = gap1 > beta * eps ? 2.0 * descents_term + 2.0 : 2.0;
  if (rb.M_hat > 0.0) {
    rb.M_used = detail::effective_M(rb.M_hat, eps);
    if (eps > rb.M_hat) rb.notes.push_back("eps exceeds the observed M; M = eps used");
    rb.C = (1.0 - beta) * (1.0 - beta) / (2.0 * rb.M_used);
    rb.gamma = 1.0 - eps * rb.C;
    rb.gamma_defined = true;
    const double lg = std::log(rb.gamma);
    const std::size_t L = segments.size();
    auto Fc = [&](std::size_t l) { return segments[l].f_center; };
    for (std::size_t l = 0; l < L; ++l) {
      double arg;
      if (L == 1) {
        arg = 0.5 * eps / (f1 - eta1);
      } else if (l == 0) {
        arg = rb.alpha_bar * (Fc(0) - Fc(1)) / (f1 - eta1);
      } else if (l + 1 == L) {
        arg = beta / 3.0 * eps / (Fc(l - 1) - Fc(l));
      } else {
        arg = 2.0 * beta * rb.alpha_bar / 3.0 * (Fc(l) - Fc(l + 1)) / (Fc(l - 1) - Fc(l));
      }
      const double bound = 1.0 + std::log(arg) / lg;
      rb.n_ell_bounds.push_back(bound);
      rb.n_ell_bounds_pos.push_back(std::max(bound, 0.0));
    }
    const double null_part = gap1 > beta * eps
                                 ? std::log(gap1 / (beta * eps)) * brackets / (eps * rb.C * log_rate)
                                 : 0.0;
    rb.total_bound = null_part + std::log((f1 - eta1) / eps) / (eps * rb.C) + descents_part;
  } else {
    rb.M_used = std::numeric_limits<double>::quiet_NaN();
    rb.notes.push_back("gamma undefined; series bounds skipped");
    rb.total_bound = descents_part;
  }
  return rb;
}

struct RateFit {
  double fit_constant{};
  double max_ratio{};
  std::vector<double> ratios;
};

/// Compares iteration counts against (1/eps) ln(1/eps).
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& sweep) {
  if (sweep.size() < 3) throw InvalidInput("fit_rate needs at least 3 sweep points");
  RateFit out;
  double num = 0.0;
  double den = 0.0;
  out.max_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const auto [eps, n] = sweep[i];
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidInput("fit_rate: eps must lie in (0, 1)");
    if (i > 0 && !(eps < sweep[i - 1].first)) throw InvalidInput("fit_rate: eps values must strictly decrease");
    const double f = std::log(1.0 / eps) / eps;
    out.ratios.push_back(n / f);
    out.max_ratio = std::max(out.max_ratio, n / f);
    num += n * f;
    den += f * f;
  }
  out.fit_constant = num / den;
  return out;
}

}  // namespace proxbundle
