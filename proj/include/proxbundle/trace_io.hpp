#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxbundle/error.hpp"
#include "proxbundle/solver.hpp"

namespace proxbundle {

inline constexpr const char* kTraceColumns =
    "k,step_kind,f_center,f_znext,model_val,v,eta,dist_sq,norm_s_minus_g";

namespace detail {

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ParseError("bad number '" + s + "'", where);
  return v;
}

inline StepKind parse_step_kind(const std::string& s, const std::string& where) {
  if (s == "descent") return StepKind::Descent;
  if (s == "null") return StepKind::Null;
  if (s == "stop") return StepKind::Stop;
  throw ParseError("bad step kind '" + s + "'", where);
}

inline Variant parse_variant(const std::string& s) {
  if (s == "multicut") return Variant::MultiCut;
  if (s == "aggregate") return Variant::Aggregate;
  throw InvalidInput("unknown variant '" + s + "' (expected multicut or aggregate)");
}

inline RunStatus parse_status(const std::string& s, const std::string& where) {
  if (s == "Converged") return RunStatus::Converged;
  if (s == "MaxIter") return RunStatus::MaxIter;
  if (s == "QpFailure") return RunStatus::QpFailure;
  throw ParseError("bad status '" + s + "'", where);
}

}  // namespace detail

/// Trace as CSV: `# key=value` metadata lines (problem, dim, variant, rho,
/// beta, eps, max_iter, status), the column header, then one row per record.
inline std::string write_trace_csv(const Trace& trace) {
  std::ostringstream out;
  const auto& c = trace.config;
  out << "# problem=" << trace.problem_name << '\n'
      << "# dim=" << trace.dim << '\n'
      << "# variant=" << to_string(c.variant) << '\n'
      << "# rho=" << detail::fmt17(c.rho) << '\n'
      << "# beta=" << detail::fmt17(c.beta) << '\n'
      << "# eps=" << detail::fmt17(c.eps) << '\n'
      << "# max_iter=" << c.max_iter << '\n'
      << "# status=" << to_string(trace.status) << '\n'
      << kTraceColumns << '\n';
  for (const auto& r : trace.records) {
    out << r.k << ',' << to_string(r.step_kind) << ',' << detail::fmt17(r.f_center) << ','
        << detail::fmt17(r.f_znext) << ',' << detail::fmt17(r.model_val) << ',' << detail::fmt17(r.v)
        << ',' << detail::fmt17(r.eta) << ',' << detail::fmt17(r.dist_sq) << ','
        << detail::fmt17(r.norm_s_minus_g) << '\n';
  }
  return out.str();
}

/// Parses write_trace_csv output. Vector fields are left empty; see
/// attach_trace_vectors.
inline Trace read_trace_csv(std::string_view text) {
  Trace trace;
  std::map<std::string, std::string> meta;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto eol = text.find('\n', pos);
    std::string line(text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos));
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      meta[key] = line.substr(eq + 1);
      continue;
    }
    if (!header_seen) {
      if (line != kTraceColumns) throw ParseError("unexpected header", where);
      header_seen = true;
      continue;
    }
    const auto cols = detail::split(line, ',');
    if (cols.size() != 9) throw ParseError("expected 9 columns", where);
    IterationRecord r;
    char* end = nullptr;
    r.k = static_cast<int>(std::strtol(cols[0].c_str(), &end, 10));
    if (cols[0].empty() || *end != '\0') throw ParseError("bad iteration index", where);
    r.step_kind = detail::parse_step_kind(cols[1], where);
    r.f_center = detail::parse_double(cols[2], where);
    r.f_znext = detail::parse_double(cols[3], where);
    r.model_val = detail::parse_double(cols[4], where);
    r.v = detail::parse_double(cols[5], where);
    r.eta = detail::parse_double(cols[6], where);
    r.dist_sq = detail::parse_double(cols[7], where);
    r.norm_s_minus_g = detail::parse_double(cols[8], where);
    trace.records.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError("missing header row", "end of input");

  for (const char* key : {"problem", "dim", "variant", "rho", "beta", "eps", "max_iter", "status"}) {
    if (!meta.count(key)) throw ParseError(std::string("missing metadata '") + key + "'", "header");
  }
  trace.problem_name = meta["problem"];
  trace.dim = static_cast<Eigen::Index>(detail::parse_double(meta["dim"], "dim"));
  try {
    trace.config.variant = detail::parse_variant(meta["variant"]);
  } catch (const InvalidInput& e) {
    throw ParseError(e.what(), "variant");
  }
  trace.config.rho = detail::parse_double(meta["rho"], "rho");
  trace.config.beta = detail::parse_double(meta["beta"], "beta");
  trace.config.eps = detail::parse_double(meta["eps"], "eps");
  trace.config.max_iter = static_cast<int>(detail::parse_double(meta["max_iter"], "max_iter"));
  trace.status = detail::parse_status(meta["status"], "status");

  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    if (trace.records[i].k != static_cast<int>(i) + 1) {
      throw ParseError("iteration indices must run 1, 2, ...", "record " + std::to_string(i + 1));
    }
    if (trace.records[i].step_kind == StepKind::Stop && i + 1 != trace.records.size()) {
      throw ParseError("stop record before the end of the trace", "record " + std::to_string(i + 1));
    }
  }
  return trace;
}

/// Sidecar JSON with the per-record vectors: {"records": [{"k", "center",
/// "z_next", "s", "g_next"}, ...]}.
inline std::string write_trace_vectors(const Trace& trace) {
  using nlohmann::json;
  auto arr = [](const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
  };
  json recs = json::array();
  for (const auto& r : trace.records) {
    recs.push_back({{"k", r.k}, {"center", r.center ? arr(*r.center) : json::array()}, {"z_next", arr(r.z_next)}, {"s", arr(r.s)},
                    {"g_next", arr(r.g_next)}});
  }
  return json{{"problem", trace.problem_name}, {"records", recs}}.dump();
}

inline void attach_trace_vectors(Trace& trace, std::string_view sidecar) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(sidecar);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed sidecar: ") + e.what(), "byte " + std::to_string(e.byte));
  }
  if (!doc.contains("records") || !doc["records"].is_array() ||
      doc["records"].size() != trace.records.size()) {
    throw ParseError("sidecar record count does not match the trace", "/records");
  }
  auto vec = [&](const json& j, const std::string& where, bool allow_empty) {
    if (!j.is_array()) throw ParseError("expected an array", where);
    if (j.empty() && allow_empty) return Vector();
    if (static_cast<Eigen::Index>(j.size()) != trace.dim) throw ParseError("wrong vector length", where);
    Vector v(trace.dim);
    for (Eigen::Index i = 0; i < trace.dim; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
  };
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const json& rj = doc["records"][i];
    const std::string where = "/records/" + std::to_string(i);
    auto& r = trace.records[i];
    if (!rj.contains("k") || rj["k"].get<int>() != r.k) throw ParseError("record index mismatch", where);
    Vector c = vec(rj.value("center", json::array()), where + "/center", false);
    // Records of one series share their center.
    if (i > 0 && trace.records[i - 1].center && *trace.records[i - 1].center == c) {
      r.center = trace.records[i - 1].center;
    } else {
      r.center = std::make_shared<const Vector>(std::move(c));
    }
    r.z_next = vec(rj.value("z_next", json::array()), where + "/z_next", false);
    r.s = vec(rj.value("s", json::array()), where + "/s", false);
    r.g_next = vec(rj.value("g_next", json::array()), where + "/g_next", r.step_kind == StepKind::Stop);
  }
}

}  // namespace proxbundle
