#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "proxbundle/error.hpp"
#include "proxbundle/proxqp.hpp"

namespace proxbundle {

struct OracleValue {
  double f{};
  Vector g;  ///< an element of the subdifferential at the query point
};

/// Must be a pure function of its argument.
using Oracle = std::function<OracleValue(const Vector&)>;

/// Minimizer data for problems with quadratic growth:
///   F(x) - f_star >= alpha ||x - x_star||^2  on {F <= F(default_x1)}.
struct Reference {
  Vector x_star;
  double f_star{};
  double alpha{};
};

struct ProblemSpec {
  std::string name;
  Eigen::Index dim{};
  Oracle oracle;
  std::optional<Reference> reference;
  Box box;  ///< contains the sublevel set of F(default_x1); used for sampling and grids
  Vector default_x1;
};

/// F(x) and a subgradient, with argument and result validation.
inline OracleValue eval_oracle(const ProblemSpec& problem, const Vector& x) {
  detail::require_dim(x, problem.dim, "eval_oracle");
  if (!x.allFinite()) throw InvalidInput("eval_oracle: non-finite point");
  OracleValue out = problem.oracle(x);
  if (!std::isfinite(out.f) || out.g.size() != problem.dim || !out.g.allFinite()) {
    throw InvalidInput("eval_oracle: problem '" + problem.name + "' returned an invalid value");
  }
  return out;
}

/// One piece 0.5 <x, A x> + <b, x> + c of a max-of-quadratics function.
struct QuadraticPiece {
  Matrix A;  ///< symmetric; empty means the zero matrix
  Vector b;
  double c{};

  double value(const Vector& x) const {
    const double quad = A.size() == 0 ? 0.0 : 0.5 * x.dot(A * x);
    return quad + b.dot(x) + c;
  }
  Vector gradient(const Vector& x) const { return A.size() == 0 ? b : Vector(A * x + b); }
};

/// F(x) = max_i piece_i(x); the lowest-index maximizing piece supplies the
/// subgradient.
inline Oracle max_of_quadratics_oracle(std::vector<QuadraticPiece> pieces) {
  auto shared = std::make_shared<const std::vector<QuadraticPiece>>(std::move(pieces));
  return [shared](const Vector& x) {
    const auto& ps = *shared;
    std::size_t arg = 0;
    double best = ps[0].value(x);
    for (std::size_t i = 1; i < ps.size(); ++i) {
      const double v = ps[i].value(x);
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    return OracleValue{best, ps[arg].gradient(x)};
  };
}

struct BuiltinParams {
  Eigen::Index dim{0};          ///< 0 selects the problem's default
  double tau{0.5};              ///< l1quad weight
  std::optional<Vector> c;      ///< l1quad / norm-plus-quad shift
  std::uint64_t seed{1};        ///< maxquad generator
  std::size_t pieces{0};        ///< maxquad piece count, 0 means dim + 1
  double kink_scale{0.2};       ///< maxquad piece gradients at x* are drawn from [-kink_scale, kink_scale]
};

inline std::vector<std::string> builtin_names() {
  return {"l1quad", "maxq", "maxquad", "norm-plus-quad"};
}

namespace detail {

inline Box box_around(const Vector& mid, double radius) {
  return {mid.array() - radius, mid.array() + radius};
}

inline double sgn0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline Vector default_shift(Eigen::Index n) {
  if (n == 1) return Vector::Constant(1, 1.0);
  Vector c(n);
  for (Eigen::Index i = 0; i < n; ++i) c(i) = 0.25 * static_cast<double>(i + 1) * (i % 2 == 0 ? 1.0 : -1.0);
  return c;
}

inline ProblemSpec make_l1quad(const BuiltinParams& p) {
  const Eigen::Index n = p.dim > 0 ? p.dim : (p.c ? p.c->size() : 1);
  const Vector c = p.c ? *p.c : default_shift(n);
  require_dim(c, n, "l1quad shift");
  const double tau = p.tau;
  if (!(tau >= 0.0)) throw InvalidInput("l1quad: tau must be nonnegative");

  ProblemSpec spec;
  spec.name = "l1quad";
  spec.dim = n;
  spec.oracle = [c, tau](const Vector& x) {
    OracleValue out;
    out.f = tau * x.lpNorm<1>() + 0.5 * (x - c).squaredNorm();
    out.g = x - c;
    for (Eigen::Index i = 0; i < x.size(); ++i) out.g(i) += tau * sgn0(x(i));
    return out;
  };
  Vector xs(n);
  for (Eigen::Index i = 0; i < n; ++i) xs(i) = sgn0(c(i)) * std::max(0.0, std::abs(c(i)) - tau);
  spec.reference = Reference{xs, tau * xs.lpNorm<1>() + 0.5 * (xs - c).squaredNorm(), 0.5};
  spec.default_x1 = Vector::Zero(n);
  // F >= 0.5||x - c||^2 and F(0) = 0.5||c||^2.
  spec.box = box_around(c, c.norm() + 1e-9);
  return spec;
}

inline ProblemSpec make_maxq(const BuiltinParams& p) {
  const Eigen::Index n = p.dim > 0 ? p.dim : 10;
  ProblemSpec spec;
  spec.name = "maxq";
  spec.dim = n;
  spec.oracle = [](const Vector& x) {
    Eigen::Index arg = 0;
    double best = x(0) * x(0);
    for (Eigen::Index i = 1; i < x.size(); ++i) {
      if (x(i) * x(i) > best) {
        best = x(i) * x(i);
        arg = i;
      }
    }
    OracleValue out{best, Vector::Zero(x.size())};
    out.g(arg) = 2.0 * x(arg);
    return out;
  };
  spec.reference = Reference{Vector::Zero(n), 0.0, 1.0 / static_cast<double>(n)};
  spec.default_x1 = Vector(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    spec.default_x1(i) = (i < n / 2 ? 1.0 : -1.0) * static_cast<double>(i + 1);
  }
  const double r = static_cast<double>(n);
  spec.box = box_around(Vector::Zero(n), r);
  return spec;
}

inline ProblemSpec make_norm_plus_quad(const BuiltinParams& p) {
  const Eigen::Index n = p.dim > 0 ? p.dim : (p.c ? p.c->size() : 3);
  Vector c;
  if (p.c) {
    c = *p.c;
  } else if (n == 3) {
    c = Vector(3);
    c << 1.0, -2.0, 0.5;
  } else {
    c = default_shift(n) * 2.0;
  }
  require_dim(c, n, "norm-plus-quad shift");
  ProblemSpec spec;
  spec.name = "norm-plus-quad";
  spec.dim = n;
  spec.oracle = [c](const Vector& x) {
    const double nx = x.norm();
    OracleValue out;
    out.f = nx + 0.5 * (x - c).squaredNorm();
    out.g = x - c;
    if (nx > 0.0) out.g += x / nx;
    return out;
  };
  const double nc = c.norm();
  const Vector xs = nc > 1.0 ? Vector(c * (1.0 - 1.0 / nc)) : Vector(Vector::Zero(n));
  spec.reference = Reference{xs, xs.norm() + 0.5 * (xs - c).squaredNorm(), 0.5};
  spec.default_x1 = Vector::Zero(n);
  spec.box = box_around(c, nc + 1e-9);
  return spec;
}

/// Max of random strongly convex quadratics with a planted minimizer: every
/// piece equals c0 at x0 and a positive combination of the piece gradients
/// vanishes there, so x0 is the unique minimizer and F* = c0.
inline ProblemSpec make_maxquad(const BuiltinParams& p) {
  const Eigen::Index n = p.dim > 0 ? p.dim : 2;
  const std::size_t m = p.pieces > 0 ? p.pieces : static_cast<std::size_t>(n) + 1;
  if (m < 2) throw InvalidInput("maxquad needs at least 2 pieces");
  if (!(p.kink_scale > 0.0) || !std::isfinite(p.kink_scale)) throw InvalidInput("kink_scale must be positive");
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  auto random_vector = [&](Eigen::Index k) {
    Vector v(k);
    for (Eigen::Index i = 0; i < k; ++i) v(i) = unif(rng);
    return v;
  };

  const Vector x0 = random_vector(n);
  const double c0 = unif(rng);
  std::vector<double> theta(m);
  for (double& t : theta) t = 1.0 + 0.5 * unif(rng);

  std::vector<Matrix> A(m);
  std::vector<Vector> grad(m);
  double min_eig = std::numeric_limits<double>::infinity();
  Vector weighted = Vector::Zero(n);
  for (std::size_t i = 0; i < m; ++i) {
    Matrix B(n, n);
    for (Eigen::Index r = 0; r < n; ++r) B.row(r) = random_vector(n).transpose();
    A[i] = B * B.transpose() / static_cast<double>(n) + 0.5 * Matrix::Identity(n, n);
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Matrix>(A[i]).eigenvalues().minCoeff());
    if (i + 1 < m) {
      grad[i] = p.kink_scale * random_vector(n);
      weighted += theta[i] * grad[i];
    }
  }
  grad[m - 1] = -weighted / theta[m - 1];

  std::vector<QuadraticPiece> pieces(m);
  for (std::size_t i = 0; i < m; ++i) {
    pieces[i].A = A[i];
    pieces[i].b = grad[i] - A[i] * x0;
    pieces[i].c = 0.5 * x0.dot(A[i] * x0) - grad[i].dot(x0) + c0;
  }

  ProblemSpec spec;
  spec.name = "maxquad";
  spec.dim = n;
  spec.oracle = max_of_quadratics_oracle(std::move(pieces));
  const double alpha = min_eig / 2.0;
  spec.reference = Reference{x0, spec.oracle(x0).f, alpha};
  spec.default_x1 = Vector::Constant(n, 2.0);
  const double gap = spec.oracle(spec.default_x1).f - spec.reference->f_star;
  spec.box = box_around(x0, std::sqrt(std::max(gap, 0.0) / alpha) * (1.0 + 1e-9) + 1e-9);
  return spec;
}

}  // namespace detail

/// Corpus problem by name.
inline ProblemSpec builtin(const std::string& name, const BuiltinParams& params = {}) {
  if (params.dim < 0) throw InvalidInput("dimension must be positive");
  if (name == "l1quad") return detail::make_l1quad(params);
  if (name == "maxq") return detail::make_maxq(params);
  if (name == "maxquad") return detail::make_maxquad(params);
  if (name == "norm-plus-quad") return detail::make_norm_plus_quad(params);
  std::string names;
  for (const auto& n : builtin_names()) names += (names.empty() ? "" : ", ") + n;
  throw InvalidInput("unknown problem '" + name + "'; available: " + names);
}

namespace detail {

using json = nlohmann::json;

inline const json& field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError("expected an object", path);
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'", path);
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError("expected a number", path);
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError("non-finite number", path);
  return v;
}

inline Vector vector_of(const json& j, Eigen::Index n, const std::string& path) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
    throw ParseError("expected an array of " + std::to_string(n) + " numbers", path);
  }
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i) = number(j[static_cast<std::size_t>(i)], path + "/" + std::to_string(i));
  }
  return v;
}

/// Lower triangle given row by row: row i holds i + 1 entries.
inline Matrix lower_triangle_of(const json& j, Eigen::Index n, const std::string& path) {
  if (j.is_string()) {
    if (j.get<std::string>() == "zero") return {};
    throw ParseError("expected \"zero\" or a lower-triangular matrix", path);
  }
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
    throw ParseError("expected " + std::to_string(n) + " rows", path);
  }
  Matrix A = Matrix::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::string rp = path + "/" + std::to_string(r);
    const Vector row = vector_of(j[static_cast<std::size_t>(r)], r + 1, rp);
    for (Eigen::Index col = 0; col <= r; ++col) {
      A(r, col) = row(col);
      A(col, r) = row(col);
    }
  }
  return A;
}

}  // namespace detail

/// Parses a max-of-quadratics problem:
///
///   {"name": str, "dim": n,
///    "pieces": [{"A": [[a11], [a21, a22], ...] | "zero", "b": [...], "c": num}, ...],
///    "reference": {"x_star": [...], "f_star": num, "alpha": num},   (optional)
///    "box": {"lower": [...], "upper": [...]},                         (optional)
///    "default_x1": [...]}                                             (optional)
///
/// F(x) = max_i 0.5 <x, A_i x> + <b_i, x> + c_i.
inline ProblemSpec parse_problem_file(std::string_view document) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), "byte " + std::to_string(e.byte));
  }
  if (!doc.is_object()) throw ParseError("expected an object", "/");

  ProblemSpec spec;
  const json& name = detail::field(doc, "name", "/");
  if (!name.is_string()) throw ParseError("expected a string", "/name");
  spec.name = name.get<std::string>();
  const json& dim = detail::field(doc, "dim", "/");
  if (!dim.is_number_integer() || dim.get<long long>() <= 0) {
    throw ParseError("expected a positive integer", "/dim");
  }
  const auto n = static_cast<Eigen::Index>(dim.get<long long>());
  spec.dim = n;

  const json& pieces_json = detail::field(doc, "pieces", "/");
  if (!pieces_json.is_array() || pieces_json.empty()) {
    throw ParseError("expected a nonempty array", "/pieces");
  }
  std::vector<QuadraticPiece> pieces;
  for (std::size_t i = 0; i < pieces_json.size(); ++i) {
    const std::string path = "/pieces/" + std::to_string(i);
    const json& pj = pieces_json[i];
    QuadraticPiece piece;
    piece.A = detail::lower_triangle_of(detail::field(pj, "A", path), n, path + "/A");
    piece.b = detail::vector_of(detail::field(pj, "b", path), n, path + "/b");
    piece.c = detail::number(detail::field(pj, "c", path), path + "/c");
    pieces.push_back(std::move(piece));
  }

  if (doc.contains("reference")) {
    const json& rj = doc["reference"];
    Reference ref;
    ref.x_star = detail::vector_of(detail::field(rj, "x_star", "/reference"), n, "/reference/x_star");
    ref.f_star = detail::number(detail::field(rj, "f_star", "/reference"), "/reference/f_star");
    ref.alpha = detail::number(detail::field(rj, "alpha", "/reference"), "/reference/alpha");
    if (!(ref.alpha > 0.0)) throw ValidationError("reference alpha must be positive");
    // Quadratic growth is only claimed for max of strongly convex pieces.
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      const bool pd = pieces[i].A.size() != 0 &&
                      Eigen::SelfAdjointEigenSolver<Matrix>(pieces[i].A).eigenvalues().minCoeff() > 0.0;
      if (!pd) {
        throw ValidationError("piece " + std::to_string(i) +
                              " is not positive definite but growth data is claimed");
      }
    }
    spec.reference = ref;
  }

  spec.default_x1 = doc.contains("default_x1")
                        ? detail::vector_of(doc["default_x1"], n, "/default_x1")
                        : Vector(Vector::Zero(n));
  if (doc.contains("box")) {
    const json& bj = doc["box"];
    spec.box.lower = detail::vector_of(detail::field(bj, "lower", "/box"), n, "/box/lower");
    spec.box.upper = detail::vector_of(detail::field(bj, "upper", "/box"), n, "/box/upper");
    if ((spec.box.lower.array() > spec.box.upper.array()).any()) {
      throw ValidationError("box lower bound exceeds upper bound");
    }
  } else {
    spec.box = detail::box_around(spec.default_x1, 10.0);
  }
  spec.oracle = max_of_quadratics_oracle(std::move(pieces));
  return spec;
}

}  // namespace proxbundle
