#pragma once

// Built-in test functions with their default regions, starts and run
// parameters.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "slopeflow/verify.hpp"

namespace slopeflow {

struct CorpusEntry {
  CorpusEntry(std::string n, std::string desc, FuncExpr fn, Region r, std::vector<Vector> s)
      : name(std::move(n)), description(std::move(desc)), f(std::move(fn)), region(std::move(r)), starts(std::move(s)) {}

  std::string name;
  std::string description;
  FuncExpr f;
  Region region;
  std::vector<Vector> starts;  // starts.front() is the default descent start
  double eta = 0.5;
  double min_slope = 1.0;
  double search_radius = 2.0;
  double flow_h = 1e-3;
  double flow_T = 20.0;
  std::optional<double> min_value;
  std::optional<Vector> minimizer;
  bool convex = false;
  bool bounded_below = true;
  /// Curve checked by the verify mode when no curve file is given, with the
  /// expected verdict per property and the tolerance to use.
  std::optional<SampledCurve> reference_curve;
  std::vector<std::pair<std::string, Verdict>> expectations;
  double reference_tol = 1e-2;
};

struct MaxAffineData {
  Matrix gradients;  // one row per piece
  Vector offsets;
  double min_value = 0.0;
  Vector minimizer;
};

/// Five affine pieces in three variables: gradients uniform in [-1,1]^3 with
/// their centroid subtracted (so zero lies in their hull and the max is
/// bounded below), offsets uniform in [-0.5,0.5]. The minimum is found by
/// enumerating the vertices where four pieces tie.
inline MaxAffineData maxaffine_data(std::uint64_t seed) {
  constexpr int pieces = 5, n = 3;
  std::mt19937_64 rng(seed);
  MaxAffineData d;
  d.gradients.resize(pieces, n);
  d.offsets.resize(pieces);
  for (int i = 0; i < pieces; ++i) {
    for (int j = 0; j < n; ++j) d.gradients(i, j) = 2.0 * detail::unit_uniform(rng) - 1.0;
  }
  for (int i = 0; i < pieces; ++i) d.offsets[i] = detail::unit_uniform(rng) - 0.5;
  Eigen::RowVectorXd centroid = d.gradients.colwise().mean();
  d.gradients.rowwise() -= centroid;

  d.min_value = std::numeric_limits<double>::infinity();
  for (int skip = 0; skip < pieces; ++skip) {
    Eigen::Matrix4d a;
    Eigen::Vector4d rhs;
    int row = 0;
    for (int i = 0; i < pieces; ++i) {
      if (i == skip) continue;
      a.row(row) << d.gradients(i, 0), d.gradients(i, 1), d.gradients(i, 2), -1.0;
      rhs[row] = -d.offsets[i];
      ++row;
    }
    Eigen::FullPivLU<Eigen::Matrix4d> lu(a);
    if (!lu.isInvertible()) continue;
    Eigen::Vector4d sol = lu.solve(rhs);
    Vector x = sol.head<3>();
    double t = sol[3];
    double skipped = d.gradients.row(skip).dot(x) + d.offsets[skip];
    if (skipped <= t + 1e-12 && t < d.min_value) {
      d.min_value = t;
      d.minimizer = x;
    }
  }
  return d;
}

inline FuncExpr maxaffine_function(const MaxAffineData& d) {
  const std::size_t n = static_cast<std::size_t>(d.gradients.cols());
  std::vector<FuncExpr> pieces;
  for (Eigen::Index i = 0; i < d.gradients.rows(); ++i) {
    std::vector<Monomial> terms;
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<unsigned> e(n, 0u);
      e[j] = 1;
      terms.push_back(Monomial{d.gradients(i, static_cast<Eigen::Index>(j)), e});
    }
    terms.push_back(Monomial{d.offsets[i], std::vector<unsigned>(n, 0u)});
    pieces.push_back(FuncExpr::poly(n, std::move(terms)));
  }
  return FuncExpr::max(std::move(pieces));
}

namespace detail {

inline Region box(std::size_t n, double lo, double hi) {
  return Region{Vector::Constant(static_cast<Eigen::Index>(n), lo), Vector::Constant(static_cast<Eigen::Index>(n), hi)};
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& corpus_names() {
  static const std::vector<std::string> names{"fig31", "example_near_vs_steepest", "abs1d", "quad", "diamond",
                                              "maxaffine"};
  return names;
}

inline CorpusEntry corpus(const std::string& name, std::uint64_t maxaffine_seed = 7) {
  using detail::vec;
  if (name == "fig31") {
    CorpusEntry e{name, "max(x+y, |x-y|) + x(x+1) + y(y+1) + 100",
                  parse_expr("max(x1+x2, abs(x1-x2)) + x1*(x1+1) + x2*(x2+1) + 100", 2), detail::box(2, -2, 2),
                  {vec({0, 0}), vec({0.8, -0.6}), vec({-1, 1})}};
    e.min_value = 99.5;
    e.minimizer = vec({-0.5, -0.5});
    e.convex = true;
    return e;
  }
  if (name == "example_near_vs_steepest") {
    CorpusEntry e{name, "-x + min(y, 0): unbounded below, min-type tie along y = 0",
                  parse_expr("-x1 + min(x2, 0)", 2), detail::box(2, -2, 2),
                  {vec({0, 0.5}), vec({0.5, 1}), vec({-1, 0.25})}};
    e.bounded_below = false;
    std::vector<double> knots;
    std::vector<Vector> pts;
    for (int i = 0; i <= 100; ++i) {
      knots.push_back(i / 100.0);
      pts.push_back(vec({i / 100.0, 0.0}));
    }
    e.reference_curve = SampledCurve(std::move(knots), std::move(pts), ParamTag::arclength);
    e.expectations = {{"near_steepest", Verdict::pass}, {"steepest", Verdict::fail}};
    e.reference_tol = 1e-6;
    return e;
  }
  if (name == "abs1d") {
    CorpusEntry e{name, "|x|", parse_expr("max(x1, -x1)", 1), detail::box(1, -2, 2),
                  {vec({1}), vec({-1.5}), vec({0.3})}};
    e.eta = 0.9;
    e.min_value = 0.0;
    e.minimizer = vec({0});
    e.convex = true;
    return e;
  }
  if (name == "quad") {
    CorpusEntry e{name, "|x|^2", parse_expr("x1^2 + x2^2", 2), detail::box(2, -2, 2),
                  {vec({1, 0.5}), vec({-1.2, 0.8}), vec({0.3, -1.5})}};
    e.eta = 1.0;
    e.min_value = 0.0;
    e.minimizer = vec({0, 0});
    e.convex = true;
    return e;
  }
  if (name == "diamond") {
    CorpusEntry e{name, "max(|x|, |y|) + (x^2 + y^2)/2",
                  parse_expr("max(abs(x1), abs(x2)) + 0.5*x1^2 + 0.5*x2^2", 2), detail::box(2, -2, 2),
                  {vec({1, 0.3}), vec({-0.4, 1.2}), vec({0.5, -0.5})}};
    e.eta = 1.0;
    e.min_value = 0.0;
    e.minimizer = vec({0, 0});
    e.convex = true;
    return e;
  }
  if (name == "maxaffine") {
    MaxAffineData d = maxaffine_data(maxaffine_seed);
    CorpusEntry e{name, "max of five seeded affine functions on R^3", maxaffine_function(d), detail::box(3, -1, 1),
                  {vec({0.8, -0.5, 0.3}), vec({-0.6, 0.7, -0.2}), vec({0.1, 0.1, 0.9})}};
    e.min_value = d.min_value;
    e.minimizer = d.minimizer;
    e.convex = true;
    e.search_radius = 4.0;
    // Piecewise linear, so Euler is exact between events; the slow final
    // edge toward the minimizer needs a long horizon.
    e.flow_h = 1e-2;
    e.flow_T = 150.0;
    e.min_slope = 0.25;
    e.eta = std::min(0.5 * (e.f(e.starts.front()) - d.min_value), 0.9);
    return e;
  }
  throw Error("unknown corpus function '" + name + "'");
}

/// Uniform points of the region from the given seed.
inline std::vector<Vector> random_starts(const Region& region, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vector> out;
  for (std::size_t i = 0; i < count; ++i) {
    Vector p(region.dim());
    for (Eigen::Index j = 0; j < region.dim(); ++j) {
      p[j] = region.lo[j] + detail::unit_uniform(rng) * (region.hi[j] - region.lo[j]);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace slopeflow
