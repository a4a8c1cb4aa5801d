#pragma once

// Subdifferentials of the piecewise-polynomial class as finite unions of
// polytopes, minimum-norm elements, and the slope / limiting slope.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "slopeflow/func_model.hpp"

namespace slopeflow {

/// Generator list; the polytope is its convex hull.
using Polytope = std::vector<Vector>;

enum class SubdiffKind { frechet, limiting, clarke };

struct SubdiffSet {
  std::vector<Polytope> polytopes;
  SubdiffKind kind = SubdiffKind::limiting;
  /// Always true on this function class: locally Lipschitz means the horizon
  /// subdifferential is {0}.
  bool horizon_trivial = true;
  /// Set when more than one min-type node is tied at the point; the union may
  /// then over-approximate the limiting subdifferential.
  bool superset = false;

  bool empty() const {
    return std::all_of(polytopes.begin(), polytopes.end(), [](const Polytope& p) { return p.empty(); });
  }

  std::vector<Vector> generators() const {
    std::vector<Vector> out;
    for (const auto& p : polytopes) out.insert(out.end(), p.begin(), p.end());
    return out;
  }
};

enum class SlopeKind { slope, limiting_slope };

struct SlopeValue {
  double value = 0.0;
  Vector witness;
  SlopeKind kind = SlopeKind::limiting_slope;
};

// ---------------------------------------------------------------------------
// Minimum-norm points.

/// Minimum-norm point of the affine span of the generators. Rank-deficient
/// spans resolve to the minimum-norm least-squares solution.
inline Vector min_norm_affine(const std::vector<Vector>& generators) {
  if (generators.empty()) throw PreconditionError("min_norm_affine needs at least one generator");
  const Vector& base = generators.front();
  if (generators.size() == 1) return base;
  Matrix dirs(base.size(), static_cast<Eigen::Index>(generators.size() - 1));
  for (std::size_t i = 1; i < generators.size(); ++i) {
    dirs.col(static_cast<Eigen::Index>(i - 1)) = generators[i] - base;
  }
  Vector c = dirs.completeOrthogonalDecomposition().solve(-base);
  return base + dirs * c;
}

namespace detail {

// Weights (summing to one) of the minimum-norm point of aff{pts[i] : i in set}.
inline std::vector<double> affine_weights(const std::vector<Vector>& pts, const std::vector<std::size_t>& set) {
  std::vector<double> w(set.size(), 0.0);
  if (set.size() == 1) {
    w[0] = 1.0;
    return w;
  }
  const Vector& base = pts[set[0]];
  Matrix dirs(base.size(), static_cast<Eigen::Index>(set.size() - 1));
  for (std::size_t i = 1; i < set.size(); ++i) {
    dirs.col(static_cast<Eigen::Index>(i - 1)) = pts[set[i]] - base;
  }
  Vector c = dirs.completeOrthogonalDecomposition().solve(-base);
  double rest = 1.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    w[static_cast<std::size_t>(i) + 1] = c[i];
    rest -= c[i];
  }
  w[0] = rest;
  return w;
}

inline void dedupe(Polytope& p) {
  Polytope out;
  for (auto& v : p) {
    bool dup = std::any_of(out.begin(), out.end(), [&](const Vector& u) {
      return (u - v).lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + v.lpNorm<Eigen::Infinity>());
    });
    if (!dup) out.push_back(std::move(v));
  }
  p = std::move(out);
}

}  // namespace detail

/// Wolfe's minimum-norm-point algorithm over conv(generators). Stops when the
/// duality gap |v|^2 - min_g <v, g> falls to gap_tol, or when the entering
/// generator is already in the corral. Ties break toward the lowest index.
inline Vector min_norm_polytope(const Polytope& gens, double gap_tol = 1e-10) {
  if (gens.empty()) throw PreconditionError("min_norm_point needs a nonempty polytope");
  const std::size_t m = gens.size();
  constexpr double kWeightEps = 1e-13;

  std::size_t first = 0;
  for (std::size_t i = 1; i < m; ++i) {
    if (gens[i].squaredNorm() < gens[first].squaredNorm()) first = i;
  }
  std::vector<std::size_t> corral{first};
  std::vector<double> lambda{1.0};
  Vector x = gens[first];

  const std::size_t max_iter = 10 * m * m + 10;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    std::size_t enter = 0;
    double best = x.dot(gens[0]);
    for (std::size_t i = 1; i < m; ++i) {
      double d = x.dot(gens[i]);
      if (d < best) {
        best = d;
        enter = i;
      }
    }
    if (x.squaredNorm() - best <= gap_tol) break;
    if (std::find(corral.begin(), corral.end(), enter) != corral.end()) break;
    corral.push_back(enter);
    lambda.push_back(0.0);

    for (std::size_t minor = 0; minor <= m; ++minor) {
      std::vector<double> alpha = detail::affine_weights(gens, corral);
      bool interior = std::all_of(alpha.begin(), alpha.end(), [](double a) { return a > kWeightEps; });
      if (interior) {
        lambda = std::move(alpha);
        break;
      }
      double theta = 1.0;
      for (std::size_t i = 0; i < corral.size(); ++i) {
        if (alpha[i] <= kWeightEps) {
          double denom = lambda[i] - alpha[i];
          double t = denom > 0.0 ? lambda[i] / denom : 0.0;
          theta = std::min(theta, t);
        }
      }
      for (std::size_t i = 0; i < corral.size(); ++i) lambda[i] = theta * alpha[i] + (1.0 - theta) * lambda[i];
      // Drop at least one generator: the weakest among those at or below zero.
      std::size_t drop = corral.size();
      for (std::size_t i = 0; i < corral.size(); ++i) {
        if (alpha[i] <= kWeightEps && (drop == corral.size() || lambda[i] < lambda[drop])) drop = i;
      }
      std::vector<std::size_t> keep_idx;
      std::vector<double> keep_w;
      for (std::size_t i = 0; i < corral.size(); ++i) {
        if (i == drop || lambda[i] <= kWeightEps) continue;
        keep_idx.push_back(corral[i]);
        keep_w.push_back(lambda[i]);
      }
      if (keep_idx.empty()) {
        keep_idx.push_back(corral[drop == 0 && corral.size() > 1 ? 1 : 0]);
        keep_w.push_back(1.0);
      }
      double total = 0.0;
      for (double w : keep_w) total += w;
      for (double& w : keep_w) w /= total;
      corral = std::move(keep_idx);
      lambda = std::move(keep_w);
    }
    x.setZero(gens.front().size());
    for (std::size_t i = 0; i < corral.size(); ++i) x += lambda[i] * gens[corral[i]];
  }
  return x;
}

struct MinNormResult {
  Vector point;
  std::size_t polytope = 0;
};

/// Minimum-norm element of a union: per-polytope solves, smallest norm wins,
/// earliest polytope on ties.
inline MinNormResult min_norm_point(const SubdiffSet& s) {
  MinNormResult best;
  double best_norm = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.polytopes.size(); ++i) {
    if (s.polytopes[i].empty()) continue;
    Vector v = min_norm_polytope(s.polytopes[i]);
    double nv = v.norm();
    if (nv < best_norm) {
      best_norm = nv;
      best = MinNormResult{std::move(v), i};
    }
  }
  if (!std::isfinite(best_norm)) throw PreconditionError("min_norm_point of an empty set");
  return best;
}

/// Distance from p to conv(gens).
inline double hull_distance(const Vector& p, const Polytope& gens) {
  Polytope shifted;
  shifted.reserve(gens.size());
  for (const auto& g : gens) shifted.push_back(g - p);
  return min_norm_polytope(shifted, 1e-14).norm();
}

// ---------------------------------------------------------------------------
// Structural subdifferential rules.

namespace detail {

inline std::vector<Polytope> minkowski(const std::vector<Polytope>& a, const std::vector<Polytope>& b) {
  std::vector<Polytope> out;
  for (const auto& pa : a) {
    for (const auto& pb : b) {
      Polytope s;
      s.reserve(pa.size() * pb.size());
      for (const auto& u : pa) {
        for (const auto& v : pb) s.push_back(u + v);
      }
      dedupe(s);
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct RuleContext {
  double act_tol;
  bool frechet;
  int min_ties = 0;
};

// Subdifferential of sign * n at x. For sign < 0 the roles of max and min
// swap: -max(a, b) = min(-a, -b).
inline std::vector<Polytope> subdiff_rec(const Node& n, const Vector& x, double sign, RuleContext& ctx) {
  switch (n.kind) {
    case NodeKind::poly: {
      Vector g = Vector::Zero(x.size());
      poly_gradient(n.monomials, x, sign, g);
      return {{g}};
    }
    case NodeKind::sum: {
      std::vector<Polytope> acc{{Vector::Zero(x.size())}};
      for (const auto& c : n.children) acc = minkowski(acc, subdiff_rec(*c, x, sign, ctx));
      return acc;
    }
    case NodeKind::scale: {
      if (n.factor == 0.0) return {{Vector::Zero(x.size())}};
      double s = n.factor > 0 ? sign : -sign;
      auto sets = subdiff_rec(*n.children.front(), x, s, ctx);
      double mag = std::abs(n.factor);
      for (auto& p : sets) {
        for (auto& v : p) v *= mag;
      }
      return sets;
    }
    case NodeKind::affine: {
      Vector z = n.linear * x + n.offset;
      auto sets = subdiff_rec(*n.children.front(), z, sign, ctx);
      for (auto& p : sets) {
        for (auto& v : p) v = n.linear.transpose() * v;
        dedupe(p);
      }
      return sets;
    }
    case NodeKind::max:
    case NodeKind::min: {
      std::vector<double> values;
      values.reserve(n.children.size());
      for (const auto& c : n.children) values.push_back(eval_node(*c, x));
      double node_value = n.kind == NodeKind::max ? *std::max_element(values.begin(), values.end())
                                                  : *std::min_element(values.begin(), values.end());
      std::vector<std::vector<Polytope>> active;
      for (std::size_t j = 0; j < n.children.size(); ++j) {
        if (is_active(values[j], node_value, ctx.act_tol)) {
          active.push_back(subdiff_rec(*n.children[j], x, sign, ctx));
        }
      }
      const bool hull = (n.kind == NodeKind::max) == (sign > 0);
      if (hull) {
        Polytope p;
        for (const auto& sets : active) {
          for (const auto& q : sets) p.insert(p.end(), q.begin(), q.end());
        }
        dedupe(p);
        return {p};
      }
      if (active.size() > 1) ++ctx.min_ties;
      if (!ctx.frechet) {
        std::vector<Polytope> out;
        for (auto& sets : active) {
          for (auto& q : sets) out.push_back(std::move(q));
        }
        return out;
      }
      // Inner approximation of the intersection: generators of the first
      // branch lying in every other branch's set.
      Polytope kept;
      for (const auto& q : active.front()) {
        for (const auto& g : q) {
          bool everywhere = true;
          for (std::size_t k = 1; k < active.size() && everywhere; ++k) {
            bool in_some = std::any_of(active[k].begin(), active[k].end(), [&](const Polytope& r) {
              return !r.empty() && hull_distance(g, r) <= 1e-12 * (1.0 + g.norm());
            });
            everywhere = in_some;
          }
          if (everywhere) kept.push_back(g);
        }
      }
      dedupe(kept);
      return {kept};
    }
  }
  return {};
}

}  // namespace detail

/// Limiting subdifferential by structural rules: smooth parts give their
/// gradient, a max-type tie gives the hull of the active branches, a min-type
/// tie gives their union. The result contains the limiting subdifferential
/// and lies inside the Clarke subdifferential.
inline SubdiffSet limiting_subdiff(const FuncExpr& f, const Vector& x, double act_tol = kDefaultActivityTol) {
  f.check_point(x);
  SubdiffSet s;
  s.kind = SubdiffKind::limiting;
  auto sels = detail::active_selections(f.root(), x, act_tol);
  if (sels.size() == 1) {
    // Smooth point: same arithmetic as piece_gradient.
    Vector g = Vector::Zero(x.size());
    std::size_t pos = 0;
    detail::eval_selected(f.root(), x, sels.front(), pos, &g, 1.0);
    s.polytopes = {{g}};
    return s;
  }
  detail::RuleContext ctx{act_tol, false};
  s.polytopes = detail::subdiff_rec(f.root(), x, 1.0, ctx);
  s.superset = ctx.min_ties > 1;
  return s;
}

/// Convex hull of the limiting union; a single polytope.
inline SubdiffSet clarke_subdiff(const FuncExpr& f, const Vector& x, double act_tol = kDefaultActivityTol) {
  SubdiffSet lim = limiting_subdiff(f, x, act_tol);
  SubdiffSet s;
  Polytope all = lim.generators();
  detail::dedupe(all);
  s.polytopes = {std::move(all)};
  s.kind = SubdiffKind::clarke;
  s.superset = lim.superset;
  return s;
}

/// Inner approximation of the Frechet subdifferential; may be empty (for
/// example at a min-type tie of branches with different gradients).
inline SubdiffSet frechet_subdiff(const FuncExpr& f, const Vector& x, double act_tol = kDefaultActivityTol) {
  f.check_point(x);
  detail::RuleContext ctx{act_tol, true};
  SubdiffSet s;
  s.polytopes = detail::subdiff_rec(f.root(), x, 1.0, ctx);
  std::erase_if(s.polytopes, [](const Polytope& p) { return p.empty(); });
  s.kind = SubdiffKind::frechet;
  return s;
}

// ---------------------------------------------------------------------------
// Slopes.

/// dist(0, limiting subdifferential), with the minimizing subgradient.
inline SlopeValue limiting_slope(const FuncExpr& f, const Vector& x, double act_tol = kDefaultActivityTol) {
  MinNormResult r = min_norm_point(limiting_subdiff(f, x, act_tol));
  double v = r.point.norm();
  return SlopeValue{v, std::move(r.point), SlopeKind::limiting_slope};
}

inline bool is_lower_critical(const FuncExpr& f, const Vector& x, double tol,
                              double act_tol = kDefaultActivityTol) {
  if (!(tol > 0.0)) throw PreconditionError("lower-criticality tolerance must be positive");
  return limiting_slope(f, x, act_tol).value <= tol;
}

/// Monte-Carlo estimate of the slope: the largest (f(x) - f(y))^+ / |x - y|
/// over y on spheres of the given radii, in m random directions plus the
/// coordinate axes and the negated active gradients. On convex functions
/// every sample is a lower bound of the slope.
inline double sampled_slope(const FuncExpr& f, const Vector& x, const std::vector<double>& radii, int m,
                            std::uint64_t seed, double act_tol = kDefaultActivityTol) {
  f.check_point(x);
  if (m < 16) throw PreconditionError("sampled_slope needs at least 16 directions");
  if (radii.empty()) throw PreconditionError("sampled_slope needs at least one radius");
  for (double r : radii) {
    if (!(r > 0.0)) throw PreconditionError("sampling radii must be positive");
  }
  const Eigen::Index n = x.size();
  std::vector<Vector> dirs;
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector e = Vector::Zero(n);
    e[i] = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  SubdiffSet s = limiting_subdiff(f, x, act_tol);
  for (const auto& g : s.generators()) {
    if (g.norm() > 0.0) dirs.push_back(-g / g.norm());
  }
  for (const auto& p : s.polytopes) {
    Vector v = min_norm_polytope(p);
    if (v.norm() > 0.0) dirs.push_back(-v / v.norm());
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < m; ++k) {
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) d[i] = gauss(rng);
    double nd = d.norm();
    if (nd > 0.0) dirs.push_back(d / nd);
  }
  const double fx = detail::eval_node(f.root(), x);
  double best = 0.0;
  for (double r : radii) {
    for (const auto& d : dirs) {
      Vector y = x + r * d;
      double dist = (y - x).norm();
      if (dist == 0.0) continue;
      best = std::max(best, (fx - detail::eval_node(f.root(), y)) / dist);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Cones.

/// Euclidean projection of r onto cone(gens) = {sum l_i g_i : l >= 0}
/// (Lawson-Hanson active-set NNLS).
inline Vector project_onto_cone(const Vector& r, const Polytope& gens) {
  const std::size_t m = gens.size();
  if (m == 0) return Vector::Zero(r.size());
  Matrix a(r.size(), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) a.col(static_cast<Eigen::Index>(i)) = gens[i];
  Vector l = Vector::Zero(static_cast<Eigen::Index>(m));
  std::vector<bool> passive(m, false);
  const double tol = 1e-12 * (1.0 + a.norm() * r.norm());
  auto solve_passive = [&]() {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < m; ++i) {
      if (passive[i]) idx.push_back(static_cast<Eigen::Index>(i));
    }
    Matrix sub(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = a.col(idx[j]);
    Vector s = sub.completeOrthogonalDecomposition().solve(r);
    Vector full = Vector::Zero(static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < idx.size(); ++j) full[idx[j]] = s[static_cast<Eigen::Index>(j)];
    return full;
  };
  for (std::size_t outer = 0; outer < 3 * m + 3; ++outer) {
    Vector w = a.transpose() * (r - a * l);
    Eigen::Index enter = -1;
    double best = tol;
    for (std::size_t i = 0; i < m; ++i) {
      if (!passive[i] && w[static_cast<Eigen::Index>(i)] > best) {
        best = w[static_cast<Eigen::Index>(i)];
        enter = static_cast<Eigen::Index>(i);
      }
    }
    if (enter < 0) break;
    passive[static_cast<std::size_t>(enter)] = true;
    for (std::size_t inner = 0; inner < 3 * m + 3; ++inner) {
      Vector s = solve_passive();
      bool feasible = true;
      for (std::size_t i = 0; i < m; ++i) {
        if (passive[i] && s[static_cast<Eigen::Index>(i)] <= 0.0) feasible = false;
      }
      if (feasible) {
        l = s;
        break;
      }
      double alpha = 1.0;
      for (std::size_t i = 0; i < m; ++i) {
        auto k = static_cast<Eigen::Index>(i);
        if (passive[i] && s[k] <= 0.0) alpha = std::min(alpha, l[k] / (l[k] - s[k]));
      }
      l += alpha * (s - l);
      for (std::size_t i = 0; i < m; ++i) {
        if (passive[i] && l[static_cast<Eigen::Index>(i)] <= 1e-15) {
          passive[i] = false;
          l[static_cast<Eigen::Index>(i)] = 0.0;
        }
      }
    }
  }
  return a * l;
}

}  // namespace slopeflow
