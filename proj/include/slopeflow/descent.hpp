#pragma once

// Near-steepest descent curves by projection onto successive sublevel sets,
// Cauchy refinement of the resulting polylines, and the Ekeland / error-bound
// certificates behind the construction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "slopeflow/geometry.hpp"
#include "slopeflow/subdiff.hpp"

namespace slopeflow {

/// Axis-aligned box.
struct Region {
  Vector lo;
  Vector hi;

  Eigen::Index dim() const { return lo.size(); }
  bool contains(const Vector& x) const {
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    }
    return true;
  }
  double diameter() const { return (hi - lo).norm(); }
};

namespace detail {

struct Ball {
  Vector center;
  double radius = std::numeric_limits<double>::infinity();

  Vector clip(const Vector& y) const {
    Vector d = y - center;
    double n = d.norm();
    if (n <= radius) return y;
    return center + d * (radius / n);
  }
};

/// Uniform double in [0, 1) from the top 53 bits of one engine draw. Spelled
/// out so that the stream is identical across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline Vector random_direction(std::mt19937_64& rng, Eigen::Index n) {
  Vector d(n);
  do {
    for (Eigen::Index i = 0; i < n; ++i) {
      // Box-Muller; one normal per pair of uniforms keeps the stream simple.
      double u1 = std::max(unit_uniform(rng), 1e-300);
      double u2 = unit_uniform(rng);
      d[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
  } while (d.norm() == 0.0);
  return d / d.norm();
}

struct MinimizeOptions {
  double eps_start = 1e-2;
  double eps_min = 1e-12;
  double stationarity_tol = 1e-13;
  int max_iter = 300;
};

/// Descent on a piecewise-smooth function inside a ball: each iteration takes
/// the minimum-norm element of the epsilon-active subdifferential (one per
/// polytope of the union), backtracks along it, and tries smaller epsilon
/// when no direction decreases the function.
inline Vector minimize_nonsmooth(const FuncExpr& phi, Vector y, const Ball& ball, const MinimizeOptions& opt = {}) {
  y = ball.clip(y);
  double fy = detail::eval_node(phi.root(), y);
  double step = 1.0;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    bool moved = false;
    for (double eps = opt.eps_start; eps >= opt.eps_min && !moved; eps *= 0.1) {
      SubdiffSet s = limiting_subdiff(phi, y, eps);
      Vector best_y;
      double best_f = fy;
      double best_t = 0.0;
      for (const auto& p : s.polytopes) {
        Vector v = min_norm_polytope(p);
        double nv = v.norm();
        if (nv <= opt.stationarity_tol) continue;
        double t = std::min(step * 4.0, 1e6);
        for (int k = 0; k < 80; ++k, t *= 0.5) {
          Vector trial = ball.clip(y - t * v);
          double moved_by = (trial - y).norm();
          if (moved_by == 0.0) break;
          double ft = detail::eval_node(phi.root(), trial);
          if (ft < fy - 1e-4 * nv * moved_by) {
            if (ft < best_f) {
              best_f = ft;
              best_y = std::move(trial);
              best_t = t;
            }
            break;
          }
        }
      }
      if (best_t > 0.0) {
        y = std::move(best_y);
        fy = best_f;
        step = best_t;
        moved = true;
      }
    }
    if (!moved) break;
  }
  return y;
}

/// |y - x|^2 + mu * max(f(y) - alpha, 0) as an expression in y.
inline FuncExpr projection_penalty(const FuncExpr& f, const Vector& x, double alpha, double mu) {
  const std::size_t n = f.dim();
  std::vector<Monomial> quad;
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<unsigned> e2(n, 0u), e1(n, 0u);
    e2[i] = 2;
    e1[i] = 1;
    double xi = x[static_cast<Eigen::Index>(i)];
    quad.push_back(Monomial{1.0, e2});
    quad.push_back(Monomial{-2.0 * xi, e1});
    c += xi * xi;
  }
  quad.push_back(Monomial{c, std::vector<unsigned>(n, 0u)});
  FuncExpr excess = FuncExpr::max({FuncExpr::sum({f, FuncExpr::constant(n, -alpha)}), FuncExpr::constant(n, 0.0)});
  return FuncExpr::sum({FuncExpr::poly(n, std::move(quad)), FuncExpr::scale(mu, excess)});
}

}  // namespace detail

struct ProjectionTolerances {
  double feasibility = 1e-8;
  double distance = 1e-6;
};

/// One run of the sublevel-projection construction.
struct DescentRun {
  DescentRun(FuncExpr fn, Vector start) : f(std::move(fn)), x0(std::move(start)) {}

  FuncExpr f;
  Vector x0;
  double eta = 0.0;          // total value decrease
  int k = 1;                 // partition count
  ProjectionTolerances tol;
  int restarts = 4;
  double search_radius = 2.0;  // C
  double min_slope = 1.0;      // r; the run requires eta < r * C
  double slope_floor = 1e-8;
  /// Activity tolerance for slopes at points produced by the solver; matches
  /// the solver's distance accuracy rather than machine precision.
  double act_tol = 1e-6;
  std::uint64_t seed = 0;

  void validate() const {
    f.check_point(x0);
    if (!(eta > 0.0)) throw PreconditionError("eta must be positive");
    if (k < 1) throw PreconditionError("partition count must be at least 1");
    if (!(tol.feasibility > 0.0) || !(tol.distance > 0.0)) throw PreconditionError("tolerances must be positive");
    if (restarts < 1) throw PreconditionError("need at least one restart");
    if (!(search_radius > 0.0) || !(min_slope > 0.0)) throw PreconditionError("C and r must be positive");
    if (!(eta < min_slope * search_radius)) {
      throw PreconditionError("eta = " + format_number(eta) + " violates eta < r*C = " +
                              format_number(min_slope * search_radius));
    }
  }
};

struct ProjectionResult {
  Vector point;
  double distance = 0.0;
  double value = 0.0;
  int restart = 0;
};

/// A near-closest point of [f <= alpha] to x. Each restart minimizes
/// |y - x|^2 + mu (f(y) - alpha)^+ with mu growing tenfold until the minimizer
/// is nearly feasible, restores feasibility by Newton steps along the
/// minimum-norm subgradient, then bisects on the segment from x to land on
/// the level set. The feasible candidate of least distance wins, lowest
/// restart index on ties.
inline ProjectionResult project_sublevel(const FuncExpr& f, const Vector& x, double alpha, const DescentRun& run) {
  f.check_point(x);
  const double fx = f(x);
  if (!(alpha < fx)) throw PreconditionError("projection level must lie below f(x)");
  const double feas = run.tol.feasibility;
  const double target = alpha + feas;
  if (fx <= target) return ProjectionResult{x, 0.0, fx, 0};

  const detail::Ball ball{x, run.search_radius};
  const Eigen::Index n = x.size();
  std::mt19937_64 rng(run.seed);

  std::vector<Vector> starts{x};
  SlopeValue s0 = limiting_slope(f, x, run.act_tol);
  Vector newton = x;
  if (s0.value > 0.0) newton = ball.clip(x - (fx - alpha) / (s0.value * s0.value) * s0.witness);
  starts.push_back(newton);
  const double scale = std::min(run.search_radius, std::max(2.0 * (newton - x).norm(), 1e-3));
  while (static_cast<int>(starts.size()) < run.restarts) {
    Vector d = detail::random_direction(rng, n);
    double r = scale * std::pow(detail::unit_uniform(rng), 1.0 / static_cast<double>(n));
    starts.push_back(ball.clip(x + r * d));
  }

  const double loose = 1e-6 * (1.0 + std::abs(alpha));
  std::optional<ProjectionResult> best;
  double best_infeasible = std::numeric_limits<double>::infinity();
  std::string last_problem = "no feasible point found within the search radius";
  for (int i = 0; i < run.restarts; ++i) {
    Vector y = starts[static_cast<std::size_t>(i)];
    double mu = 1.0;
    bool overflow = false;
    while (true) {
      y = detail::minimize_nonsmooth(detail::projection_penalty(f, x, alpha, mu), y, ball);
      if (f(y) <= alpha + loose) break;
      mu *= 10.0;
      if (mu > 1e12) {
        overflow = true;
        break;
      }
    }
    for (int it = 0; it < 60 && f(y) > target; ++it) {
      SlopeValue s = limiting_slope(f, y, run.act_tol);
      if (!(s.value > 0.0)) break;
      y = ball.clip(y - (f(y) - alpha) / (s.value * s.value) * s.witness);
    }
    double fy = f(y);
    if (!(fy <= target)) {
      best_infeasible = std::min(best_infeasible, fy);
      if (overflow) last_problem = "penalty parameter overflow";
      continue;
    }
    // Slide back toward x onto the level set.
    double lo = 0.0, hi = 1.0;
    Vector dir = y - x;
    for (int it = 0; it < 200; ++it) {
      // Stop on the upper side of the level so the distance never
      // overshoots the true one.
      if (f(x + hi * dir) >= alpha) break;
      double mid = 0.5 * (lo + hi);
      if (!(mid > lo && mid < hi)) break;
      if (f(x + mid * dir) <= target) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    Vector p = x + hi * dir;
    double d = (p - x).norm();
    if (!best || d < best->distance) best = ProjectionResult{p, d, f(p), i};
  }
  if (!best) throw ProjectionError(last_problem + " (best value " + format_number(best_infeasible) + ")", best_infeasible);
  return *best;
}

struct StepRecord {
  double tau = 0.0;
  Vector point;
  double value = 0.0;
  double chord = 0.0;           // distance to the previous point
  double slope_estimate = 0.0;  // sampled inf of the slope over the step's slab
  double lipschitz_bound = 0.0; // (tau gap) / max(slope_estimate, floor)
  bool certificate_holds = true;
};

struct DescentResult {
  std::optional<SampledCurve> curve;  // value-parametrized
  std::vector<StepRecord> steps;      // steps[0] is the start point
  bool constant = false;              // start was lower-critical
  bool failed = false;
  std::size_t failed_step = 0;
  std::string failure;
  /// Smallest limiting slope sampled on the initial slab, and whether it
  /// reaches the user's r. Heuristic: a finite sample cannot certify an inf.
  double sampled_min_slope = 0.0;
  bool slope_bound_verified = false;
};

namespace detail {

/// Smallest limiting slope among points of the slab
/// {alpha < f <= f(from)} near `from`: the segment to `to` (closure included)
/// and random points of the ball of the given radius.
inline double slab_slope_estimate(const FuncExpr& f, const Vector& from, const Vector& to, double alpha, double radius,
                                  std::mt19937_64& rng, double act_tol, int random_samples) {
  const double top = f(from);
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= 8; ++j) {
    Vector p = from + (static_cast<double>(j) / 8.0) * (to - from);
    double fp = f(p);
    if (j == 8 || (fp > alpha && fp <= top)) best = std::min(best, limiting_slope(f, p, act_tol).value);
  }
  const Eigen::Index n = from.size();
  for (int j = 0; j < random_samples; ++j) {
    Vector d = random_direction(rng, n);
    double r = radius * std::pow(unit_uniform(rng), 1.0 / static_cast<double>(n));
    Vector p = from + r * d;
    double fp = f(p);
    if (fp > alpha && fp <= top) best = std::min(best, limiting_slope(f, p, act_tol).value);
  }
  return best;
}

}  // namespace detail

/// Polyline through x_0 = x0 and x_{i+1} = projection of x_i onto
/// [f <= f(x0) - tau_{i+1}], tau_i = eta * i / k, knots tau_i. A lower-critical
/// start gives the constant curve; a failed projection returns the partial
/// curve with the failure recorded.
inline DescentResult build_descent_polyline(const DescentRun& run) {
  run.validate();
  const FuncExpr& f = run.f;
  DescentResult out;
  const double f0 = f(run.x0);
  std::mt19937_64 rng(run.seed ^ 0x9e3779b97f4a7c15ULL);

  {
    double slab = detail::slab_slope_estimate(f, run.x0, run.x0, f0 - run.eta, run.search_radius, rng, run.act_tol, 64);
    out.sampled_min_slope = slab;
    out.slope_bound_verified = slab >= run.min_slope;
  }

  out.steps.push_back(StepRecord{0.0, run.x0, f0, 0.0, 0.0, 0.0, true});
  if (is_lower_critical(f, run.x0, run.slope_floor, run.act_tol)) {
    out.constant = true;
    out.curve = SampledCurve({0.0, run.eta}, {run.x0, run.x0}, ParamTag::value);
    out.steps.push_back(StepRecord{run.eta, run.x0, f0, 0.0, 0.0, 0.0, true});
    return out;
  }

  std::vector<double> knots{0.0};
  std::vector<Vector> pts{run.x0};
  const double lambda_c = run.search_radius / static_cast<double>(run.k);
  for (int j = 0; j < run.k; ++j) {
    const double tau_next = run.eta * static_cast<double>(j + 1) / static_cast<double>(run.k);
    const double gap = tau_next - knots.back();
    const double alpha = f0 - tau_next;
    const Vector& xj = pts.back();
    Vector next;
    if (f(xj) <= alpha) {
      next = xj;
    } else {
      try {
        next = project_sublevel(f, xj, alpha, run).point;
      } catch (const Error& e) {
        out.failed = true;
        out.failed_step = static_cast<std::size_t>(j);
        out.failure = e.what();
        break;
      }
    }
    StepRecord rec;
    rec.tau = tau_next;
    rec.point = next;
    rec.value = f(next);
    rec.chord = (next - xj).norm();
    rec.slope_estimate = detail::slab_slope_estimate(f, xj, next, alpha, lambda_c, rng, run.act_tol, 8);
    rec.lipschitz_bound = gap / std::max(rec.slope_estimate, run.slope_floor);
    rec.certificate_holds = rec.chord <= rec.lipschitz_bound * (1.0 + 1e-6);
    out.steps.push_back(rec);
    knots.push_back(tau_next);
    pts.push_back(std::move(next));
  }
  if (knots.size() >= 2) out.curve = SampledCurve(std::move(knots), std::move(pts), ParamTag::value);
  return out;
}

struct RefineLevel {
  int k = 0;
  double sup_distance = std::numeric_limits<double>::quiet_NaN();  // to the previous level
};

struct RefineResult {
  DescentResult finest;
  std::vector<RefineLevel> levels;
  bool converged = false;
  bool diverging = false;
  double last_sup = std::numeric_limits<double>::quiet_NaN();
};

/// Sup distance between two curves on a common parameter domain, evaluated
/// at the union of their knots by linear interpolation.
inline double sup_distance_common_domain(const SampledCurve& a, const SampledCurve& b) {
  std::vector<double> ts = a.knots();
  ts.insert(ts.end(), b.knots().begin(), b.knots().end());
  double lo = std::max(a.front_knot(), b.front_knot());
  double hi = std::min(a.back_knot(), b.back_knot());
  double sup = 0.0;
  for (double t : ts) {
    t = std::clamp(t, lo, hi);
    sup = std::max(sup, (a.at(t) - b.at(t)).norm());
  }
  return sup;
}

inline std::vector<int> default_k_schedule() { return {64, 128, 256, 512, 1024}; }

/// Builds the polyline for every k of the schedule with the same seed and
/// tracks the sup distance between consecutive levels. Converged when the
/// last distance is at most sup_tol; more than three consecutive increases
/// mark the sequence diverging.
inline RefineResult refine_until_cauchy(DescentRun run, const std::vector<int>& k_schedule, double sup_tol) {
  if (k_schedule.empty()) throw PreconditionError("empty refinement schedule");
  for (std::size_t i = 1; i < k_schedule.size(); ++i) {
    if (k_schedule[i] <= k_schedule[i - 1]) throw PreconditionError("refinement schedule must increase");
  }
  RefineResult out;
  std::optional<SampledCurve> previous;
  int increases = 0;
  for (int k : k_schedule) {
    run.k = k;
    DescentResult level = build_descent_polyline(run);
    RefineLevel rec{k};
    if (level.failed || !level.curve) {
      out.finest = std::move(level);
      out.levels.push_back(rec);
      return out;
    }
    if (level.constant) {
      out.finest = std::move(level);
      rec.sup_distance = 0.0;
      out.levels.push_back(rec);
      out.converged = true;
      out.last_sup = 0.0;
      return out;
    }
    if (previous) {
      rec.sup_distance = sup_distance_common_domain(*level.curve, *previous);
      if (!out.levels.empty() && std::isfinite(out.levels.back().sup_distance) &&
          rec.sup_distance > out.levels.back().sup_distance) {
        ++increases;
      } else {
        increases = 0;
      }
      out.last_sup = rec.sup_distance;
    }
    out.levels.push_back(rec);
    previous = level.curve;
    out.finest = std::move(level);
    if (increases > 3) {
      out.diverging = true;
      return out;
    }
  }
  out.converged = std::isfinite(out.last_sup) && out.last_sup <= sup_tol;
  return out;
}

// ---------------------------------------------------------------------------
// Certificates.

struct EkelandBudget {
  int max_moves = 200;
  double box_radius = 1.0;  // radius of the ball searched for inf f
  int starts = 8;
  double act_tol = kDefaultActivityTol;
  double tol = 1e-8;
  std::uint64_t seed = 0;
};

struct EkelandResult {
  Vector point;
  int moves = 0;
  double inf_estimate = 0.0;
};

/// Given f(x) <= inf f + eps on the search ball, finds u with f(u) <= f(x),
/// |u - x| <= eps / rho and 0 in the limiting subdifferential of
/// f + rho |. - u| at u, by repeatedly moving to the minimizer of
/// f(u + t d) + rho t along the steepest direction d.
inline EkelandResult ekeland_point(const FuncExpr& f, const Vector& x, double eps, double rho,
                                   const EkelandBudget& budget = {}) {
  f.check_point(x);
  if (!(eps > 0.0) || !(rho > 0.0)) throw PreconditionError("eps and rho must be positive");
  const detail::Ball ball{x, budget.box_radius};
  std::mt19937_64 rng(budget.seed);
  double inf_est = f(x);
  for (int s = 0; s < budget.starts; ++s) {
    Vector start = x;
    if (s > 0) {
      Vector d = detail::random_direction(rng, x.size());
      start = x + budget.box_radius * std::pow(detail::unit_uniform(rng), 1.0 / static_cast<double>(x.size())) * d;
    }
    inf_est = std::min(inf_est, f(detail::minimize_nonsmooth(f, start, ball)));
  }
  const double fx = f(x);
  if (fx > inf_est + eps + 1e-12 * (1.0 + std::abs(fx))) {
    throw PreconditionError("f(x) exceeds the estimated infimum by more than eps");
  }
  EkelandResult out{x, 0, inf_est};
  const double tmax = eps / rho;
  for (int move = 0; move < budget.max_moves; ++move) {
    SlopeValue s = limiting_slope(f, out.point, budget.act_tol);
    if (s.value <= rho + budget.tol) return out;
    Vector d = -s.witness / s.value;
    const Vector u = out.point;
    const double fu = f(u);
    auto psi = [&](double t) { return f(u + t * d) + rho * t; };
    double best_t = 0.0, best = fu;
    for (int j = 0; j < 60; ++j) {
      double t = tmax * std::ldexp(1.0, -j);
      double v = psi(t);
      if (v < best) {
        best = v;
        best_t = t;
      }
    }
    if (best_t == 0.0) break;
    // Golden-section refinement on [best_t / 2, min(2 best_t, tmax)].
    double a = best_t * 0.5, b = std::min(best_t * 2.0, tmax);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c1 = b - g * (b - a), c2 = a + g * (b - a);
    double p1 = psi(c1), p2 = psi(c2);
    for (int it = 0; it < 100 && b - a > 1e-15 * (1.0 + b); ++it) {
      if (p1 < p2) {
        b = c2;
        c2 = c1;
        p2 = p1;
        c1 = b - g * (b - a);
        p1 = psi(c1);
      } else {
        a = c1;
        c1 = c2;
        p1 = p2;
        c2 = a + g * (b - a);
        p2 = psi(c2);
      }
    }
    double t = p1 < p2 ? c1 : c2;
    if (std::min(p1, p2) >= best) t = best_t;
    if (!(psi(t) < fu)) break;
    out.point = u + t * d;
    ++out.moves;
  }
  throw Error("Ekeland search exhausted its budget before certifying the point");
}

struct ErrorBoundOptions {
  ProjectionTolerances tol;
  int restarts = 4;
  double search_radius = 0.0;  // 0: region diameter
  int grid_per_dim = 0;        // 0: by dimension
  std::vector<double> radii{1e-4};
  int directions = 16;
  double act_tol = 1e-6;
  std::uint64_t seed = 0;
};

struct ErrorBoundCertificate {
  Vector x;
  double alpha = 0.0;
  double r_est = 0.0;
  double d_measured = 0.0;
  double bound = 0.0;
  bool holds = false;
  std::size_t slab_samples = 0;
};

/// d(x, [f <= alpha]) against (f(x) - alpha) / r_est, with r_est the least
/// sampled slope over the slab {alpha < f <= f(x)}: a grid of the region plus
/// the segment from x to its projection, the projection included.
inline ErrorBoundCertificate error_bound_certificate(const FuncExpr& f, const Vector& x, double alpha,
                                                     const Region& region, const ErrorBoundOptions& opt = {}) {
  f.check_point(x);
  const double fx = f(x);
  if (!(alpha < fx)) throw PreconditionError("alpha must lie below f(x)");
  DescentRun run{f, x};
  run.eta = 1.0;
  run.tol = opt.tol;
  run.restarts = opt.restarts;
  run.search_radius = opt.search_radius > 0.0 ? opt.search_radius : std::max(region.diameter(), (x - region.lo).norm() + region.diameter());
  run.act_tol = opt.act_tol;
  run.seed = opt.seed;
  ProjectionResult proj = project_sublevel(f, x, alpha, run);

  const Eigen::Index n = x.size();
  int per_dim = opt.grid_per_dim > 0 ? opt.grid_per_dim : (n <= 1 ? 201 : n == 2 ? 21 : 9);
  std::vector<Vector> samples;
  std::size_t total = 1;
  for (Eigen::Index i = 0; i < n; ++i) total *= static_cast<std::size_t>(per_dim);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Vector p(n);
    std::size_t rem = idx;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::size_t c = rem % static_cast<std::size_t>(per_dim);
      rem /= static_cast<std::size_t>(per_dim);
      double w = per_dim == 1 ? 0.5 : static_cast<double>(c) / static_cast<double>(per_dim - 1);
      p[i] = region.lo[i] + w * (region.hi[i] - region.lo[i]);
    }
    double fp = f(p);
    if (fp > alpha && fp <= fx) samples.push_back(std::move(p));
  }
  for (int j = 0; j <= 16; ++j) {
    Vector p = x + (static_cast<double>(j) / 16.0) * (proj.point - x);
    double fp = f(p);
    if (j == 16 || (fp > alpha && fp <= fx)) samples.push_back(std::move(p));
  }
  if (samples.empty()) throw DomainError("slab grid is empty");

  ErrorBoundCertificate cert;
  cert.x = x;
  cert.alpha = alpha;
  cert.slab_samples = samples.size();
  cert.r_est = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    cert.r_est = std::min(cert.r_est, sampled_slope(f, samples[i], opt.radii, opt.directions, opt.seed + i, opt.act_tol));
  }
  cert.d_measured = proj.distance;
  cert.bound = cert.r_est > 0.0 ? (fx - alpha) / cert.r_est : std::numeric_limits<double>::infinity();
  cert.holds = cert.d_measured <= cert.bound * (1.0 + 1e-6);
  return cert;
}

}  // namespace slopeflow
