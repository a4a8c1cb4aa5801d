#pragma once

// Minimal-norm subgradient flow x' = -v(x), v the minimum-norm limiting
// subgradient, by explicit Euler with event location at activity changes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "slopeflow/report.hpp"

namespace slopeflow {

struct FlowConfig {
  FlowConfig(FuncExpr fn, Vector start) : f(std::move(fn)), x0(std::move(start)) {}

  FuncExpr f;
  Vector x0;
  double h = 1e-3;
  double T = 10.0;
  double stop_slope = 1e-6;
  int event_depth = 48;
  double act_tol = kDefaultActivityTol;
  std::size_t max_steps = 2000000;
  /// Stop once f reaches this value; the last step is shortened to land on it.
  double stop_value = -std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;  // the integrator is deterministic; kept for the manifest

  void validate() const {
    f.check_point(x0);
    if (!(h > 0.0)) throw PreconditionError("flow step must be positive");
    if (!(T > 0.0)) throw PreconditionError("flow horizon must be positive");
    if (!(stop_slope >= 0.0)) throw PreconditionError("stop slope must be nonnegative");
    if (event_depth < 1 || event_depth > 200) throw PreconditionError("event depth must lie in [1, 200]");
  }
};

enum class StopReason { stationary, time_limit, step_limit, value_reached };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::stationary: return "stationary";
    case StopReason::time_limit: return "time_limit";
    case StopReason::step_limit: return "step_limit";
    case StopReason::value_reached: return "value_reached";
  }
  return "stationary";
}

struct FlowResult {
  SampledCurve curve;
  StopReason stop = StopReason::stationary;
  std::size_t events = 0;
  std::size_t rejected_steps = 0;
  /// Accepted states where the minimum-norm limiting and Clarke elements
  /// differ by more than 1e-9, and the largest such difference.
  std::size_t clarke_discrepancies = 0;
  double max_clarke_discrepancy = 0.0;
  double final_slope = 0.0;
};

namespace detail {

inline bool is_subset(const std::vector<std::vector<std::uint32_t>>& a,
                      const std::vector<std::vector<std::uint32_t>>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace detail

inline FlowResult integrate_min_norm_flow(const FlowConfig& cfg) {
  cfg.validate();
  const FuncExpr& f = cfg.f;
  const double dt_floor = std::ldexp(cfg.h, -cfg.event_depth);
  std::vector<double> knots{0.0};
  std::vector<Vector> pts{cfg.x0};
  FlowResult out{SampledCurve({0.0, 1.0}, {cfg.x0, cfg.x0}, ParamTag::flow_time)};
  out.stop = StopReason::time_limit;

  Vector x = cfg.x0;
  double t = 0.0;
  std::size_t steps = 0;
  while (true) {
    SubdiffSet lim = limiting_subdiff(f, x, cfg.act_tol);
    Vector v = min_norm_point(lim).point;
    if (!v.allFinite()) throw FlowError("non-finite subgradient at t = " + format_number(t));
    out.final_slope = v.norm();
    if (v.norm() <= cfg.stop_slope) {
      out.stop = StopReason::stationary;
      break;
    }
    if (t >= cfg.T * (1.0 - 1e-15)) {
      out.stop = StopReason::time_limit;
      break;
    }
    if (steps++ >= cfg.max_steps) {
      out.stop = StopReason::step_limit;
      break;
    }
    {
      SubdiffSet cl = clarke_subdiff(f, x, cfg.act_tol);
      double diff = (min_norm_point(cl).point - v).norm();
      if (diff > 1e-9) {
        ++out.clarke_discrepancies;
        out.max_clarke_discrepancy = std::max(out.max_clarke_discrepancy, diff);
      }
    }

    const double fx = f(x);
    double dt = std::min(cfg.h, cfg.T - t);
    Vector y;
    while (true) {
      y = x - dt * v;
      double fy = f(y);
      if (!std::isfinite(fy)) throw FlowError("non-finite value at t = " + format_number(t));
      if (fy <= fx + 1e-14 * (1.0 + std::abs(fx))) break;
      ++out.rejected_steps;
      dt *= 0.5;
      if (dt < dt_floor) {
        std::string where;
        for (Eigen::Index i = 0; i < x.size(); ++i) where += (i ? ", " : "") + format_number(x[i]);
        throw FlowError("step rejected below h/2^depth at t = " + format_number(t) + ", x = (" + where + ")");
      }
    }

    // Event: the piece realizing f at the trial point (exact ties only) was
    // not active at x. Locate the crossing and restart there.
    auto before = detail::active_signature(f, x, cfg.act_tol);
    if (!detail::is_subset(detail::active_signature(f, y, 0.0), before)) {
      double lo = 0.0, hi = dt;
      for (int i = 0; i < cfg.event_depth; ++i) {
        double mid = 0.5 * (lo + hi);
        if (detail::is_subset(detail::active_signature(f, x - mid * v, 0.0), before)) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      if (t + hi > t) {
        dt = hi;
        y = x - dt * v;
        ++out.events;
      }
    }
    bool reached = false;
    if (f(y) <= cfg.stop_value) {
      double lo = 0.0, hi = dt;
      for (int i = 0; i < 100 && hi - lo > 0.0; ++i) {
        double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) break;
        if (f(x - mid * v) <= cfg.stop_value) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      dt = hi;
      y = x - dt * v;
      reached = true;
    }
    t += dt;
    x = std::move(y);
    knots.push_back(t);
    pts.push_back(x);
    if (reached) {
      out.final_slope = limiting_slope(f, x, cfg.act_tol).value;
      out.stop = StopReason::value_reached;
      break;
    }
  }
  if (knots.size() == 1) {
    knots.push_back(cfg.h);
    pts.push_back(x);
  }
  out.curve = SampledCurve(std::move(knots), std::move(pts), ParamTag::flow_time);
  return out;
}

struct MidpointCheckOptions {
  double tol = 1e-2;
  double act_tol = kDefaultActivityTol;
  int exclusion_gaps = 2;
  double pass_threshold = 0.99;
};

/// Midpoint test of the near-maximal-slope conditions on a time-parametrized
/// curve: (f o c)' <= -slope^2 + tol and |speed - slope| <= tol, slope the
/// limiting slope at the midpoint.
inline VerifyReport near_max_slope_report(const FuncExpr& f, const SampledCurve& c, const MidpointCheckOptions& opt,
                                          std::string property) {
  auto excluded = detail::activity_exclusions(f, c, opt.act_tol, opt.exclusion_gaps);
  SampleTally tally;
  for (std::size_t i = 0; i < c.segments(); ++i) {
    if (excluded[i]) {
      tally.exclude();
      continue;
    }
    const Vector& a = c.points()[i];
    const Vector& b = c.points()[i + 1];
    double slope = limiting_slope(f, 0.5 * (a + b), opt.act_tol).value;
    double fd = (f(b) - f(a)) / c.gap(i);
    double speed = c.speed(i);
    double r_decay = std::max(0.0, fd + slope * slope);
    double r_speed = std::abs(speed - slope);
    double residual = std::max(r_decay, r_speed);
    bool trivial = slope <= opt.tol && speed <= opt.tol && std::abs(fd) <= opt.tol;
    tally.add(r_decay <= opt.tol && r_speed <= opt.tol, residual, trivial);
  }
  return tally.finish(std::move(property), opt.pass_threshold);
}

/// The flow's defining identity checked along its own trajectory.
inline VerifyReport flow_descent_identity(const FuncExpr& f, const SampledCurve& curve, double tol,
                                          double act_tol = kDefaultActivityTol) {
  MidpointCheckOptions opt;
  opt.tol = tol;
  opt.act_tol = act_tol;
  return near_max_slope_report(f, curve, opt, "flow_descent_identity");
}

}  // namespace slopeflow
