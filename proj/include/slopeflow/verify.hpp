#pragma once

// Sampled checks of descent-curve properties on SampledCurves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "slopeflow/descent.hpp"
#include "slopeflow/flow.hpp"

namespace slopeflow {

struct VerifyOptions {
  double tol = 1e-2;
  double act_tol = kDefaultActivityTol;
  double pass_threshold = 0.99;
  int exclusion_gaps = 2;
  /// Chain rule: allowed spread of <g, velocity> over Clarke generators.
  double spread_tol = 1e-6;
  /// Sampled slope settings for check_steepest.
  std::vector<double> radii{1e-3, 1e-4};
  int directions = 64;
  std::uint64_t seed = 0;
  /// Knot values may rise by this much and still count as nonincreasing.
  double monotone_tol = 1e-8;
};

namespace detail {

inline void require_unit_lipschitz(const SampledCurve& c, const FuncExpr& f, const VerifyOptions& opt) {
  if (c.tag() != ParamTag::arclength) {
    throw PreconditionError("curve must be arclength-parametrized, got " + to_string(c.tag()));
  }
  for (std::size_t i = 0; i < c.segments(); ++i) {
    if (c.chord(i) > c.gap(i) * (1.0 + 1e-9) + 1e-12) {
      throw PreconditionError("curve is not 1-Lipschitz on segment " + std::to_string(i));
    }
    double fa = f(c.points()[i]), fb = f(c.points()[i + 1]);
    if (fb > fa + opt.monotone_tol * (1.0 + std::abs(fa))) {
      throw PreconditionError("f increases along the curve at knot " + std::to_string(i + 1));
    }
  }
}

template <class SlopeAt>
VerifyReport steepness_report(const FuncExpr& f, const SampledCurve& c, const VerifyOptions& opt, std::string name,
                              SlopeAt slope_at) {
  require_unit_lipschitz(c, f, opt);
  auto excluded = activity_exclusions(f, c, opt.act_tol, opt.exclusion_gaps);
  SampleTally tally;
  for (std::size_t i = 0; i < c.segments(); ++i) {
    if (excluded[i]) {
      tally.exclude();
      continue;
    }
    const Vector& a = c.points()[i];
    const Vector& b = c.points()[i + 1];
    double slope = slope_at(0.5 * (a + b), i);
    double rate = std::abs(f(b) - f(a)) / c.gap(i);
    double residual = std::max(0.0, slope - rate);
    tally.add(residual <= opt.tol, residual, slope <= opt.tol && rate <= opt.tol);
  }
  return tally.finish(std::move(name), opt.pass_threshold);
}

}  // namespace detail

/// |(f o c)'| >= limiting slope - tol at segment midpoints of an arclength
/// curve.
inline VerifyReport check_near_steepest(const FuncExpr& f, const SampledCurve& c, const VerifyOptions& opt = {}) {
  return detail::steepness_report(f, c, opt, "near_steepest", [&](const Vector& p, std::size_t) {
    return limiting_slope(f, p, opt.act_tol).value;
  });
}

/// Same test against the sampled slope.
inline VerifyReport check_steepest(const FuncExpr& f, const SampledCurve& c, const VerifyOptions& opt = {}) {
  return detail::steepness_report(f, c, opt, "steepest", [&](const Vector& p, std::size_t i) {
    return sampled_slope(f, p, opt.radii, opt.directions, opt.seed + i, opt.act_tol);
  });
}

inline VerifyReport check_near_max_slope(const FuncExpr& f, const SampledCurve& c, const VerifyOptions& opt = {}) {
  MidpointCheckOptions m{opt.tol, opt.act_tol, opt.exclusion_gaps, opt.pass_threshold};
  return near_max_slope_report(f, c, m, "near_max_slope");
}

/// At midpoints, <g, chord velocity> must agree across all Clarke generators
/// g (spread <= spread_tol) and match the finite-difference derivative within
/// tol. The worst residual is the largest spread.
inline VerifyReport check_chain_rule(const FuncExpr& f, const SampledCurve& c, const VerifyOptions& opt = {}) {
  auto excluded = detail::activity_exclusions(f, c, opt.act_tol, opt.exclusion_gaps);
  SampleTally tally;
  for (std::size_t i = 0; i < c.segments(); ++i) {
    if (excluded[i]) {
      tally.exclude();
      continue;
    }
    const Vector& a = c.points()[i];
    const Vector& b = c.points()[i + 1];
    Vector vel = (b - a) / c.gap(i);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& g : clarke_subdiff(f, 0.5 * (a + b), opt.act_tol).generators()) {
      double ip = g.dot(vel);
      lo = std::min(lo, ip);
      hi = std::max(hi, ip);
    }
    double spread = hi - lo;
    double fd = (f(b) - f(a)) / c.gap(i);
    bool ok = spread <= opt.spread_tol && std::abs(0.5 * (lo + hi) - fd) <= opt.tol;
    tally.add(ok, spread, vel.norm() <= opt.tol && std::abs(fd) <= opt.tol);
  }
  return tally.finish("chain_rule", opt.pass_threshold);
}

struct SublevelNormalOptions {
  double angle_tol = 1e-3;  // radians
  /// Matches the projection solver's accuracy: a projected point sits within
  /// about dist_tol of the kinks it should touch.
  double act_tol = 1e-6;
  double critical_tol = 1e-8;
};

/// Angle between x - y and the cone generated by the limiting subdifferential
/// at y (the union of the cones of its polytopes).
inline VerifyReport check_sublevel_normal(const FuncExpr& f, const Vector& x, const Vector& y,
                                          const SublevelNormalOptions& opt = {}) {
  f.check_point(x);
  f.check_point(y);
  SubdiffSet s = limiting_subdiff(f, y, opt.act_tol);
  if (min_norm_point(s).point.norm() <= opt.critical_tol) {
    throw PreconditionError("y is lower-critical; the normal cone test does not apply");
  }
  SampleTally tally;
  Vector r = x - y;
  if (r.norm() == 0.0) {
    tally.add(true, 0.0, true);
    return tally.finish("sublevel_normal", 1.0);
  }
  double best = M_PI;
  for (const auto& p : s.polytopes) {
    Vector proj = project_onto_cone(r, p);
    best = std::min(best, std::atan2((r - proj).norm(), proj.norm()));
  }
  tally.add(best <= opt.angle_tol, best);
  return tally.finish("sublevel_normal", 1.0);
}

struct KLRun {
  Vector start;
  Vector endpoint;
  double length = 0.0;
  double endpoint_slope = 0.0;
  bool terminated = false;  // stopped on the slope tolerance
  bool lower_critical = false;
  bool in_region = true;
  StopReason stop = StopReason::stationary;
};

struct KLReport {
  std::vector<KLRun> runs;
  double n_hat = 0.0;  // empirical length bound: the longest run
  bool all_terminated = false;
  bool all_lower_critical = false;
  bool all_in_region = false;
  /// Some run reached T without its slope converging: the finite-length
  /// evidence is incomplete rather than contradicted.
  bool inconclusive = false;
};

inline KLRun kl_single_run(const FuncExpr& f, const Region& region, const Vector& start, FlowConfig cfg) {
  cfg.f = f;
  cfg.x0 = start;
  FlowResult fr = integrate_min_norm_flow(cfg);
  KLRun run;
  run.start = start;
  run.endpoint = fr.curve.points().back();
  run.length = curve_length(fr.curve);
  run.endpoint_slope = limiting_slope(f, run.endpoint, cfg.act_tol).value;
  run.stop = fr.stop;
  run.terminated = fr.stop == StopReason::stationary;
  run.lower_critical = run.endpoint_slope <= std::max(cfg.stop_slope, 1e-12);
  for (const auto& p : fr.curve.points()) {
    if (!region.contains(p)) {
      run.in_region = false;
      break;
    }
  }
  return run;
}

inline KLReport summarize_kl(std::vector<KLRun> runs) {
  KLReport rep;
  rep.runs = std::move(runs);
  rep.all_terminated = rep.all_lower_critical = rep.all_in_region = true;
  for (const auto& r : rep.runs) {
    rep.n_hat = std::max(rep.n_hat, r.length);
    rep.all_terminated = rep.all_terminated && r.terminated;
    rep.all_lower_critical = rep.all_lower_critical && r.lower_critical;
    rep.all_in_region = rep.all_in_region && r.in_region;
  }
  rep.inconclusive = !rep.all_terminated;
  return rep;
}

/// Min-norm flows from every start until the slope tolerance; `cfg` supplies
/// the integrator settings.
inline KLReport kl_length_report(const FuncExpr& f, const Region& region, const std::vector<Vector>& starts,
                                 const FlowConfig& cfg) {
  std::vector<KLRun> runs;
  runs.reserve(starts.size());
  for (const auto& s : starts) runs.push_back(kl_single_run(f, region, s, cfg));
  return summarize_kl(std::move(runs));
}

namespace detail {

inline std::vector<double> arclength_fractions(const SampledCurve& c, double& total) {
  std::vector<double> cum{0.0};
  for (std::size_t i = 0; i < c.segments(); ++i) cum.push_back(cum.back() + c.chord(i));
  total = cum.back();
  if (total > 0.0) {
    for (double& v : cum) v /= total;
  }
  return cum;
}

inline Vector at_fraction(const SampledCurve& c, const std::vector<double>& frac, double total, double u) {
  if (total == 0.0) return c.points().front();
  auto it = std::upper_bound(frac.begin(), frac.end(), u);
  std::size_t i = static_cast<std::size_t>(std::distance(frac.begin(), it));
  i = std::min(i == 0 ? 0 : i - 1, c.segments() - 1);
  double span = frac[i + 1] - frac[i];
  double w = span > 0.0 ? std::clamp((u - frac[i]) / span, 0.0, 1.0) : 1.0;
  return (1.0 - w) * c.points()[i] + w * c.points()[i + 1];
}

}  // namespace detail

/// Sup distance between two curves aligned by arclength fraction, sampled at
/// the union of both curves' normalized knots.
inline double compare_curves(const SampledCurve& a, const SampledCurve& b) {
  if (a.dim() != b.dim()) throw DimensionError("curves live in different dimensions");
  double la = 0.0, lb = 0.0;
  auto fa = detail::arclength_fractions(a, la);
  auto fb = detail::arclength_fractions(b, lb);
  std::vector<double> us = fa;
  us.insert(us.end(), fb.begin(), fb.end());
  double sup = 0.0;
  for (double u : us) {
    sup = std::max(sup, (detail::at_fraction(a, fa, la, u) - detail::at_fraction(b, fb, lb, u)).norm());
  }
  return sup;
}

}  // namespace slopeflow
