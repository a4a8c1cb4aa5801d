#pragma once

// Piecewise-linear sampled curves: metric derivative, length, arclength and
// slope-time reparametrizations, CSV persistence.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "slopeflow/subdiff.hpp"

namespace slopeflow {

enum class ParamTag { value, arclength, slope_time, flow_time };

inline std::string to_string(ParamTag tag) {
  switch (tag) {
    case ParamTag::value: return "value";
    case ParamTag::arclength: return "arclength";
    case ParamTag::slope_time: return "slope_time";
    case ParamTag::flow_time: return "flow_time";
  }
  return "value";
}

inline ParamTag param_tag_from_string(const std::string& s) {
  if (s == "value") return ParamTag::value;
  if (s == "arclength") return ParamTag::arclength;
  if (s == "slope_time") return ParamTag::slope_time;
  if (s == "flow_time") return ParamTag::flow_time;
  throw Error("unknown parametrization tag '" + s + "'");
}

/// Curve through points[i] at knots[i], linear in between. At least two
/// knots, strictly increasing, all coordinates finite.
class SampledCurve {
 public:
  SampledCurve(std::vector<double> knots, std::vector<Vector> points, ParamTag tag)
      : knots_(std::move(knots)), points_(std::move(points)), tag_(tag) {
    if (knots_.size() < 2) throw DomainError("a sampled curve needs at least two knots");
    if (knots_.size() != points_.size()) throw DimensionError("knot and point counts differ");
    const auto dim = points_.front().size();
    for (std::size_t i = 0; i < knots_.size(); ++i) {
      if (!std::isfinite(knots_[i])) throw DomainError("non-finite knot");
      if (i > 0 && !(knots_[i] > knots_[i - 1])) throw DomainError("knots must be strictly increasing");
      if (points_[i].size() != dim) throw DimensionError("curve points disagree on dimension");
      if (!points_[i].allFinite()) throw DomainError("non-finite curve point");
    }
  }

  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<Vector>& points() const noexcept { return points_; }
  ParamTag tag() const noexcept { return tag_; }
  std::size_t size() const noexcept { return knots_.size(); }
  std::size_t segments() const noexcept { return knots_.size() - 1; }
  Eigen::Index dim() const noexcept { return points_.front().size(); }
  double front_knot() const noexcept { return knots_.front(); }
  double back_knot() const noexcept { return knots_.back(); }

  /// Index i of the segment [t_i, t_{i+1}] containing t; right-continuous
  /// except at the final knot.
  std::size_t segment_of(double t) const {
    if (t < knots_.front() || t > knots_.back()) throw DomainError("parameter outside the curve's domain");
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    std::size_t i = static_cast<std::size_t>(std::distance(knots_.begin(), it));
    return std::min(i == 0 ? 0 : i - 1, segments() - 1);
  }

  Vector at(double t) const {
    std::size_t i = segment_of(t);
    double w = (t - knots_[i]) / (knots_[i + 1] - knots_[i]);
    return (1.0 - w) * points_[i] + w * points_[i + 1];
  }

  double chord(std::size_t segment) const { return (points_[segment + 1] - points_[segment]).norm(); }
  double gap(std::size_t segment) const { return knots_[segment + 1] - knots_[segment]; }
  double speed(std::size_t segment) const { return chord(segment) / gap(segment); }

 private:
  std::vector<double> knots_;
  std::vector<Vector> points_;
  ParamTag tag_;
};

/// Chord speed of the segment containing t (one-sided at knots).
inline double metric_derivative(const SampledCurve& c, double t) { return c.speed(c.segment_of(t)); }

inline double curve_length(const SampledCurve& c) {
  double len = 0.0;
  for (std::size_t i = 0; i < c.segments(); ++i) len += c.chord(i);
  return len;
}

/// Knots become cumulative chord length from t_0 = 0; zero-length segments
/// are collapsed.
inline SampledCurve arclength_reparam(const SampledCurve& c) {
  std::vector<double> knots{0.0};
  std::vector<Vector> pts{c.points().front()};
  for (std::size_t i = 0; i < c.segments(); ++i) {
    double d = (c.points()[i + 1] - pts.back()).norm();
    if (d == 0.0) continue;
    double next = knots.back() + d;
    if (!(next > knots.back())) continue;
    knots.push_back(next);
    pts.push_back(c.points()[i + 1]);
  }
  if (knots.size() < 2) throw DomainError("cannot reparametrize a zero-length curve by arclength");
  return SampledCurve(std::move(knots), std::move(pts), ParamTag::arclength);
}

struct SlopeTimeOptions {
  double slope_floor = 1e-8;
  double act_tol = kDefaultActivityTol;
  /// Cut the curve at the first knot whose slope is below the floor instead
  /// of refusing. Used for curves that end at a critical point.
  bool truncate_at_floor = false;
};

namespace detail {

inline std::vector<double> knot_slopes(const SampledCurve& c, const FuncExpr& f, const SlopeTimeOptions& opt) {
  std::vector<double> s;
  s.reserve(c.size());
  for (const auto& p : c.points()) s.push_back(limiting_slope(f, p, opt.act_tol).value);
  return s;
}

}  // namespace detail

/// New knots s_i = integral of 1 / limiting slope along c, by the trapezoid
/// rule with the slope evaluated at the knots. The first knot is kept.
inline SampledCurve slope_time_reparam(const SampledCurve& c, const FuncExpr& f,
                                       const SlopeTimeOptions& opt = {}) {
  std::vector<double> slopes = detail::knot_slopes(c, f, opt);
  std::size_t keep = c.size();
  for (std::size_t i = 0; i < slopes.size(); ++i) {
    if (!(slopes[i] > opt.slope_floor)) {
      if (!opt.truncate_at_floor || i < 2) throw SlopeFloorError(i, slopes[i]);
      keep = i;
      break;
    }
  }
  std::vector<double> knots{c.knots().front()};
  std::vector<Vector> pts{c.points().front()};
  for (std::size_t i = 1; i < keep; ++i) {
    double dt = c.knots()[i] - c.knots()[i - 1];
    knots.push_back(knots.back() + 0.5 * (1.0 / slopes[i - 1] + 1.0 / slopes[i]) * dt);
    pts.push_back(c.points()[i]);
  }
  return SampledCurve(std::move(knots), std::move(pts), ParamTag::slope_time);
}

/// Undoes slope_time_reparam given the original parametrization's tag.
inline SampledCurve slope_time_inverse(const SampledCurve& c, const FuncExpr& f, ParamTag original,
                                       const SlopeTimeOptions& opt = {}) {
  std::vector<double> slopes = detail::knot_slopes(c, f, opt);
  for (std::size_t i = 0; i < slopes.size(); ++i) {
    if (!(slopes[i] > opt.slope_floor)) throw SlopeFloorError(i, slopes[i]);
  }
  std::vector<double> knots{c.knots().front()};
  for (std::size_t i = 1; i < c.size(); ++i) {
    double ds = c.knots()[i] - c.knots()[i - 1];
    knots.push_back(knots.back() + ds / (0.5 * (1.0 / slopes[i - 1] + 1.0 / slopes[i])));
  }
  return SampledCurve(std::move(knots), c.points(), original);
}

// ---------------------------------------------------------------------------
// CSV: t,x1,...,xn,f,limiting_slope,speed

inline void write_curve_csv(std::ostream& os, const SampledCurve& c, const FuncExpr& f,
                            double act_tol = kDefaultActivityTol) {
  os << "t";
  for (Eigen::Index j = 0; j < c.dim(); ++j) os << ",x" << (j + 1);
  os << ",f,limiting_slope,speed\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vector& p = c.points()[i];
    os << format_number(c.knots()[i]);
    for (Eigen::Index j = 0; j < p.size(); ++j) os << ',' << format_number(p[j]);
    double speed = c.speed(std::min(i, c.segments() - 1));
    os << ',' << format_number(f(p)) << ',' << format_number(limiting_slope(f, p, act_tol).value) << ','
       << format_number(speed) << '\n';
  }
}

inline void write_curve_csv(const std::string& path, const SampledCurve& c, const FuncExpr& f,
                            double act_tol = kDefaultActivityTol) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_curve_csv(os, c, f, act_tol);
}

/// Reads knots and points; the trailing f, slope and speed columns are
/// ignored when present.
inline SampledCurve read_curve_csv(std::istream& is, ParamTag tag) {
  std::string line;
  if (!std::getline(is, line)) throw Error("empty curve file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header.front() != "t") throw Error("curve file must start with a 't' column");
  std::size_t dim = 0;
  while (dim + 1 < header.size() && header[dim + 1] == "x" + std::to_string(dim + 1)) ++dim;
  if (dim == 0) throw Error("curve file has no coordinate columns");
  std::vector<double> knots;
  std::vector<Vector> pts;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc()) throw Error("malformed number on line " + std::to_string(row));
      vals.push_back(v);
    }
    if (vals.size() < dim + 1) throw Error("short row on line " + std::to_string(row));
    knots.push_back(vals[0]);
    Vector p(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) p[static_cast<Eigen::Index>(j)] = vals[j + 1];
    pts.push_back(std::move(p));
  }
  return SampledCurve(std::move(knots), std::move(pts), tag);
}

inline SampledCurve read_curve_csv(const std::string& path, ParamTag tag) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  return read_curve_csv(is, tag);
}

}  // namespace slopeflow
