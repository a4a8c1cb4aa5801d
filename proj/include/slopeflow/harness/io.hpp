#pragma once

// JSON views of library results and a small SVG plotter.

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "slopeflow/verify.hpp"

namespace slopeflow {

using Json = nlohmann::json;

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

/// NaN and infinities become null.
inline Json number_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const VerifyReport& r) {
  return Json{{"property", r.property},
              {"samples", r.samples},
              {"pass_fraction", number_json(r.pass_fraction)},
              {"worst_residual", number_json(r.worst_residual)},
              {"excluded_fraction", number_json(r.excluded_fraction)},
              {"verdict", to_string(r.verdict)}};
}

inline Json to_json(const StepRecord& s) {
  return Json{{"tau", s.tau},
              {"point", to_json(s.point)},
              {"f", s.value},
              {"chord", s.chord},
              {"slope_estimate", number_json(s.slope_estimate)},
              {"segment_lipschitz_cert",
               Json{{"bound", number_json(s.lipschitz_bound)}, {"holds", s.certificate_holds}}}};
}

inline Json to_json(const ErrorBoundCertificate& c) {
  return Json{{"x", to_json(c.x)},       {"alpha", c.alpha},
              {"r_est", c.r_est},        {"d_measured", c.d_measured},
              {"bound", number_json(c.bound)}, {"holds", c.holds},
              {"slab_samples", c.slab_samples}};
}

inline Json to_json(const KLReport& k) {
  Json runs = Json::array();
  for (const auto& r : k.runs) {
    runs.push_back(Json{{"start", to_json(r.start)},
                        {"endpoint", to_json(r.endpoint)},
                        {"length", r.length},
                        {"endpoint_slope", r.endpoint_slope},
                        {"stop", to_string(r.stop)},
                        {"lower_critical", r.lower_critical},
                        {"in_region", r.in_region}});
  }
  return Json{{"n_hat", k.n_hat},
              {"all_terminated", k.all_terminated},
              {"all_lower_critical", k.all_lower_critical},
              {"all_in_region", k.all_in_region},
              {"inconclusive", k.inconclusive},
              {"runs", runs}};
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << text;
  if (!os) throw Error("failed writing " + path);
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// SVG

struct PlotCurve {
  std::string label;
  const SampledCurve* curve;
};

namespace detail {

inline std::string fixed2(double v) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.2f", v);
  return buf.data();
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return colors[i % 6];
}

}  // namespace detail

/// Two variables: level curves by marching squares on a grid, curves on top.
/// One variable: the graph of f with trajectories drawn on it. More
/// variables: curves projected onto (x1, x2) without contours.
inline std::string render_svg(const FuncExpr& f, const Region& region, const std::vector<PlotCurve>& curves) {
  constexpr double W = 480.0, H = 480.0, pad = 30.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const Eigen::Index n = region.dim();
  double x0 = region.lo[0], x1 = region.hi[0];
  double y0 = 0.0, y1 = 1.0;
  std::vector<double> graph;
  if (n == 1) {
    for (int i = 0; i <= 400; ++i) graph.push_back(f(Vector::Constant(1, x0 + (x1 - x0) * i / 400.0)));
    y0 = *std::min_element(graph.begin(), graph.end());
    y1 = *std::max_element(graph.begin(), graph.end());
    if (y1 <= y0) y1 = y0 + 1.0;
  } else {
    y0 = region.lo[1];
    y1 = region.hi[1];
  }
  auto sx = [&](double x) { return detail::fixed2(pad + (x - x0) / (x1 - x0) * (W - 2 * pad)); };
  auto sy = [&](double y) { return detail::fixed2(H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)); };
  os << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << W - 2 * pad << "\" height=\"" << H - 2 * pad
     << "\" fill=\"none\" stroke=\"#999\"/>\n";

  if (n == 1) {
    os << "<polyline fill=\"none\" stroke=\"#555\" points=\"";
    for (int i = 0; i <= 400; ++i) os << sx(x0 + (x1 - x0) * i / 400.0) << ',' << sy(graph[static_cast<std::size_t>(i)]) << ' ';
    os << "\"/>\n";
  } else if (n == 2) {
    constexpr int G = 96;
    std::vector<double> vals((G + 1) * (G + 1));
    auto at = [&](int i, int j) -> double& { return vals[static_cast<std::size_t>(j * (G + 1) + i)]; };
    for (int j = 0; j <= G; ++j) {
      for (int i = 0; i <= G; ++i) {
        Vector p(2);
        p << x0 + (x1 - x0) * i / G, y0 + (y1 - y0) * j / G;
        at(i, j) = f(p);
      }
    }
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    os << "<g fill=\"none\" stroke=\"#bbb\" stroke-width=\"0.8\">\n";
    for (int l = 1; l <= 14; ++l) {
      double level = sorted[sorted.size() * static_cast<std::size_t>(l) / 15];
      os << "<path d=\"";
      for (int j = 0; j < G; ++j) {
        for (int i = 0; i < G; ++i) {
          // Corners counter-clockwise from bottom-left; edge crossings by
          // linear interpolation.
          std::array<double, 4> v{at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)};
          std::array<std::array<double, 2>, 4> c{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
          std::vector<std::array<double, 2>> hits;
          for (int e = 0; e < 4; ++e) {
            double a = v[static_cast<std::size_t>(e)], b = v[static_cast<std::size_t>((e + 1) % 4)];
            if ((a < level) != (b < level)) {
              double w = (level - a) / (b - a);
              const auto& p = c[static_cast<std::size_t>(e)];
              const auto& q = c[static_cast<std::size_t>((e + 1) % 4)];
              hits.push_back({p[0] + w * (q[0] - p[0]), p[1] + w * (q[1] - p[1])});
            }
          }
          for (std::size_t h = 0; h + 1 < hits.size(); h += 2) {
            auto X = [&](double u) { return x0 + (x1 - x0) * (i + u) / G; };
            auto Y = [&](double u) { return y0 + (y1 - y0) * (j + u) / G; };
            os << 'M' << sx(X(hits[h][0])) << ' ' << sy(Y(hits[h][1])) << 'L' << sx(X(hits[h + 1][0])) << ' '
               << sy(Y(hits[h + 1][1]));
          }
        }
      }
      os << "\"/>\n";
    }
    os << "</g>\n";
  }

  for (std::size_t k = 0; k < curves.size(); ++k) {
    const SampledCurve& c = *curves[k].curve;
    os << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << detail::palette(k) << "\" points=\"";
    std::size_t stride = std::max<std::size_t>(1, c.size() / 2000);
    for (std::size_t i = 0; i < c.size(); i += stride) {
      const Vector& p = c.points()[i];
      os << sx(p[0]) << ',' << (n == 1 ? sy(f(p)) : sy(p[1])) << ' ';
    }
    const Vector& last = c.points().back();
    os << sx(last[0]) << ',' << (n == 1 ? sy(f(last)) : sy(last[1])) << "\"/>\n";
    os << "<text x=\"" << pad + 4 << "\" y=\"" << detail::fixed2(pad + 14.0 * static_cast<double>(k + 1))
       << "\" font-size=\"11\" fill=\"" << detail::palette(k) << "\">" << curves[k].label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace slopeflow
