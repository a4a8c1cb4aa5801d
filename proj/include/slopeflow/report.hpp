#pragma once

// Pass/fail summaries of sampled property checks, and the activity-change
// exclusion shared by every midpoint checker.

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "slopeflow/geometry.hpp"

namespace slopeflow {

enum class Verdict { pass, fail, vacuous };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::vacuous: return "vacuous";
  }
  return "fail";
}

struct VerifyReport {
  std::string property;
  std::size_t samples = 0;
  double pass_fraction = 0.0;    // over non-excluded samples
  double worst_residual = 0.0;   // largest violation (or spread) before tolerance
  double excluded_fraction = 0.0;
  Verdict verdict = Verdict::vacuous;

  bool passed() const { return verdict != Verdict::fail; }
};

struct SampleTally {
  std::size_t total = 0;
  std::size_t excluded = 0;
  std::size_t passed = 0;
  std::size_t trivial = 0;
  double worst = 0.0;

  void exclude() {
    ++total;
    ++excluded;
  }

  /// `trivial` marks samples where both sides of the tested relation vanish.
  void add(bool ok, double residual, bool is_trivial = false) {
    ++total;
    if (ok) ++passed;
    if (is_trivial) ++trivial;
    worst = std::max(worst, residual);
  }

  VerifyReport finish(std::string property, double threshold) const {
    VerifyReport r;
    r.property = std::move(property);
    r.samples = total;
    const std::size_t counted = total - excluded;
    r.excluded_fraction = total == 0 ? 0.0 : static_cast<double>(excluded) / static_cast<double>(total);
    r.pass_fraction = counted == 0 ? 1.0 : static_cast<double>(passed) / static_cast<double>(counted);
    r.worst_residual = worst;
    if (counted == 0 || (trivial == counted && passed == counted)) {
      r.verdict = Verdict::vacuous;
    } else {
      r.verdict = r.pass_fraction >= threshold ? Verdict::pass : Verdict::fail;
    }
    return r;
  }
};

namespace detail {

inline std::vector<std::vector<std::uint32_t>> active_signature(const FuncExpr& f, const Vector& x, double act_tol) {
  auto sels = active_selections(f.root(), x, act_tol);
  std::sort(sels.begin(), sels.end());
  return sels;
}

/// Per segment: whether it lies within `gaps` knot gaps of a change of the
/// active-piece set. A change is recorded between consecutive knots whose
/// sets differ, and inside a segment whose midpoint set differs from either
/// end.
inline std::vector<bool> activity_exclusions(const FuncExpr& f, const SampledCurve& c, double act_tol, int gaps) {
  const std::size_t m = c.segments();
  std::vector<std::vector<std::vector<std::uint32_t>>> sig;
  sig.reserve(c.size());
  for (const auto& p : c.points()) sig.push_back(active_signature(f, p, act_tol));
  std::vector<bool> changed(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    if (sig[i] != sig[i + 1]) {
      changed[i] = true;
      continue;
    }
    Vector mid = 0.5 * (c.points()[i] + c.points()[i + 1]);
    if (active_signature(f, mid, act_tol) != sig[i]) changed[i] = true;
  }
  std::vector<bool> excluded(m, false);
  const auto g = static_cast<std::ptrdiff_t>(gaps);
  for (std::size_t i = 0; i < m; ++i) {
    if (!changed[i]) continue;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - g);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(m) - 1, static_cast<std::ptrdiff_t>(i) + g);
    for (auto j = lo; j <= hi; ++j) excluded[static_cast<std::size_t>(j)] = true;
  }
  return excluded;
}

}  // namespace detail

}  // namespace slopeflow
