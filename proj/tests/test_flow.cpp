#include <gtest/gtest.h>

#include "slopeflow/slopeflow.hpp"
#include "support/oracles.hpp"

using namespace slopeflow;

namespace {

const char* kFig = "max(x1+x2, abs(x1-x2)) + x1*(x1+1) + x2*(x2+1) + 100";

Vector v2(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

}  // namespace

TEST(FlowConfig, Validation) {
  FlowConfig cfg{parse_expr("x1^2", 1), Vector::Ones(1)};
  EXPECT_NO_THROW(cfg.validate());
  cfg.h = 0.0;
  EXPECT_THROW(cfg.validate(), PreconditionError);
  cfg.h = 1e-3;
  cfg.T = -1.0;
  EXPECT_THROW(cfg.validate(), PreconditionError);
  cfg.T = 1.0;
  cfg.event_depth = 0;
  EXPECT_THROW(cfg.validate(), PreconditionError);
  cfg.event_depth = 48;
  cfg.x0 = Vector::Ones(2);
  EXPECT_THROW(integrate_min_norm_flow(cfg), DimensionError);
}

TEST(Flow, QuadraticExponentialDecay) {
  FlowConfig cfg{parse_expr("x1^2", 1), Vector::Ones(1)};
  cfg.h = 1e-3;
  cfg.T = 1.0;
  cfg.stop_slope = 0.0;
  FlowResult r = integrate_min_norm_flow(cfg);
  EXPECT_EQ(r.stop, StopReason::time_limit);
  EXPECT_EQ(r.curve.tag(), ParamTag::flow_time);
  EXPECT_NEAR(r.curve.back_knot(), 1.0, 1e-12);
  EXPECT_NEAR(r.curve.points().back()[0], std::exp(-2.0), 2e-3);
}

TEST(Flow, Fig31RunsDownTheDiagonal) {
  FlowConfig cfg{parse_expr(kFig, 2), v2(0, 0)};
  cfg.h = 1e-3;
  cfg.T = 10.0;
  cfg.stop_slope = 1e-6;
  FlowResult r = integrate_min_norm_flow(cfg);
  EXPECT_EQ(r.stop, StopReason::stationary);
  const SampledCurve& c = r.curve;
  for (double t : {0.1, 0.5, 1.0, 2.0}) {
    Vector x = c.at(t);
    double s = oracle::diagonal_flow(0.0, t, 4000);
    EXPECT_NEAR(x[0], x[1], 1e-9) << t;
    EXPECT_NEAR(x[0], s, 2e-3) << t;
  }
  EXPECT_NEAR((c.points().back() - v2(-0.5, -0.5)).norm(), 0.0, 1e-5);
}

TEST(Flow, LowerCriticalStartIsConstant) {
  FlowConfig cfg{parse_expr(kFig, 2), v2(-0.5, -0.5)};
  FlowResult r = integrate_min_norm_flow(cfg);
  EXPECT_EQ(r.stop, StopReason::stationary);
  ASSERT_EQ(r.curve.size(), 2u);
  EXPECT_EQ(r.curve.points()[0], r.curve.points()[1]);
  VerifyReport id = flow_descent_identity(cfg.f, r.curve, 1e-2);
  EXPECT_EQ(id.verdict, Verdict::vacuous);
  EXPECT_TRUE(id.passed());
}

TEST(Flow, KinkEndpointOfAbsoluteValue) {
  FlowConfig cfg{parse_expr("max(x1, -x1)", 1), Vector::Ones(1)};
  cfg.T = 5.0;
  FlowResult r = integrate_min_norm_flow(cfg);
  EXPECT_EQ(r.stop, StopReason::stationary);
  EXPECT_NEAR(r.curve.points().back()[0], 0.0, 1e-15);
  EXPECT_NEAR(curve_length(r.curve), 1.0, 1e-12);
  EXPECT_GE(r.events, 1u);
}

TEST(Flow, StopValueLandsOnLevel) {
  FlowConfig cfg{parse_expr(kFig, 2), v2(0, 0)};
  cfg.stop_value = 99.75;
  FlowResult r = integrate_min_norm_flow(cfg);
  EXPECT_EQ(r.stop, StopReason::value_reached);
  EXPECT_NEAR(cfg.f(r.curve.points().back()), 99.75, 1e-12);
}

TEST(Flow, StepLimit) {
  FlowConfig cfg{parse_expr("x1^2", 1), Vector::Ones(1)};
  cfg.max_steps = 10;
  FlowResult r = integrate_min_norm_flow(cfg);
  EXPECT_EQ(r.stop, StopReason::step_limit);
  EXPECT_EQ(r.curve.size(), 11u);
}

TEST(Flow, MonotoneAndMinimalSelection) {
  FuncExpr f = parse_expr("max(abs(x1), abs(x2)) + 0.5*x1^2 + 0.5*x2^2 + min(x1 + 3, 2*x2 + 4)", 2);
  FlowConfig cfg{f, v2(1.2, -0.7)};
  cfg.T = 5.0;
  FlowResult r = integrate_min_norm_flow(cfg);
  const auto& pts = r.curve.points();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_LE(f(pts[i]), f(pts[i - 1]) + 1e-14 * (1 + std::abs(f(pts[i - 1])))) << i;
  }
  for (std::size_t i = 0; i < pts.size(); i += 37) {
    SubdiffSet s = limiting_subdiff(f, pts[i], cfg.act_tol);
    MinNormResult m = min_norm_point(s);
    EXPECT_LE(oracle::wolfe_violation(m.point, s.polytopes[m.polytope]), 1e-10);
    for (const auto& p : s.polytopes) EXPECT_GE(oracle::min_norm_faces(p).norm(), m.point.norm() - 1e-12);
  }
}

TEST(Flow, EnergyIdentityOnSmoothStretches) {
  FuncExpr f = parse_expr(kFig, 2);
  FlowConfig cfg{f, v2(0.8, -0.6)};
  cfg.T = 3.0;
  FlowResult r = integrate_min_norm_flow(cfg);
  const SampledCurve& c = r.curve;
  // Split at activity changes; on each stretch compare the drop in f with the
  // trapezoidal integral of |v|^2.
  std::size_t begin = 0;
  auto sig = [&](std::size_t i) { return detail::active_signature(f, c.points()[i], cfg.act_tol); };
  double max_v2 = 0.0;
  for (const auto& p : c.points()) max_v2 = std::max(max_v2, std::pow(limiting_slope(f, p, cfg.act_tol).value, 2));
  int stretches = 0;
  for (std::size_t i = 1; i <= c.size(); ++i) {
    if (i < c.size() && sig(i) == sig(begin)) continue;
    std::size_t end = i - 1;
    if (end > begin + 2) {
      double integral = 0.0;
      for (std::size_t j = begin; j < end; ++j) {
        double a = limiting_slope(f, c.points()[j], cfg.act_tol).value;
        double b = limiting_slope(f, c.points()[j + 1], cfg.act_tol).value;
        integral += 0.5 * (a * a + b * b) * c.gap(j);
      }
      double drop = f(c.points()[begin]) - f(c.points()[end]);
      EXPECT_NEAR(drop, integral, 10 * cfg.h * cfg.T * max_v2);
      ++stretches;
    }
    begin = i;
  }
  EXPECT_GE(stretches, 1);
}

TEST(FlowDescentIdentity, Examples) {
  FlowConfig q{parse_expr("x1^2", 1), Vector::Ones(1)};
  q.h = 1e-4;
  q.T = 2.0;
  FlowResult rq = integrate_min_norm_flow(q);
  VerifyReport a = flow_descent_identity(q.f, rq.curve, 1e-3);
  EXPECT_EQ(a.verdict, Verdict::pass);
  EXPECT_GE(a.pass_fraction, 0.99);

  FlowConfig fig{parse_expr(kFig, 2), v2(0, 0)};
  FlowResult rf = integrate_min_norm_flow(fig);
  VerifyReport b = flow_descent_identity(fig.f, rf.curve, 1e-2);
  EXPECT_EQ(b.verdict, Verdict::pass);
  EXPECT_GE(b.pass_fraction, 0.99);
  EXPECT_EQ(b.property, "flow_descent_identity");
}

TEST(FlowDescentIdentity, DetectsWrongSpeed) {
  // Twice the flow speed along x1^2.
  FuncExpr f = parse_expr("x1^2", 1);
  std::vector<double> t;
  std::vector<Vector> p;
  for (int i = 0; i <= 100; ++i) {
    t.push_back(i * 0.01);
    p.push_back(Vector::Constant(1, std::exp(-4.0 * i * 0.01)));
  }
  VerifyReport r = flow_descent_identity(f, SampledCurve(t, p, ParamTag::flow_time), 1e-2);
  EXPECT_EQ(r.verdict, Verdict::fail);
}
