#include <gtest/gtest.h>

#include "slopeflow/slopeflow.hpp"
#include "support/oracles.hpp"

using namespace slopeflow;

namespace {

const char* kFig = "max(x1+x2, abs(x1-x2)) + x1*(x1+1) + x2*(x2+1) + 100";

Vector v1(double a) { return Vector::Constant(1, a); }

Vector v2(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

double fig_direct(const Vector& x) {
  double a = x[0], b = x[1];
  return std::max(a + b, std::abs(a - b)) + a * (a + 1) + b * (b + 1) + 100;
}

DescentRun fig_run(int k) {
  DescentRun run{parse_expr(kFig, 2), v2(0, 0)};
  run.eta = 0.5;
  run.k = k;
  run.seed = 1;
  return run;
}

Region interval(double lo, double hi) { return Region{v1(lo), v1(hi)}; }

}  // namespace

TEST(DescentRun, Validation) {
  DescentRun run = fig_run(4);
  EXPECT_NO_THROW(run.validate());
  run.eta = 2.5;  // r*C = 2
  EXPECT_THROW(run.validate(), PreconditionError);
  run.eta = 0.5;
  run.k = 0;
  EXPECT_THROW(run.validate(), PreconditionError);
  run.k = 4;
  run.x0 = Vector::Zero(3);
  EXPECT_THROW(run.validate(), DimensionError);
}

TEST(ProjectSublevel, OneDimensional) {
  DescentRun run{parse_expr("max(x1, -x1)", 1), v1(3)};
  ProjectionResult a = project_sublevel(run.f, v1(3), 1.0, run);
  EXPECT_NEAR(a.point[0], 1.0, 1e-6);
  EXPECT_NEAR(a.distance, 2.0, 1e-6);
  EXPECT_LE(a.value, 1.0 + run.tol.feasibility);

  DescentRun q{parse_expr("x1^2", 1), v1(2)};
  ProjectionResult b = project_sublevel(q.f, v1(2), 1.0, q);
  EXPECT_NEAR(b.point[0], 1.0, 1e-6);
  EXPECT_THROW(project_sublevel(q.f, v1(2), 5.0, q), PreconditionError);
}

TEST(ProjectSublevel, Fig31MatchesGridOracle) {
  DescentRun run = fig_run(1);
  ProjectionResult p = project_sublevel(run.f, v2(0, 0), 99.75, run);
  Vector ref = oracle::grid_projection(fig_direct, v2(0, 0), 99.75, -1, 1, 1e-3);
  EXPECT_NEAR((p.point - ref).norm(), 0.0, 2e-3);
  EXPECT_NEAR(p.point[0], -0.1464, 1e-4);
  EXPECT_NEAR(p.point[1], -0.1464, 1e-4);
  EXPECT_LE(p.value, 99.75 + run.tol.feasibility);
  // The grid point is feasible, so it bounds the solver's distance.
  EXPECT_LE(p.distance, ref.norm() + 1e-6);
}

TEST(ProjectSublevel, InfeasibleLevelFails) {
  DescentRun run{parse_expr("x1^2 + 1", 1), v1(1)};
  try {
    project_sublevel(run.f, v1(1), 0.5, run);
    FAIL() << "expected ProjectionError";
  } catch (const ProjectionError& e) {
    EXPECT_GE(e.best_value(), 1.0);
  }
}

TEST(ProjectSublevel, DeterministicGivenSeed) {
  DescentRun run = fig_run(1);
  run.f = parse_expr("max(x1^2 - x2, x2^2 + x1) + abs(x1 + 0.3)", 2);
  run.x0 = v2(0.8, -0.6);
  double alpha = run.f(run.x0) - 0.3;
  ProjectionResult a = project_sublevel(run.f, run.x0, alpha, run);
  ProjectionResult b = project_sublevel(run.f, run.x0, alpha, run);
  EXPECT_EQ(a.point, b.point);
  EXPECT_EQ(a.restart, b.restart);
}

TEST(BuildDescentPolyline, SingleStepReachesMinimizer) {
  DescentResult r = build_descent_polyline(fig_run(1));
  ASSERT_TRUE(r.curve);
  ASSERT_EQ(r.curve->size(), 2u);
  EXPECT_EQ(r.curve->points()[0], v2(0, 0));
  EXPECT_NEAR((r.curve->points()[1] - v2(-0.5, -0.5)).norm(), 0.0, 1e-3);
}

TEST(BuildDescentPolyline, FourStepsOnDiagonal) {
  DescentRun run = fig_run(4);
  DescentResult r = build_descent_polyline(run);
  ASSERT_TRUE(r.curve);
  ASSERT_EQ(r.curve->size(), 5u);
  const double expected[] = {100, 99.875, 99.75, 99.625, 99.5};
  for (std::size_t i = 0; i < 5; ++i) {
    const Vector& p = r.curve->points()[i];
    EXPECT_NEAR(run.f(p), expected[i], 1e-6) << i;
    EXPECT_NEAR(p[0], p[1], 1e-3) << i;
    EXPECT_DOUBLE_EQ(r.curve->knots()[i], 0.125 * static_cast<double>(i));
  }
  EXPECT_EQ(r.curve->tag(), ParamTag::value);
}

TEST(BuildDescentPolyline, LowerCriticalStartIsConstant) {
  DescentRun run = fig_run(8);
  run.x0 = v2(-0.5, -0.5);
  DescentResult r = build_descent_polyline(run);
  EXPECT_TRUE(r.constant);
  ASSERT_TRUE(r.curve);
  EXPECT_EQ(r.curve->size(), 2u);
  EXPECT_EQ(r.curve->points()[0], r.curve->points()[1]);
  RefineResult rr = refine_until_cauchy(run, {64, 128}, 1e-2);
  EXPECT_TRUE(rr.converged);
  EXPECT_EQ(rr.levels.size(), 1u);
}

TEST(BuildDescentPolyline, ConstructionInvariants) {
  DescentRun run{parse_expr("max(abs(x1), abs(x2)) + 0.5*x1^2 + 0.5*x2^2", 2), v2(1, 0.3)};
  run.eta = 1.0;
  run.k = 32;
  run.seed = 4;
  DescentResult r = build_descent_polyline(run);
  ASSERT_FALSE(r.failed) << r.failure;
  const double f0 = run.f(run.x0);
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    const StepRecord& s = r.steps[i];
    EXPECT_NEAR(run.f(s.point), f0 - s.tau, run.tol.feasibility) << i;
    if (i > 0) {
      EXPECT_LE(run.f(s.point), run.f(r.steps[i - 1].point)) << i;
      EXPECT_LE(s.chord, s.lipschitz_bound * (1 + 1e-6)) << i;
      EXPECT_TRUE(s.certificate_holds) << i;
    }
  }
}

TEST(RefineUntilCauchy, Fig31Converges) {
  RefineResult rr = refine_until_cauchy(fig_run(1), {64, 128, 256}, 2e-2);
  EXPECT_TRUE(rr.converged);
  EXPECT_FALSE(rr.diverging);
  ASSERT_EQ(rr.levels.size(), 3u);
  EXPECT_TRUE(std::isnan(rr.levels[0].sup_distance));
  EXPECT_LT(rr.last_sup, 2e-2);
  // Length of the limit: the diagonal from the origin to the minimizer.
  EXPECT_NEAR(curve_length(*rr.finest.curve), std::sqrt(0.5), 2e-2);
}

TEST(RefineUntilCauchy, QuadraticClosedForm) {
  DescentRun run{parse_expr("x1^2", 1), v1(2)};
  run.eta = 3.0;
  run.min_slope = 2.0;
  RefineResult rr = refine_until_cauchy(run, {64, 128}, 1e-2);
  ASSERT_TRUE(rr.converged);
  const SampledCurve& c = *rr.finest.curve;
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(c.points()[i][0], std::sqrt(4.0 - c.knots()[i]), 1e-6) << i;
  }
}

TEST(RefineUntilCauchy, RejectsBadSchedule) {
  EXPECT_THROW(refine_until_cauchy(fig_run(1), {}, 1e-2), PreconditionError);
  EXPECT_THROW(refine_until_cauchy(fig_run(1), {128, 64}, 1e-2), PreconditionError);
}

TEST(SupDistance, Basic) {
  SampledCurve a({0.0, 1.0}, {v2(0, 0), v2(1, 0)}, ParamTag::value);
  SampledCurve b({0.0, 0.5, 1.0}, {v2(0, 0), v2(0.5, 0.25), v2(1, 0)}, ParamTag::value);
  EXPECT_NEAR(sup_distance_common_domain(a, b), 0.25, 1e-15);
  EXPECT_EQ(sup_distance_common_domain(a, a), 0.0);
}

TEST(Ekeland, MinimizerIsFixed) {
  FuncExpr f = parse_expr("x1^2", 1);
  EkelandResult r = ekeland_point(f, v1(0), 0.1, 0.5);
  EXPECT_EQ(r.point[0], 0.0);
  EXPECT_EQ(r.moves, 0);
}

TEST(Ekeland, QuadraticMatchesScan) {
  FuncExpr f = parse_expr("x1^2", 1);
  const double eps = 0.01, rho = 0.05;
  EkelandResult r = ekeland_point(f, v1(0.1), eps, rho);
  double u = r.point[0];
  EXPECT_LE(f(r.point), f(v1(0.1)));
  EXPECT_LE(std::abs(u - 0.1), eps / rho + 1e-12);
  EXPECT_LE(std::abs(2 * u), rho + 1e-8);
  // u is a local minimizer of y -> y^2 + rho |y - u|.
  double scan = oracle::scan_argmin([&](double y) { return y * y + rho * std::abs(y - u); }, u - 0.05, u + 0.05, 20000);
  EXPECT_NEAR(scan, u, 1e-5);
}

TEST(Ekeland, KinkIsFixed) {
  FuncExpr f = parse_expr("max(x1, -x1)", 1);
  for (double rho : {0.1, 0.5, 0.9}) {
    EkelandResult r = ekeland_point(f, v1(0), 0.2, rho);
    EXPECT_EQ(r.point[0], 0.0);
  }
  double scan = oracle::scan_argmin([](double y) { return std::abs(y) + 0.5 * std::abs(y); }, -1, 1, 20000);
  EXPECT_NEAR(scan, 0.0, 1e-12);
}

TEST(Ekeland, Preconditions) {
  FuncExpr f = parse_expr("x1^2", 1);
  EXPECT_THROW(ekeland_point(f, v1(1), 0.01, 0.1), PreconditionError);
  EXPECT_THROW(ekeland_point(f, v1(0), 0.0, 0.1), PreconditionError);
  EXPECT_THROW(ekeland_point(f, v1(0), 0.1, -1.0), PreconditionError);
}

TEST(ErrorBound, AbsoluteValue) {
  ErrorBoundCertificate c =
      error_bound_certificate(parse_expr("max(x1, -x1)", 1), v1(3), 1.0, interval(-4, 4));
  EXPECT_NEAR(c.r_est, 1.0, 1e-9);
  EXPECT_NEAR(c.bound, 2.0, 1e-8);
  EXPECT_NEAR(c.d_measured, 2.0, 1e-6);
  EXPECT_TRUE(c.holds);
}

TEST(ErrorBound, Linear) {
  ErrorBoundCertificate c = error_bound_certificate(parse_expr("2*x1", 1), v1(5), 0.0, interval(0, 10));
  EXPECT_NEAR(c.r_est, 2.0, 1e-9);
  EXPECT_NEAR(c.bound, 5.0, 1e-8);
  EXPECT_NEAR(c.d_measured, 5.0, 1e-6);
  EXPECT_TRUE(c.holds);
}

TEST(ErrorBound, Quadratic) {
  ErrorBoundCertificate c = error_bound_certificate(parse_expr("x1^2", 1), v1(1), 0.25, interval(-2, 2));
  EXPECT_NEAR(c.r_est, 1.0, 1e-3);
  EXPECT_NEAR(c.bound, 0.75, 1e-3);
  EXPECT_NEAR(c.d_measured, 0.5, 1e-6);
  EXPECT_TRUE(c.holds);
  EXPECT_THROW(error_bound_certificate(parse_expr("x1^2", 1), v1(1), 2.0, interval(-2, 2)), PreconditionError);
}
