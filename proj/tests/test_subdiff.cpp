#include <gtest/gtest.h>

#include <random>

#include "slopeflow/slopeflow.hpp"
#include "support/oracles.hpp"

using namespace slopeflow;

namespace {

const char* kFig = "max(x1+x2, abs(x1-x2)) + x1*(x1+1) + x2*(x2+1) + 100";
const char* kExample = "-x1 + min(x2, 0)";

Vector v2(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

bool contains(const Polytope& p, const Vector& g) {
  return std::any_of(p.begin(), p.end(), [&](const Vector& h) { return (h - g).norm() < 1e-12; });
}

}  // namespace

TEST(LimitingSubdiff, ExampleTieIsUnionOfSingletons) {
  SubdiffSet s = limiting_subdiff(parse_expr(kExample, 2), v2(0.4, 0));
  ASSERT_EQ(s.polytopes.size(), 2u);
  std::vector<Vector> gens = s.generators();
  ASSERT_EQ(gens.size(), 2u);
  EXPECT_TRUE(contains(gens, v2(-1, 1)));
  EXPECT_TRUE(contains(gens, v2(-1, 0)));
  EXPECT_TRUE(s.horizon_trivial);
}

TEST(LimitingSubdiff, Fig31OriginIsOneHull) {
  SubdiffSet s = limiting_subdiff(parse_expr(kFig, 2), v2(0, 0));
  ASSERT_EQ(s.polytopes.size(), 1u);
  EXPECT_EQ(s.polytopes[0].size(), 3u);
  EXPECT_TRUE(contains(s.polytopes[0], v2(2, 2)));
  EXPECT_TRUE(contains(s.polytopes[0], v2(2, 0)));
  EXPECT_TRUE(contains(s.polytopes[0], v2(0, 2)));
}

TEST(LimitingSubdiff, SmoothZeroGradient) {
  SubdiffSet s = limiting_subdiff(parse_expr("x1^2", 1), Vector::Zero(1));
  ASSERT_EQ(s.generators().size(), 1u);
  EXPECT_EQ(s.generators()[0], Vector::Zero(1));
}

TEST(ClarkeSubdiff, Examples) {
  SubdiffSet c = clarke_subdiff(parse_expr(kExample, 2), v2(-0.2, 0));
  ASSERT_EQ(c.polytopes.size(), 1u);
  EXPECT_EQ(c.polytopes[0].size(), 2u);
  EXPECT_TRUE(contains(c.polytopes[0], v2(-1, 1)));
  EXPECT_TRUE(contains(c.polytopes[0], v2(-1, 0)));

  SubdiffSet m = clarke_subdiff(parse_expr(kFig, 2), v2(-0.5, -0.5));
  ASSERT_EQ(m.polytopes.size(), 1u);
  EXPECT_EQ(m.polytopes[0].size(), 2u);
  EXPECT_TRUE(contains(m.polytopes[0], v2(1, -1)));
  EXPECT_TRUE(contains(m.polytopes[0], v2(-1, 1)));

  SubdiffSet s = clarke_subdiff(parse_expr(kFig, 2), v2(0.3, -0.7));
  ASSERT_EQ(s.generators().size(), 1u);
}

TEST(FrechetSubdiff, EmptyAtMinTie) {
  EXPECT_TRUE(frechet_subdiff(parse_expr(kExample, 2), v2(0, 0)).empty());
  EXPECT_FALSE(frechet_subdiff(parse_expr(kFig, 2), v2(0, 0)).empty());
}

TEST(Subdiff, InclusionChain) {
  std::vector<FuncExpr> fs{parse_expr(kFig, 2), parse_expr(kExample, 2),
                           parse_expr("max(abs(x1), abs(x2)) + min(x1, x2^2)", 2)};
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  for (const auto& f : fs) {
    for (int i = 0; i < 60; ++i) {
      // Snap half of the points onto kinks.
      Vector x = v2(u(rng), u(rng));
      if (i % 3 == 0) x[1] = x[0];
      if (i % 3 == 1) x[1] = 0.0;
      SubdiffSet lim = limiting_subdiff(f, x, 1e-12);
      SubdiffSet cl = clarke_subdiff(f, x, 1e-12);
      SubdiffSet fr = frechet_subdiff(f, x, 1e-12);
      std::vector<Vector> lg = lim.generators();
      for (const auto& p : fr.polytopes) {
        for (const auto& g : p) {
          double d = 1e300;
          for (const auto& q : lim.polytopes) d = std::min(d, hull_distance(g, q));
          EXPECT_LT(d, 1e-10);
        }
      }
      for (const auto& g : lg) EXPECT_LT(hull_distance(g, cl.polytopes[0]), 1e-10);
    }
  }
}

TEST(MinNormPoint, Examples) {
  Vector v = min_norm_polytope({v2(2, 0), v2(0, 2), v2(2, 2)});
  EXPECT_NEAR((v - v2(1, 1)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(v.norm(), std::sqrt(2.0), 1e-12);
  EXPECT_EQ(min_norm_polytope({v2(3, 4)}), v2(3, 4));
  EXPECT_NEAR(min_norm_polytope({v2(-1, 0), v2(1, 0)}).norm(), 0.0, 1e-15);
  SubdiffSet empty;
  EXPECT_THROW(min_norm_point(empty), PreconditionError);
}

TEST(MinNormPoint, UnionTakesSmallestPolytope) {
  SubdiffSet s;
  s.polytopes = {{v2(-1, 1)}, {v2(-1, 0)}};
  MinNormResult r = min_norm_point(s);
  EXPECT_EQ(r.polytope, 1u);
  EXPECT_EQ(r.point, v2(-1, 0));
}

TEST(MinNormPoint, MatchesOracles) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 150; ++trial) {
    const int n = 1 + trial % 4;
    const int m = 1 + (trial / 4) % 5;
    Polytope gens;
    for (int i = 0; i < m; ++i) {
      Vector g(n);
      for (int j = 0; j < n; ++j) g[j] = u(rng);
      gens.push_back(g);
    }
    Vector v = min_norm_polytope(gens);
    Vector ref = oracle::min_norm_faces(gens);
    EXPECT_NEAR(v.norm(), ref.norm(), 1e-9) << "trial " << trial;
    EXPECT_LE(oracle::wolfe_violation(v, gens), 1e-10) << "trial " << trial;
    if (m <= 3) {
      EXPECT_LE(v.norm(), oracle::min_norm_grid(gens, 1e-3) + 1e-12);
    }
  }
}

TEST(MinNormAffine, Examples) {
  EXPECT_NEAR((min_norm_affine({v2(2, 0), v2(0, 2)}) - v2(1, 1)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((min_norm_affine({v2(3, 4)}) - v2(3, 4)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(min_norm_affine({v2(1, 0), v2(-1, 0)}).norm(), 0.0, 1e-12);
  // Rank deficient: three collinear points.
  EXPECT_NEAR((min_norm_affine({v2(1, 1), v2(2, 0), v2(3, -1)}) - v2(1, 1)).norm(), 0.0, 1e-10);
}

TEST(LimitingSlope, Examples) {
  SlopeValue ex = limiting_slope(parse_expr(kExample, 2), v2(0.6, 0));
  EXPECT_NEAR(ex.value, 1.0, 1e-15);
  EXPECT_EQ(ex.witness, v2(-1, 0));
  EXPECT_NEAR(limiting_slope(parse_expr(kFig, 2), v2(0, 0)).value, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(limiting_slope(parse_expr(kFig, 2), v2(-0.5, -0.5)).value, 0.0, 1e-15);
}

TEST(SampledSlope, Examples) {
  FuncExpr ex = parse_expr(kExample, 2);
  EXPECT_NEAR(sampled_slope(ex, v2(0, 0), {1e-3, 1e-4}, 4096, 1), std::sqrt(2.0), 1e-2);
  FuncExpr q = parse_expr("x1^2", 1);
  EXPECT_NEAR(sampled_slope(q, Vector::Constant(1, 1.0), {1e-3, 1e-4}, 16, 1), 2.0, 1e-3);
  EXPECT_EQ(sampled_slope(q, Vector::Zero(1), {1e-3, 1e-4}, 16, 1), 0.0);
  EXPECT_THROW(sampled_slope(q, Vector::Zero(1), {1e-3}, 8, 1), PreconditionError);
  EXPECT_THROW(sampled_slope(q, Vector::Zero(1), {}, 16, 1), PreconditionError);
  EXPECT_THROW(sampled_slope(q, Vector::Zero(1), {-1.0}, 16, 1), PreconditionError);
}

TEST(SampledSlope, DeterministicInSeed) {
  FuncExpr f = parse_expr(kFig, 2);
  double a = sampled_slope(f, v2(0.1, 0.2), {1e-3}, 32, 9);
  double b = sampled_slope(f, v2(0.1, 0.2), {1e-3}, 32, 9);
  EXPECT_EQ(a, b);
}

TEST(Slope, ConsistentAtSmoothPoints) {
  FuncExpr f = parse_expr(kFig, 2);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int checked = 0;
  while (checked < 50) {
    Vector x = v2(u(rng), u(rng));
    auto pieces = active_pieces(f, x, 0.0);
    if (pieces.size() != 1 || pieces[0].validity_radius < 1e-3) continue;
    double grad = piece_gradient(pieces[0], x).norm();
    EXPECT_EQ(limiting_slope(f, x).value, grad);
    EXPECT_NEAR(sampled_slope(f, x, {1e-4}, 64, static_cast<std::uint64_t>(checked)), grad, 1e-3);
    ++checked;
  }
}

TEST(LowerCritical, Examples) {
  FuncExpr fig = parse_expr(kFig, 2);
  EXPECT_TRUE(is_lower_critical(fig, v2(-0.5, -0.5), 1e-8));
  EXPECT_FALSE(is_lower_critical(fig, v2(0, 0), 1e-8));
  EXPECT_TRUE(is_lower_critical(parse_expr("x1^2", 1), Vector::Zero(1), 1e-8));
  EXPECT_THROW(is_lower_critical(fig, v2(0, 0), 0.0), PreconditionError);
}

TEST(ProjectOntoCone, Basic) {
  Polytope gens{v2(1, 0), v2(0, 1)};
  EXPECT_NEAR((project_onto_cone(v2(2, 3), gens) - v2(2, 3)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((project_onto_cone(v2(2, -3), gens) - v2(2, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(project_onto_cone(v2(-1, -1), gens).norm(), 0.0, 1e-12);
}
