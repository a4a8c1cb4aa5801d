#include <gtest/gtest.h>

#include <random>

#include "slopeflow/harness/corpus.hpp"

using namespace slopeflow;

namespace {

const char* kFig = "max(x1+x2, abs(x1-x2)) + x1*(x1+1) + x2*(x2+1) + 100";
const char* kExample = "-x1 + min(x2, 0)";

Vector v2(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

// Hand-written evaluations used as oracles.
double fig_direct(const Vector& x) {
  double a = x[0], b = x[1];
  return std::max(a + b, std::abs(a - b)) + a * (a + 1) + b * (b + 1) + 100;
}

double example_direct(const Vector& x) { return -x[0] + std::min(x[1], 0.0); }

// Brute-force value: the extremum structure re-evaluated from every full
// selection. For a max at the root of each kink, f equals max over
// selections of the selected value, for min the min; mixed trees need the
// nested rule, so this oracle only handles functions whose extremum nodes are
// all of one kind.
double selection_extreme(const FuncExpr& f, const Vector& x, bool is_max) {
  double best = is_max ? -1e300 : 1e300;
  for (const auto& sel : all_selections(f)) {
    SmoothPiece p{f, sel, 0.0};
    double v = piece_value(p, x);
    best = is_max ? std::max(best, v) : std::min(best, v);
  }
  return best;
}

}  // namespace

TEST(Parse, Fig31Function) {
  FuncExpr f = parse_expr(kFig, 2);
  EXPECT_EQ(f.dim(), 2u);
  for (double a : {-1.3, 0.0, 0.7}) {
    for (double b : {-0.4, 0.0, 1.9}) EXPECT_DOUBLE_EQ(f(v2(a, b)), fig_direct(v2(a, b)));
  }
}

TEST(Parse, ExampleFunction) {
  FuncExpr f = parse_expr(kExample, 2);
  for (double a : {-1.0, 0.5}) {
    for (double b : {-2.0, 0.0, 3.0}) EXPECT_DOUBLE_EQ(f(v2(a, b)), example_direct(v2(a, b)));
  }
}

TEST(Parse, SingleMonomial) {
  FuncExpr f = parse_expr("x1^2", 1);
  ASSERT_EQ(f.root().kind, NodeKind::poly);
  ASSERT_EQ(f.root().monomials.size(), 1u);
  EXPECT_EQ(f.root().monomials[0].coeff, 1.0);
  EXPECT_EQ(f.root().monomials[0].exponents, std::vector<unsigned>{2});
}

TEST(Parse, SyntaxErrorCarriesPosition) {
  try {
    parse_expr("max(x1, x2", 2);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 10u);
    EXPECT_FALSE(e.expected().empty());
  }
  EXPECT_THROW(parse_expr("x1 + * x2", 2), ParseError);
  EXPECT_THROW(parse_expr("", 1), ParseError);
  EXPECT_THROW(parse_expr("x1 $ 2", 1), ParseError);
}

TEST(Parse, NegativeExponentRejected) {
  try {
    parse_expr("x1^-2", 1);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 3u);
  }
}

TEST(Parse, DimensionMismatch) {
  EXPECT_THROW(parse_expr("x1 + x3", 2), DimensionError);
  EXPECT_THROW(parse_expr("x1", 0), DimensionError);
  FuncExpr f = parse_expr("x1 + x2", 2);
  EXPECT_THROW(f(Vector::Zero(3)), DimensionError);
}

TEST(Parse, RoundTripCorpus) {
  for (const auto& name : corpus_names()) {
    FuncExpr f = corpus(name).f;
    std::string text = print_expr(f);
    FuncExpr g = parse_expr(text, f.dim());
    EXPECT_TRUE(f == g) << name << ": " << text;
    EXPECT_EQ(print_expr(g), text) << name;
  }
}

TEST(Parse, RoundTripIgnoresWhitespace) {
  FuncExpr a = parse_expr("max( x1 ,x2 )+ 3*x1^2", 2);
  FuncExpr b = parse_expr("max(x1,x2)+3*x1^2", 2);
  EXPECT_TRUE(a == b);
}

TEST(Eval, Examples) {
  FuncExpr fig = parse_expr(kFig, 2);
  EXPECT_DOUBLE_EQ(fig(v2(0, 0)), 100.0);
  EXPECT_DOUBLE_EQ(fig(v2(-0.5, -0.5)), 99.5);
  EXPECT_DOUBLE_EQ(parse_expr(kExample, 2)(v2(3, 0)), -3.0);
}

TEST(Eval, MatchesSelectionEnumeration) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  FuncExpr mx = parse_expr("max(x1 + x2^2, 2*x1 - x2, -x1*x2, 0.5)", 2);
  FuncExpr mn = parse_expr("min(x1^2, x2 - 1, x1*x2)", 2);
  FuncExpr aff = corpus("maxaffine").f;
  for (int i = 0; i < 200; ++i) {
    Vector x = v2(u(rng), u(rng));
    EXPECT_EQ(mx(x), selection_extreme(mx, x, true));
    EXPECT_EQ(mn(x), selection_extreme(mn, x, false));
    Vector y(3);
    y << u(rng), u(rng), u(rng);
    EXPECT_EQ(aff(y), selection_extreme(aff, y, true));
  }
}

TEST(ActivePieces, Examples) {
  FuncExpr fig = parse_expr(kFig, 2);
  auto at0 = active_pieces(fig, v2(0, 0), 0.0);
  ASSERT_EQ(at0.size(), 3u);
  std::vector<Vector> grads;
  for (const auto& p : at0) grads.push_back(piece_gradient(p, v2(0, 0)));
  auto has = [&](double a, double b) {
    return std::any_of(grads.begin(), grads.end(), [&](const Vector& g) { return (g - v2(a, b)).norm() < 1e-15; });
  };
  EXPECT_TRUE(has(2, 2));
  EXPECT_TRUE(has(2, 0));
  EXPECT_TRUE(has(0, 2));

  FuncExpr ex = parse_expr(kExample, 2);
  auto tie = active_pieces(ex, v2(0.3, 0), 0.0);
  ASSERT_EQ(tie.size(), 2u);
  bool saw_branch = false;
  for (const auto& p : tie) {
    if ((piece_gradient(p, v2(0.3, 0)) - v2(-1, 1)).norm() == 0.0) saw_branch = true;
  }
  EXPECT_TRUE(saw_branch);
  auto off = active_pieces(ex, v2(0.3, 1), 0.0);
  ASSERT_EQ(off.size(), 1u);
  EXPECT_EQ(piece_gradient(off[0], v2(0.3, 1)), v2(-1, 0));
}

TEST(ActivePieces, ValuesMatchFunction) {
  FuncExpr fig = parse_expr(kFig, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    Vector x = v2(u(rng), u(rng));
    for (const auto& p : active_pieces(fig, x, 1e-6)) {
      EXPECT_NEAR(piece_value(p, x), fig(x), 1e-6 * 4 * (1 + std::abs(fig(x))));
      EXPECT_GE(p.validity_radius, 0.0);
    }
  }
  EXPECT_THROW(active_pieces(fig, v2(0, 0), -1.0), PreconditionError);
}

TEST(PieceGradient, MatchesCentralDifferences) {
  std::vector<FuncExpr> fs{parse_expr(kFig, 2), parse_expr("max(x1^3 - x2, x1*x2 + 1) + min(x2^2, x1 + 3)", 2),
                           parse_expr("abs(x1^2 - x2) * 2 + x1", 2)};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const double h = 1e-5;
  int checked = 0;
  for (const auto& f : fs) {
    for (int i = 0; i < 100; ++i) {
      Vector x = v2(u(rng), u(rng));
      auto pieces = active_pieces(f, x, 0.0);
      if (pieces.size() != 1 || pieces[0].validity_radius < 10 * h) continue;
      Vector g = piece_gradient(pieces[0], x);
      for (int j = 0; j < 2; ++j) {
        Vector e = Vector::Zero(2);
        e[j] = h;
        double fd = (f(x + e) - f(x - e)) / (2 * h);
        EXPECT_NEAR(g[j], fd, 1e-6 * std::max(1.0, std::abs(fd)));
      }
      ++checked;
    }
  }
  EXPECT_GT(checked, 150);
}

TEST(FuncExpr, AffineSubstitution) {
  FuncExpr inner = parse_expr("max(x1, x2^2)", 2);
  Matrix a(2, 1);
  a << 2, -1;
  Vector b(2);
  b << 1, 0;
  FuncExpr f = FuncExpr::affine(a, b, inner);
  EXPECT_EQ(f.dim(), 1u);
  Vector x = Vector::Constant(1, 0.5);
  EXPECT_DOUBLE_EQ(f(x), std::max(2.0, 0.25));
  FuncExpr g = parse_expr(print_expr(f), 1);
  EXPECT_DOUBLE_EQ(g(x), f(x));
  EXPECT_THROW(FuncExpr::affine(Matrix::Identity(3, 1), Vector::Zero(3), inner), DimensionError);
}
