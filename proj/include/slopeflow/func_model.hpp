#pragma once

// Piecewise-polynomial function class: expression trees built from
// polynomials through sum, scaling, max, min, abs and affine pre-composition.
// Every member of the class is finite, locally Lipschitz and semi-algebraic,
// and each point's neighborhood splits into finitely many smooth selections.

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slopeflow/error.hpp"

namespace slopeflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Relative activity tolerance used when none is given.
inline constexpr double kDefaultActivityTol = 1e-9;

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

struct Monomial {
  double coeff = 0.0;
  std::vector<unsigned> exponents;

  friend bool operator==(const Monomial&, const Monomial&) = default;
};

enum class NodeKind { poly, sum, scale, max, min, affine };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  NodeKind kind = NodeKind::poly;
  std::size_t dim = 0;  // dimension of the node's input
  std::vector<Monomial> monomials;
  std::vector<NodePtr> children;
  double factor = 1.0;     // scale
  Matrix linear;           // affine: child(linear * x + offset)
  Vector offset;
  bool abs_sugar = false;  // max(e, -e) that was written abs(e)
};

namespace detail {

inline bool exponent_order(const Monomial& a, const Monomial& b) {
  unsigned da = 0, db = 0;
  for (unsigned e : a.exponents) da += e;
  for (unsigned e : b.exponents) db += e;
  if (da != db) return da > db;
  return a.exponents > b.exponents;
}

/// Combines like terms, drops zeros and sorts by descending degree.
inline std::vector<Monomial> canonical_monomials(std::vector<Monomial> terms) {
  std::sort(terms.begin(), terms.end(), exponent_order);
  std::vector<Monomial> out;
  for (auto& t : terms) {
    if (!out.empty() && out.back().exponents == t.exponents) {
      out.back().coeff += t.coeff;
    } else {
      out.push_back(std::move(t));
    }
  }
  std::erase_if(out, [](const Monomial& m) { return m.coeff == 0.0; });
  return out;
}

inline std::vector<Monomial> poly_product(const std::vector<Monomial>& a,
                                          const std::vector<Monomial>& b) {
  std::vector<Monomial> out;
  out.reserve(a.size() * b.size());
  for (const auto& ma : a) {
    for (const auto& mb : b) {
      Monomial m{ma.coeff * mb.coeff, ma.exponents};
      for (std::size_t i = 0; i < m.exponents.size(); ++i) m.exponents[i] += mb.exponents[i];
      out.push_back(std::move(m));
    }
  }
  return canonical_monomials(std::move(out));
}

inline bool structurally_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind || a.dim != b.dim || a.abs_sugar != b.abs_sugar) return false;
  if (a.factor != b.factor || a.monomials != b.monomials) return false;
  if (a.children.size() != b.children.size()) return false;
  if (a.kind == NodeKind::affine) {
    if (a.linear.rows() != b.linear.rows() || a.linear.cols() != b.linear.cols()) return false;
    if (a.linear != b.linear || a.offset != b.offset) return false;
  }
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!structurally_equal(*a.children[i], *b.children[i])) return false;
  }
  return true;
}

inline double monomial_value(const Monomial& m, const Vector& x) {
  double v = m.coeff;
  for (std::size_t i = 0; i < m.exponents.size(); ++i) {
    for (unsigned e = 0; e < m.exponents[i]; ++e) v *= x[static_cast<Eigen::Index>(i)];
  }
  return v;
}

inline double eval_node(const Node& n, const Vector& x) {
  switch (n.kind) {
    case NodeKind::poly: {
      double v = 0.0;
      for (const auto& m : n.monomials) v += monomial_value(m, x);
      return v;
    }
    case NodeKind::sum: {
      double v = 0.0;
      for (const auto& c : n.children) v += eval_node(*c, x);
      return v;
    }
    case NodeKind::scale:
      return n.factor * eval_node(*n.children.front(), x);
    case NodeKind::max: {
      double v = eval_node(*n.children.front(), x);
      for (std::size_t i = 1; i < n.children.size(); ++i) v = std::max(v, eval_node(*n.children[i], x));
      return v;
    }
    case NodeKind::min: {
      double v = eval_node(*n.children.front(), x);
      for (std::size_t i = 1; i < n.children.size(); ++i) v = std::min(v, eval_node(*n.children[i], x));
      return v;
    }
    case NodeKind::affine: {
      Vector z = n.linear * x + n.offset;
      return eval_node(*n.children.front(), z);
    }
  }
  return 0.0;
}

/// Adds weight * gradient of the polynomial to grad.
inline void poly_gradient(const std::vector<Monomial>& monomials, const Vector& x, double weight,
                          Vector& grad) {
  for (const auto& m : monomials) {
    for (std::size_t i = 0; i < m.exponents.size(); ++i) {
      if (m.exponents[i] == 0) continue;
      double d = m.coeff * static_cast<double>(m.exponents[i]);
      for (std::size_t j = 0; j < m.exponents.size(); ++j) {
        unsigned e = m.exponents[j] - (j == i ? 1u : 0u);
        for (unsigned k = 0; k < e; ++k) d *= x[static_cast<Eigen::Index>(j)];
      }
      grad[static_cast<Eigen::Index>(i)] += weight * d;
    }
  }
}

inline bool is_active(double child_value, double node_value, double act_tol) {
  return std::abs(child_value - node_value) <= act_tol * (1.0 + std::abs(node_value));
}

/// Evaluates the smooth composite fixed by `choices` (consumed in depth-first
/// order from `pos`) and, when grad is non-null, adds weight * gradient.
inline double eval_selected(const Node& n, const Vector& x, std::span<const std::uint32_t> choices,
                            std::size_t& pos, Vector* grad, double weight) {
  switch (n.kind) {
    case NodeKind::poly: {
      if (grad) poly_gradient(n.monomials, x, weight, *grad);
      double v = 0.0;
      for (const auto& m : n.monomials) v += monomial_value(m, x);
      return v;
    }
    case NodeKind::sum: {
      double v = 0.0;
      for (const auto& c : n.children) v += eval_selected(*c, x, choices, pos, grad, weight);
      return v;
    }
    case NodeKind::scale:
      return n.factor *
             eval_selected(*n.children.front(), x, choices, pos, grad, weight * n.factor);
    case NodeKind::max:
    case NodeKind::min: {
      if (pos >= choices.size()) throw Error("selection too short for expression");
      std::uint32_t pick = choices[pos++];
      if (pick >= n.children.size()) throw Error("selection index out of range");
      return eval_selected(*n.children[pick], x, choices, pos, grad, weight);
    }
    case NodeKind::affine: {
      Vector z = n.linear * x + n.offset;
      if (!grad) return eval_selected(*n.children.front(), z, choices, pos, nullptr, weight);
      Vector gz = Vector::Zero(z.size());
      double v = eval_selected(*n.children.front(), z, choices, pos, &gz, weight);
      *grad += n.linear.transpose() * gz;
      return v;
    }
  }
  return 0.0;
}

/// All selections whose Max/Min choices are active at x.
inline std::vector<std::vector<std::uint32_t>> active_selections(const Node& n, const Vector& x,
                                                                 double act_tol) {
  switch (n.kind) {
    case NodeKind::poly:
      return {{}};
    case NodeKind::sum: {
      std::vector<std::vector<std::uint32_t>> acc{{}};
      for (const auto& c : n.children) {
        auto part = active_selections(*c, x, act_tol);
        std::vector<std::vector<std::uint32_t>> next;
        next.reserve(acc.size() * part.size());
        for (const auto& a : acc) {
          for (const auto& p : part) {
            auto s = a;
            s.insert(s.end(), p.begin(), p.end());
            next.push_back(std::move(s));
          }
        }
        acc = std::move(next);
      }
      return acc;
    }
    case NodeKind::scale:
      return active_selections(*n.children.front(), x, act_tol);
    case NodeKind::affine: {
      Vector z = n.linear * x + n.offset;
      return active_selections(*n.children.front(), z, act_tol);
    }
    case NodeKind::max:
    case NodeKind::min: {
      std::vector<double> values;
      values.reserve(n.children.size());
      for (const auto& c : n.children) values.push_back(eval_node(*c, x));
      double node_value = n.kind == NodeKind::max
                              ? *std::max_element(values.begin(), values.end())
                              : *std::min_element(values.begin(), values.end());
      std::vector<std::vector<std::uint32_t>> out;
      for (std::uint32_t j = 0; j < n.children.size(); ++j) {
        if (!is_active(values[j], node_value, act_tol)) continue;
        for (auto& tail : active_selections(*n.children[j], x, act_tol)) {
          std::vector<std::uint32_t> s{j};
          s.insert(s.end(), tail.begin(), tail.end());
          out.push_back(std::move(s));
        }
      }
      return out;
    }
  }
  return {};
}

/// Value and gradient along the first maximizing/minimizing branch.
inline double greedy_value_gradient(const Node& n, const Vector& x, Vector& grad, double weight) {
  switch (n.kind) {
    case NodeKind::poly:
    case NodeKind::scale:
    case NodeKind::sum:
      break;
    case NodeKind::max:
    case NodeKind::min: {
      std::size_t best = 0;
      double best_value = eval_node(*n.children[0], x);
      for (std::size_t i = 1; i < n.children.size(); ++i) {
        double v = eval_node(*n.children[i], x);
        if ((n.kind == NodeKind::max && v > best_value) || (n.kind == NodeKind::min && v < best_value)) {
          best = i;
          best_value = v;
        }
      }
      return greedy_value_gradient(*n.children[best], x, grad, weight);
    }
    case NodeKind::affine: {
      Vector z = n.linear * x + n.offset;
      Vector gz = Vector::Zero(z.size());
      double v = greedy_value_gradient(*n.children.front(), z, gz, weight);
      grad += n.linear.transpose() * gz;
      return v;
    }
  }
  if (n.kind == NodeKind::poly) {
    poly_gradient(n.monomials, x, weight, grad);
    double v = 0.0;
    for (const auto& m : n.monomials) v += monomial_value(m, x);
    return v;
  }
  if (n.kind == NodeKind::scale) {
    return n.factor * greedy_value_gradient(*n.children.front(), x, grad, weight * n.factor);
  }
  double v = 0.0;
  for (const auto& c : n.children) v += greedy_value_gradient(*c, x, grad, weight);
  return v;
}

/// Smallest ratio (inactive gap) / (local gradient scale) over the Max/Min
/// nodes visited by a selection.
inline double selection_radius(const Node& n, const Vector& x, std::span<const std::uint32_t> choices,
                               std::size_t& pos, double act_tol) {
  switch (n.kind) {
    case NodeKind::poly:
      return std::numeric_limits<double>::infinity();
    case NodeKind::sum: {
      double r = std::numeric_limits<double>::infinity();
      for (const auto& c : n.children) r = std::min(r, selection_radius(*c, x, choices, pos, act_tol));
      return r;
    }
    case NodeKind::scale:
      return selection_radius(*n.children.front(), x, choices, pos, act_tol);
    case NodeKind::affine: {
      Vector z = n.linear * x + n.offset;
      double scale = std::max(n.linear.norm(), 1e-300);
      return selection_radius(*n.children.front(), z, choices, pos, act_tol) / scale;
    }
    case NodeKind::max:
    case NodeKind::min: {
      std::uint32_t pick = choices[pos++];
      double node_value = eval_node(*n.children[pick], x);
      double gap = std::numeric_limits<double>::infinity();
      double lip = 1.0;
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        Vector g = Vector::Zero(x.size());
        double v = greedy_value_gradient(*n.children[i], x, g, 1.0);
        lip = std::max(lip, g.norm());
        if (!is_active(v, node_value, act_tol)) gap = std::min(gap, std::abs(v - node_value));
      }
      double own = gap / (2.0 * lip);
      return std::min(own, selection_radius(*n.children[pick], x, choices, pos, act_tol));
    }
  }
  return 0.0;
}

}  // namespace detail

/// Immutable handle to a validated expression tree of fixed ambient dimension.
/// Construction goes through the factory functions, which canonicalize:
/// nested sums are flattened with all polynomial terms merged into one trailing
/// polynomial, scales of polynomials fold into coefficients and nested scales
/// multiply out.
class FuncExpr {
 public:
  static FuncExpr poly(std::size_t dim, std::vector<Monomial> monomials) {
    if (dim == 0) throw DimensionError("ambient dimension must be positive");
    for (const auto& m : monomials) {
      if (m.exponents.size() != dim) throw DimensionError("monomial exponent vector has wrong length");
      if (!std::isfinite(m.coeff)) throw DomainError("non-finite coefficient");
    }
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::poly;
    n->dim = dim;
    n->monomials = detail::canonical_monomials(std::move(monomials));
    return FuncExpr(std::move(n));
  }

  static FuncExpr constant(std::size_t dim, double c) {
    return poly(dim, {Monomial{c, std::vector<unsigned>(dim, 0u)}});
  }

  /// The coordinate function x_{index+1}.
  static FuncExpr variable(std::size_t dim, std::size_t index) {
    if (index >= dim) throw DimensionError("variable index exceeds dimension");
    std::vector<unsigned> e(dim, 0u);
    e[index] = 1;
    return poly(dim, {Monomial{1.0, std::move(e)}});
  }

  static FuncExpr sum(std::vector<FuncExpr> terms) {
    if (terms.empty()) throw Error("sum needs at least one term");
    const std::size_t dim = terms.front().dim();
    std::vector<NodePtr> nonpoly;
    std::vector<Monomial> merged;
    auto absorb = [&](const NodePtr& c) {
      if (c->kind == NodeKind::poly) {
        merged.insert(merged.end(), c->monomials.begin(), c->monomials.end());
      } else {
        nonpoly.push_back(c);
      }
    };
    for (const auto& t : terms) {
      if (t.dim() != dim) throw DimensionError("sum terms disagree on dimension");
      if (t.node_->kind == NodeKind::sum) {
        for (const auto& c : t.node_->children) absorb(c);
      } else {
        absorb(t.node_);
      }
    }
    FuncExpr p = poly(dim, std::move(merged));
    if (nonpoly.empty()) return p;
    if (nonpoly.size() == 1 && p.node_->monomials.empty()) return FuncExpr(nonpoly.front());
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::sum;
    n->dim = dim;
    n->children = std::move(nonpoly);
    if (!p.node_->monomials.empty()) n->children.push_back(p.node_);
    return FuncExpr(std::move(n));
  }

  static FuncExpr scale(double factor, const FuncExpr& child) {
    if (!std::isfinite(factor)) throw DomainError("non-finite scale factor");
    const Node& c = *child.node_;
    if (factor == 1.0) return child;
    if (factor == 0.0) return constant(child.dim(), 0.0);
    if (c.kind == NodeKind::poly) {
      auto terms = c.monomials;
      for (auto& m : terms) m.coeff *= factor;
      return poly(c.dim, std::move(terms));
    }
    if (c.kind == NodeKind::scale) return scale(factor * c.factor, FuncExpr(c.children.front()));
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::scale;
    n->dim = c.dim;
    n->factor = factor;
    n->children = {child.node_};
    return FuncExpr(std::move(n));
  }

  static FuncExpr max(std::vector<FuncExpr> children) { return extremum(NodeKind::max, std::move(children)); }
  static FuncExpr min(std::vector<FuncExpr> children) { return extremum(NodeKind::min, std::move(children)); }

  /// |e|, stored as max(e, -e).
  static FuncExpr abs(const FuncExpr& child) {
    FuncExpr m = max({child, scale(-1.0, child)});
    auto n = std::make_shared<Node>(*m.node_);
    n->abs_sugar = true;
    return FuncExpr(std::move(n));
  }

  /// x -> child(linear * x + offset); linear maps dim -> child.dim().
  static FuncExpr affine(Matrix linear, Vector offset, const FuncExpr& child) {
    if (static_cast<std::size_t>(linear.rows()) != child.dim() || offset.size() != linear.rows()) {
      throw DimensionError("affine map does not land in the child's dimension");
    }
    if (linear.cols() == 0) throw DimensionError("ambient dimension must be positive");
    if (!linear.allFinite() || !offset.allFinite()) throw DomainError("non-finite affine map");
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::affine;
    n->dim = static_cast<std::size_t>(linear.cols());
    n->linear = std::move(linear);
    n->offset = std::move(offset);
    n->children = {child.node_};
    return FuncExpr(std::move(n));
  }

  std::size_t dim() const noexcept { return node_->dim; }
  const Node& root() const noexcept { return *node_; }
  const NodePtr& node() const noexcept { return node_; }

  double operator()(const Vector& x) const {
    check_point(x);
    return detail::eval_node(*node_, x);
  }

  void check_point(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != dim()) {
      throw DimensionError("point has dimension " + std::to_string(x.size()) + ", function expects " +
                           std::to_string(dim()));
    }
  }

  friend bool operator==(const FuncExpr& a, const FuncExpr& b) {
    return detail::structurally_equal(*a.node_, *b.node_);
  }

  explicit FuncExpr(NodePtr node) : node_(std::move(node)) {}

 private:
  static FuncExpr extremum(NodeKind kind, std::vector<FuncExpr> children) {
    if (children.empty()) throw Error("max/min needs at least one argument");
    const std::size_t dim = children.front().dim();
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->dim = dim;
    for (const auto& c : children) {
      if (c.dim() != dim) throw DimensionError("max/min arguments disagree on dimension");
      n->children.push_back(c.node_);
    }
    return FuncExpr(std::move(n));
  }

  NodePtr node_;
};

inline double eval(const FuncExpr& f, const Vector& x) { return f(x); }

/// One smooth selection g of f near a point: the choice of branch at every
/// Max/Min node on the path, with a heuristic radius on which it stays active.
struct SmoothPiece {
  FuncExpr function;
  std::vector<std::uint32_t> selection;
  double validity_radius = 0.0;
};

inline double piece_value(const SmoothPiece& p, const Vector& x) {
  p.function.check_point(x);
  std::size_t pos = 0;
  return detail::eval_selected(p.function.root(), x, p.selection, pos, nullptr, 1.0);
}

inline Vector piece_gradient(const SmoothPiece& p, const Vector& x) {
  p.function.check_point(x);
  Vector g = Vector::Zero(x.size());
  std::size_t pos = 0;
  detail::eval_selected(p.function.root(), x, p.selection, pos, &g, 1.0);
  return g;
}

/// Every selection whose chosen children are within act_tol (relative) of
/// their parent's value at x.
inline std::vector<SmoothPiece> active_pieces(const FuncExpr& f, const Vector& x,
                                              double act_tol = kDefaultActivityTol) {
  f.check_point(x);
  if (act_tol < 0.0) throw PreconditionError("activity tolerance must be nonnegative");
  std::vector<SmoothPiece> out;
  for (auto& sel : detail::active_selections(f.root(), x, act_tol)) {
    std::size_t pos = 0;
    double radius = detail::selection_radius(f.root(), x, sel, pos, act_tol);
    out.push_back(SmoothPiece{f, std::move(sel), radius});
  }
  return out;
}

/// Every full selection, active or not (used by brute-force checks).
inline std::vector<std::vector<std::uint32_t>> all_selections(const FuncExpr& f) {
  return detail::active_selections(f.root(), Vector::Zero(static_cast<Eigen::Index>(f.dim())),
                                   std::numeric_limits<double>::infinity());
}

// ---------------------------------------------------------------------------
// Text form.
//
//   expr   := term (("+" | "-") term)*
//   term   := unary ("*" unary)*
//   unary  := "-" unary | power
//   power  := primary ("^" nat)*
//   primary:= number | "x" nat | "(" expr ")"
//           | "max(" expr ("," expr)* ")" | "min(" expr ("," expr)* ")"
//           | "abs(" expr ")"
//
// Products and powers are only defined when every factor but one is a
// polynomial constant, or all factors are polynomials.

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, std::size_t dim) : text_(text), dim_(dim) {
    if (dim == 0) throw DimensionError("ambient dimension must be positive");
  }

  FuncExpr parse() {
    FuncExpr e = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input", "end of input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what, const std::string& expected) const {
    throw ParseError(what, pos_, expected);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail("syntax error", std::string("'") + c + "'");
  }

  bool accept_word(std::string_view w) {
    skip_ws();
    if (text_.substr(pos_, w.size()) != w) return false;
    std::size_t after = pos_ + w.size();
    while (after < text_.size() && std::isspace(static_cast<unsigned char>(text_[after]))) ++after;
    if (after >= text_.size() || text_[after] != '(') return false;
    pos_ = after + 1;
    return true;
  }

  FuncExpr expr() {
    std::vector<FuncExpr> terms{term()};
    while (true) {
      if (accept('+')) {
        terms.push_back(term());
      } else if (accept('-')) {
        terms.push_back(FuncExpr::scale(-1.0, term()));
      } else {
        break;
      }
    }
    return terms.size() == 1 ? terms.front() : FuncExpr::sum(std::move(terms));
  }

  FuncExpr term() {
    FuncExpr acc = unary();
    while (true) {
      std::size_t at = pos_;
      if (!accept('*')) break;
      acc = multiply(acc, unary(), at);
    }
    return acc;
  }

  FuncExpr unary() {
    if (accept('-')) return FuncExpr::scale(-1.0, unary());
    return power();
  }

  FuncExpr power() {
    FuncExpr base = primary();
    while (true) {
      std::size_t at = pos_;
      if (!accept('^')) break;
      skip_ws();
      if (pos_ < text_.size() && text_[pos_] == '-') fail("negative exponent", "natural number");
      unsigned n = natural();
      base = raise(base, n, at);
    }
    return base;
  }

  unsigned natural() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("syntax error", "natural number");
    unsigned v = 0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc()) {
      pos_ = start;
      fail("integer out of range", "natural number");
    }
    return v;
  }

  FuncExpr primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input", "number, variable, '(' or function");
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (accept_word("max")) return extremum(true);
    if (accept_word("min")) return extremum(false);
    if (accept_word("abs")) {
      FuncExpr inner = expr();
      expect(')');
      return FuncExpr::abs(inner);
    }
    if (c == 'x') {
      std::size_t at = pos_;
      ++pos_;
      if (pos_ >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        fail("syntax error", "variable index");
      }
      unsigned idx = natural();
      if (idx == 0 || idx > dim_) {
        throw DimensionError("variable x" + std::to_string(idx) + " at position " + std::to_string(at) +
                             " outside dimension " + std::to_string(dim_));
      }
      return FuncExpr::variable(dim_, idx - 1);
    }
    if (accept('(')) {
      FuncExpr inner = expr();
      expect(')');
      return inner;
    }
    fail("syntax error", "number, variable, '(' or function");
  }

  FuncExpr number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
      ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        pos_ = save;
      } else {
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_) {
      pos_ = start;
      fail("malformed number", "number");
    }
    return FuncExpr::constant(dim_, v);
  }

  FuncExpr extremum(bool is_max) {
    std::vector<FuncExpr> args{expr()};
    while (accept(',')) args.push_back(expr());
    expect(')');
    return is_max ? FuncExpr::max(std::move(args)) : FuncExpr::min(std::move(args));
  }

  static const Monomial* constant_of(const FuncExpr& e) {
    const Node& n = e.root();
    if (n.kind != NodeKind::poly) return nullptr;
    if (n.monomials.empty()) return &zero_monomial();
    if (n.monomials.size() != 1) return nullptr;
    for (unsigned x : n.monomials.front().exponents) {
      if (x != 0) return nullptr;
    }
    return &n.monomials.front();
  }

  static const Monomial& zero_monomial() {
    static const Monomial z{0.0, {}};
    return z;
  }

  FuncExpr multiply(const FuncExpr& a, const FuncExpr& b, std::size_t at) {
    if (a.root().kind == NodeKind::poly && b.root().kind == NodeKind::poly) {
      return FuncExpr::poly(dim_, poly_product(a.root().monomials, b.root().monomials));
    }
    if (const Monomial* c = constant_of(a)) return FuncExpr::scale(c->coeff, b);
    if (const Monomial* c = constant_of(b)) return FuncExpr::scale(c->coeff, a);
    pos_ = at;
    fail("product of non-polynomial factors is outside the function class", "");
  }

  FuncExpr raise(const FuncExpr& base, unsigned n, std::size_t at) {
    if (n == 1) return base;
    if (n == 0) return FuncExpr::constant(dim_, 1.0);
    if (base.root().kind != NodeKind::poly) {
      pos_ = at;
      fail("power of a non-polynomial factor is outside the function class", "");
    }
    std::vector<Monomial> acc = base.root().monomials;
    for (unsigned i = 1; i < n; ++i) acc = poly_product(acc, base.root().monomials);
    return FuncExpr::poly(dim_, std::move(acc));
  }

  std::string_view text_;
  std::size_t dim_;
  std::size_t pos_ = 0;
};

inline std::string print_monomials(const std::vector<Monomial>& terms) {
  if (terms.empty()) return "0";
  std::string out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Monomial& m = terms[i];
    double c = m.coeff;
    if (i == 0) {
      if (c < 0) out += "-";
    } else {
      out += c < 0 ? " - " : " + ";
    }
    double mag = std::abs(c);
    std::string vars;
    for (std::size_t j = 0; j < m.exponents.size(); ++j) {
      if (m.exponents[j] == 0) continue;
      if (!vars.empty()) vars += "*";
      vars += "x" + std::to_string(j + 1);
      if (m.exponents[j] > 1) vars += "^" + std::to_string(m.exponents[j]);
    }
    if (vars.empty()) {
      out += format_number(mag);
    } else if (mag == 1.0) {
      out += vars;
    } else {
      out += format_number(mag) + "*" + vars;
    }
  }
  return out;
}

// Polynomial in the child's variables composed with an affine map.
inline std::vector<Monomial> compose_affine(const std::vector<Monomial>& terms, const Matrix& linear,
                                            const Vector& offset) {
  const std::size_t dim = static_cast<std::size_t>(linear.cols());
  std::vector<std::vector<Monomial>> coords;
  for (Eigen::Index r = 0; r < linear.rows(); ++r) {
    std::vector<Monomial> row;
    for (std::size_t j = 0; j < dim; ++j) {
      std::vector<unsigned> e(dim, 0u);
      e[j] = 1;
      row.push_back(Monomial{linear(r, static_cast<Eigen::Index>(j)), std::move(e)});
    }
    row.push_back(Monomial{offset[r], std::vector<unsigned>(dim, 0u)});
    coords.push_back(canonical_monomials(std::move(row)));
  }
  std::vector<Monomial> out;
  for (const auto& m : terms) {
    std::vector<Monomial> acc{Monomial{m.coeff, std::vector<unsigned>(dim, 0u)}};
    for (std::size_t i = 0; i < m.exponents.size(); ++i) {
      for (unsigned e = 0; e < m.exponents[i]; ++e) acc = poly_product(acc, coords[i]);
    }
    out.insert(out.end(), acc.begin(), acc.end());
  }
  return canonical_monomials(std::move(out));
}

// Removes affine nodes by substitution so that the result has a text form.
inline FuncExpr substitute_affine(const Node& n, const Matrix* linear, const Vector* offset) {
  const std::size_t outer_dim = linear ? static_cast<std::size_t>(linear->cols()) : n.dim;
  switch (n.kind) {
    case NodeKind::poly:
      return FuncExpr::poly(outer_dim, linear ? compose_affine(n.monomials, *linear, *offset) : n.monomials);
    case NodeKind::sum: {
      std::vector<FuncExpr> parts;
      for (const auto& c : n.children) parts.push_back(substitute_affine(*c, linear, offset));
      return FuncExpr::sum(std::move(parts));
    }
    case NodeKind::scale:
      return FuncExpr::scale(n.factor, substitute_affine(*n.children.front(), linear, offset));
    case NodeKind::max:
    case NodeKind::min: {
      std::vector<FuncExpr> parts;
      for (const auto& c : n.children) parts.push_back(substitute_affine(*c, linear, offset));
      if (n.abs_sugar) return FuncExpr::abs(parts.front());
      return n.kind == NodeKind::max ? FuncExpr::max(std::move(parts)) : FuncExpr::min(std::move(parts));
    }
    case NodeKind::affine: {
      if (!linear) return substitute_affine(*n.children.front(), &n.linear, &n.offset);
      Matrix l = n.linear * *linear;
      Vector o = n.linear * *offset + n.offset;
      return substitute_affine(*n.children.front(), &l, &o);
    }
  }
  throw Error("unreachable");
}

inline bool contains_affine(const Node& n) {
  if (n.kind == NodeKind::affine) return true;
  return std::any_of(n.children.begin(), n.children.end(),
                     [](const NodePtr& c) { return contains_affine(*c); });
}

inline std::string print_node(const Node& n) {
  switch (n.kind) {
    case NodeKind::poly:
      return print_monomials(n.monomials);
    case NodeKind::sum: {
      std::string out = print_node(*n.children.front());
      for (std::size_t i = 1; i < n.children.size(); ++i) {
        std::string s = print_node(*n.children[i]);
        if (!s.empty() && s.front() == '-') {
          out += " - " + s.substr(1);
        } else {
          out += " + " + s;
        }
      }
      return out;
    }
    case NodeKind::scale: {
      const Node& c = *n.children.front();
      std::string inner = print_node(c);
      if (c.kind == NodeKind::sum) inner = "(" + inner + ")";
      return format_number(n.factor) + "*" + inner;
    }
    case NodeKind::max:
    case NodeKind::min: {
      if (n.abs_sugar) return "abs(" + print_node(*n.children.front()) + ")";
      std::string out = n.kind == NodeKind::max ? "max(" : "min(";
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += ", ";
        out += print_node(*n.children[i]);
      }
      return out + ")";
    }
    case NodeKind::affine:
      break;
  }
  throw Error("affine node must be substituted before printing");
}

}  // namespace detail

inline FuncExpr parse_expr(std::string_view text, std::size_t dim) {
  return detail::Parser(text, dim).parse();
}

/// Text form of f. Affine pre-compositions are expanded by substitution, so
/// for such trees the text denotes the same function but not the same tree.
inline std::string print_expr(const FuncExpr& f) {
  if (detail::contains_affine(f.root())) {
    return detail::print_node(detail::substitute_affine(f.root(), nullptr, nullptr).root());
  }
  return detail::print_node(f.root());
}

}  // namespace slopeflow
