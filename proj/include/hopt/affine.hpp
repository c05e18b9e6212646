//===- affine.hpp - Affine expressions and maps ---------------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Quasi-affine integer expressions (dims, symbols, constants, add, mul,
// floordiv, mod) and multi-result affine maps. These are the currency of
// loop bounds, schedules, memory accesses, and buffer layouts.
//
// Floor division rounds toward negative infinity and mod results are always
// in [0, divisor), matching the semantics layouts and schedules assume.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <cassert>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hopt {

/// Error type for all precondition and input violations in this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

enum class ExprKind : uint8_t {
  Constant,
  Dim,
  Symbol,
  Add,
  Mul,
  FloorDiv,
  Mod,
};

/// An immutable quasi-affine expression tree. Value-semantic handle; nodes
/// are shared and never mutated after construction.
class AffineExpr {
  struct Node {
    ExprKind kind;
    int64_t value = 0; // constant value, or dim/symbol index
    std::shared_ptr<const Node> lhs, rhs;
  };
  std::shared_ptr<const Node> node;

  explicit AffineExpr(std::shared_ptr<const Node> n) : node(std::move(n)) {}

  static AffineExpr make(ExprKind k, int64_t v, AffineExpr l = AffineExpr(),
                         AffineExpr r = AffineExpr()) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->value = v;
    n->lhs = l.node;
    n->rhs = r.node;
    return AffineExpr(std::move(n));
  }

public:
  AffineExpr() = default;

  bool isNull() const { return node == nullptr; }
  ExprKind kind() const { return node->kind; }

  static AffineExpr constant(int64_t c) { return make(ExprKind::Constant, c); }
  static AffineExpr dim(int64_t index) {
    if (index < 0)
      throw Error("affine dim index must be non-negative");
    return make(ExprKind::Dim, index);
  }
  static AffineExpr symbol(int64_t index) {
    if (index < 0)
      throw Error("affine symbol index must be non-negative");
    return make(ExprKind::Symbol, index);
  }
  static AffineExpr add(AffineExpr l, AffineExpr r) {
    return make(ExprKind::Add, 0, l, r);
  }
  static AffineExpr mul(AffineExpr l, AffineExpr r) {
    // Quasi-affine restriction: one multiplicand must be a constant.
    if (l.kind() != ExprKind::Constant && r.kind() != ExprKind::Constant)
      throw Error("affine mul requires a constant operand");
    return make(ExprKind::Mul, 0, l, r);
  }
  static AffineExpr floorDiv(AffineExpr l, int64_t divisor) {
    if (divisor <= 0)
      throw Error("affine floordiv divisor must be positive");
    return make(ExprKind::FloorDiv, 0, l, constant(divisor));
  }
  static AffineExpr mod(AffineExpr l, int64_t divisor) {
    if (divisor <= 0)
      throw Error("affine mod divisor must be positive");
    return make(ExprKind::Mod, 0, l, constant(divisor));
  }

  AffineExpr operator+(AffineExpr rhs) const { return add(*this, rhs); }
  AffineExpr operator+(int64_t c) const { return add(*this, constant(c)); }
  AffineExpr operator-(AffineExpr rhs) const {
    return add(*this, mul(constant(-1), rhs));
  }
  AffineExpr operator-(int64_t c) const { return add(*this, constant(-c)); }
  AffineExpr operator*(int64_t c) const { return mul(*this, constant(c)); }

  int64_t constantValue() const {
    assert(kind() == ExprKind::Constant);
    return node->value;
  }
  int64_t index() const {
    assert(kind() == ExprKind::Dim || kind() == ExprKind::Symbol);
    return node->value;
  }
  AffineExpr lhs() const { return AffineExpr(node->lhs); }
  AffineExpr rhs() const { return AffineExpr(node->rhs); }
  int64_t divisor() const {
    assert(kind() == ExprKind::FloorDiv || kind() == ExprKind::Mod);
    return rhs().constantValue();
  }

  bool isConstant() const { return kind() == ExprKind::Constant; }
  std::optional<int64_t> getIfConstant() const {
    if (isConstant())
      return constantValue();
    return std::nullopt;
  }

  /// Floor division with round-toward-negative-infinity semantics.
  static int64_t floorDivValue(int64_t a, int64_t b) {
    assert(b > 0);
    int64_t q = a / b;
    if ((a % b) != 0 && a < 0)
      --q;
    return q;
  }
  /// Euclidean mod: result always in [0, b).
  static int64_t modValue(int64_t a, int64_t b) {
    assert(b > 0);
    int64_t r = a % b;
    return r < 0 ? r + b : r;
  }

  /// Evaluates the expression under the given dim and symbol assignments.
  int64_t evaluate(std::span<const int64_t> dims,
                   std::span<const int64_t> symbols = {}) const {
    switch (kind()) {
    case ExprKind::Constant:
      return node->value;
    case ExprKind::Dim:
      if (node->value >= (int64_t)dims.size())
        throw Error("unbound dim d" + std::to_string(node->value) +
                    " in affine evaluation");
      return dims[node->value];
    case ExprKind::Symbol:
      if (node->value >= (int64_t)symbols.size())
        throw Error("unbound symbol s" + std::to_string(node->value) +
                    " in affine evaluation");
      return symbols[node->value];
    case ExprKind::Add:
      return lhs().evaluate(dims, symbols) + rhs().evaluate(dims, symbols);
    case ExprKind::Mul:
      return lhs().evaluate(dims, symbols) * rhs().evaluate(dims, symbols);
    case ExprKind::FloorDiv:
      return floorDivValue(lhs().evaluate(dims, symbols), divisor());
    case ExprKind::Mod:
      return modValue(lhs().evaluate(dims, symbols), divisor());
    }
    return 0;
  }

  /// Replaces every dim with `dimRepl(index)` and every symbol with
  /// `symRepl(index)`. Null replacements keep the operand unchanged.
  AffineExpr
  replace(const std::function<AffineExpr(int64_t)> &dimRepl,
          const std::function<AffineExpr(int64_t)> &symRepl = nullptr) const {
    switch (kind()) {
    case ExprKind::Constant:
      return *this;
    case ExprKind::Dim: {
      AffineExpr r = dimRepl ? dimRepl(node->value) : AffineExpr();
      return r.isNull() ? *this : r;
    }
    case ExprKind::Symbol: {
      AffineExpr r = symRepl ? symRepl(node->value) : AffineExpr();
      return r.isNull() ? *this : r;
    }
    case ExprKind::Add:
      return add(lhs().replace(dimRepl, symRepl),
                 rhs().replace(dimRepl, symRepl));
    case ExprKind::Mul:
      return make(ExprKind::Mul, 0, lhs().replace(dimRepl, symRepl),
                  rhs().replace(dimRepl, symRepl));
    case ExprKind::FloorDiv:
      return make(ExprKind::FloorDiv, 0, lhs().replace(dimRepl, symRepl),
                  rhs());
    case ExprKind::Mod:
      return make(ExprKind::Mod, 0, lhs().replace(dimRepl, symRepl), rhs());
    }
    return *this;
  }

  /// Renumbers dims with dim(mapTo[i]); entries of -1 must be unused.
  AffineExpr remapDims(std::span<const int64_t> mapTo) const {
    return replace([&](int64_t i) {
      assert(i < (int64_t)mapTo.size() && mapTo[i] >= 0 && "dim out of remap");
      return dim(mapTo[i]);
    });
  }

  bool usesDim(int64_t index) const {
    switch (kind()) {
    case ExprKind::Constant:
      return false;
    case ExprKind::Dim:
      return node->value == index;
    case ExprKind::Symbol:
      return false;
    case ExprKind::Add:
    case ExprKind::Mul:
      return lhs().usesDim(index) || rhs().usesDim(index);
    case ExprKind::FloorDiv:
    case ExprKind::Mod:
      return lhs().usesDim(index);
    }
    return false;
  }

  /// Largest position of any referenced dim, or -1 if none.
  int64_t maxDim() const {
    switch (kind()) {
    case ExprKind::Constant:
    case ExprKind::Symbol:
      return -1;
    case ExprKind::Dim:
      return node->value;
    case ExprKind::Add:
    case ExprKind::Mul:
      return std::max(lhs().maxDim(), rhs().maxDim());
    case ExprKind::FloorDiv:
    case ExprKind::Mod:
      return lhs().maxDim();
    }
    return -1;
  }
  int64_t maxSymbol() const {
    switch (kind()) {
    case ExprKind::Constant:
    case ExprKind::Dim:
      return -1;
    case ExprKind::Symbol:
      return node->value;
    case ExprKind::Add:
    case ExprKind::Mul:
      return std::max(lhs().maxSymbol(), rhs().maxSymbol());
    case ExprKind::FloorDiv:
    case ExprKind::Mod:
      return lhs().maxSymbol();
    }
    return -1;
  }

  bool structurallyEqual(const AffineExpr &other) const {
    if (node == other.node)
      return true;
    if (!node || !other.node || kind() != other.kind())
      return false;
    switch (kind()) {
    case ExprKind::Constant:
    case ExprKind::Dim:
    case ExprKind::Symbol:
      return node->value == other.node->value;
    default:
      return lhs().structurallyEqual(other.lhs()) &&
             rhs().structurallyEqual(other.rhs());
    }
  }
};

namespace detail {

/// A flattened linear form: constant + sum(coef * atom) where an atom is a
/// dim, a symbol, or an opaque floordiv/mod subtree. Used by simplification.
struct LinearForm {
  int64_t constant = 0;
  // Atom key: textual structural key for grouping; value: (expr, coef).
  std::vector<std::pair<AffineExpr, int64_t>> terms;

  void addTerm(const AffineExpr &atom, int64_t coef) {
    if (coef == 0)
      return;
    for (auto &t : terms) {
      if (t.first.structurallyEqual(atom)) {
        t.second += coef;
        return;
      }
    }
    terms.emplace_back(atom, coef);
  }

  void add(const LinearForm &other, int64_t scale) {
    constant += scale * other.constant;
    for (auto &t : other.terms)
      addTerm(t.first, scale * t.second);
  }

  /// True when every coefficient and the constant are divisible by d.
  bool divisibleBy(int64_t d) const {
    if (AffineExpr::modValue(constant, d) != 0)
      return false;
    for (auto &t : terms)
      if (t.second % d != 0)
        return false;
    return true;
  }
};

AffineExpr simplified(const AffineExpr &expr);

inline LinearForm flatten(const AffineExpr &expr) {
  LinearForm lf;
  switch (expr.kind()) {
  case ExprKind::Constant:
    lf.constant = expr.constantValue();
    break;
  case ExprKind::Dim:
  case ExprKind::Symbol:
    lf.addTerm(expr, 1);
    break;
  case ExprKind::Add: {
    lf = flatten(expr.lhs());
    lf.add(flatten(expr.rhs()), 1);
    break;
  }
  case ExprKind::Mul: {
    AffineExpr l = expr.lhs(), r = expr.rhs();
    if (l.isConstant() && r.isConstant()) {
      lf.constant = l.constantValue() * r.constantValue();
    } else if (r.isConstant()) {
      lf = flatten(l);
      LinearForm scaled;
      scaled.add(lf, r.constantValue());
      lf = scaled;
    } else {
      lf = flatten(r);
      LinearForm scaled;
      scaled.add(lf, l.constantValue());
      lf = scaled;
    }
    break;
  }
  case ExprKind::FloorDiv:
  case ExprKind::Mod: {
    int64_t d = expr.divisor();
    AffineExpr inner = simplified(expr.lhs());
    LinearForm innerLf = flatten(inner);
    if (auto c = inner.getIfConstant()) {
      lf.constant = expr.kind() == ExprKind::FloorDiv
                        ? AffineExpr::floorDivValue(*c, d)
                        : AffineExpr::modValue(*c, d);
      break;
    }
    if (d == 1) {
      if (expr.kind() == ExprKind::FloorDiv)
        lf = innerLf;
      break; // x mod 1 == 0
    }
    if (innerLf.divisibleBy(d)) {
      if (expr.kind() == ExprKind::FloorDiv) {
        lf.constant = innerLf.constant / d;
        for (auto &t : innerLf.terms)
          lf.addTerm(t.first, t.second / d);
      }
      break; // exact division; mod is 0
    }
    // Peel off the divisible part: (a*d + r) floordiv d == a + r floordiv d,
    // (a*d + r) mod d == r mod d. Only sound when the residual is known
    // non-negative; we keep the conservative whole-expression atom otherwise.
    AffineExpr atom = expr.kind() == ExprKind::FloorDiv
                          ? AffineExpr::floorDiv(inner, d)
                          : AffineExpr::mod(inner, d);
    lf.addTerm(atom, 1);
    break;
  }
  }
  return lf;
}

/// Rebuilds a canonical expression from a linear form: terms in first-seen
/// order, constant last (omitted when zero and other terms exist). Terms
/// whose coefficients cancelled to zero are dropped.
inline AffineExpr rebuild(const LinearForm &lf) {
  AffineExpr acc;
  for (auto &t : lf.terms) {
    if (t.second == 0)
      continue;
    AffineExpr term =
        t.second == 1 ? t.first : AffineExpr::mul(t.first, AffineExpr::constant(t.second));
    acc = acc.isNull() ? term : acc + term;
  }
  if (acc.isNull())
    return AffineExpr::constant(lf.constant);
  if (lf.constant != 0)
    acc = acc + lf.constant;
  return acc;
}

inline AffineExpr simplified(const AffineExpr &expr) {
  return rebuild(flatten(expr));
}

} // namespace detail

/// Simplifies an affine expression: folds constants, drops x+0 and x*1,
/// cancels exact floordiv/mod of divisible linear forms. The result evaluates
/// identically to the input over all assignments.
inline AffineExpr simplifyExpr(const AffineExpr &expr) {
  return detail::simplified(expr);
}

/// An affine map: (d0..d{n-1})[s0..s{m-1}] -> (expr, ...).
class AffineMap {
public:
  AffineMap() = default;
  AffineMap(int64_t numDims, int64_t numSymbols,
            std::vector<AffineExpr> results)
      : dims(numDims), symbols(numSymbols), exprs(std::move(results)) {
    for (const auto &e : exprs) {
      if (e.maxDim() >= dims)
        throw Error("affine map result references dim beyond num_dims");
      if (e.maxSymbol() >= symbols)
        throw Error("affine map result references symbol beyond num_symbols");
    }
  }

  static AffineMap identity(int64_t rank) {
    std::vector<AffineExpr> rs;
    rs.reserve(rank);
    for (int64_t i = 0; i < rank; ++i)
      rs.push_back(AffineExpr::dim(i));
    return AffineMap(rank, 0, std::move(rs));
  }

  int64_t numDims() const { return dims; }
  int64_t numSymbols() const { return symbols; }
  int64_t numResults() const { return (int64_t)exprs.size(); }
  const std::vector<AffineExpr> &results() const { return exprs; }
  const AffineExpr &result(int64_t i) const { return exprs[i]; }

  bool isIdentity() const {
    if (numResults() != dims || symbols != 0)
      return false;
    for (int64_t i = 0; i < numResults(); ++i)
      if (!(exprs[i].kind() == ExprKind::Dim && exprs[i].index() == i))
        return false;
    return true;
  }

  std::vector<int64_t> evaluate(std::span<const int64_t> dimValues,
                                std::span<const int64_t> symValues = {}) const {
    std::vector<int64_t> out;
    out.reserve(exprs.size());
    for (const auto &e : exprs)
      out.push_back(e.evaluate(dimValues, symValues));
    return out;
  }

  AffineMap simplified() const {
    std::vector<AffineExpr> rs;
    rs.reserve(exprs.size());
    for (const auto &e : exprs)
      rs.push_back(simplifyExpr(e));
    return AffineMap(dims, symbols, std::move(rs));
  }

  /// Composition this(other(...)): substitutes other's results for this map's
  /// dims. The result has other's dim/symbol space.
  AffineMap compose(const AffineMap &other) const {
    if (other.numResults() != dims)
      throw Error("affine map composition arity mismatch");
    std::vector<AffineExpr> rs;
    rs.reserve(exprs.size());
    for (const auto &e : exprs)
      rs.push_back(simplifyExpr(
          e.replace([&](int64_t i) { return other.exprs[i]; })));
    return AffineMap(other.dims, other.symbols, std::move(rs));
  }

  bool structurallyEqual(const AffineMap &other) const {
    if (dims != other.dims || symbols != other.symbols ||
        exprs.size() != other.exprs.size())
      return false;
    for (size_t i = 0; i < exprs.size(); ++i)
      if (!exprs[i].structurallyEqual(other.exprs[i]))
        return false;
    return true;
  }

private:
  int64_t dims = 0;
  int64_t symbols = 0;
  std::vector<AffineExpr> exprs;
};

/// Closed integer interval; used for layout image analysis.
struct IntInterval {
  int64_t lo = 0, hi = 0;
};

/// Interval range of `expr` when dim i ranges over dimRanges[i]. Assumes all
/// divisors positive; floordiv/mod handled monotonically.
inline IntInterval exprRange(const AffineExpr &expr,
                             std::span<const IntInterval> dimRanges) {
  switch (expr.kind()) {
  case ExprKind::Constant:
    return {expr.constantValue(), expr.constantValue()};
  case ExprKind::Dim: {
    int64_t i = expr.index();
    if (i >= (int64_t)dimRanges.size())
      throw Error("exprRange: unbound dim");
    return dimRanges[i];
  }
  case ExprKind::Symbol:
    throw Error("exprRange: symbolic expression has no static range");
  case ExprKind::Add: {
    auto l = exprRange(expr.lhs(), dimRanges);
    auto r = exprRange(expr.rhs(), dimRanges);
    return {l.lo + r.lo, l.hi + r.hi};
  }
  case ExprKind::Mul: {
    auto l = exprRange(expr.lhs(), dimRanges);
    auto r = exprRange(expr.rhs(), dimRanges);
    int64_t a = l.lo * r.lo, b = l.lo * r.hi, c = l.hi * r.lo, d = l.hi * r.hi;
    return {std::min(std::min(a, b), std::min(c, d)),
            std::max(std::max(a, b), std::max(c, d))};
  }
  case ExprKind::FloorDiv: {
    auto l = exprRange(expr.lhs(), dimRanges);
    int64_t d = expr.divisor();
    return {AffineExpr::floorDivValue(l.lo, d),
            AffineExpr::floorDivValue(l.hi, d)};
  }
  case ExprKind::Mod: {
    auto l = exprRange(expr.lhs(), dimRanges);
    int64_t d = expr.divisor();
    // Entire value set within one period: mod is monotone there.
    if (AffineExpr::floorDivValue(l.lo, d) == AffineExpr::floorDivValue(l.hi, d))
      return {AffineExpr::modValue(l.lo, d), AffineExpr::modValue(l.hi, d)};
    return {0, d - 1};
  }
  }
  return {0, 0};
}

} // namespace hopt
