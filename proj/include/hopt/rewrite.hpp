//===- rewrite.hpp - Shared rewriting utilities ------------------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Operand-space manipulation for MappedValues (merging, substitution,
// compaction), op cloning with fresh SSA results, and interval analysis of
// loop ivs. All transformation passes build on these.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/ir.hpp"

namespace hopt {

/// Position of `v` in `operands`, appending it when absent.
inline int64_t operandIndexOf(std::vector<ValueId> &operands, ValueId v) {
  for (size_t i = 0; i < operands.size(); ++i)
    if (operands[i] == v)
      return (int64_t)i;
  operands.push_back(v);
  return (int64_t)operands.size() - 1;
}

/// Rewrites `expr` (over `from` operand space) into `to` space, appending
/// missing operands to `to`.
inline AffineExpr remapIntoSpace(const AffineExpr &expr,
                                 const std::vector<ValueId> &from,
                                 std::vector<ValueId> &to) {
  return expr.replace([&](int64_t d) {
    return AffineExpr::dim(operandIndexOf(to, from[d]));
  });
}

/// Drops operands not referenced by any result and renumbers dims.
inline MappedValues compacted(const MappedValues &mv) {
  std::vector<int64_t> remap(mv.operands.size(), -1);
  std::vector<ValueId> kept;
  for (size_t i = 0; i < mv.operands.size(); ++i) {
    bool used = false;
    for (const auto &r : mv.map.results())
      used = used || r.usesDim((int64_t)i);
    if (used) {
      remap[i] = (int64_t)kept.size();
      kept.push_back(mv.operands[i]);
    }
  }
  std::vector<AffineExpr> rs;
  rs.reserve(mv.map.numResults());
  for (const auto &r : mv.map.results())
    rs.push_back(r.remapDims(remap));
  int64_t numKept = (int64_t)kept.size();
  return MappedValues(AffineMap(numKept, 0, std::move(rs)), std::move(kept));
}

inline MappedValues simplified(const MappedValues &mv) {
  MappedValues out = mv;
  out.map = out.map.simplified();
  return compacted(out);
}

/// Canonical form for access comparison: simplified, compacted, operands
/// sorted by value id.
inline MappedValues normalized(const MappedValues &mv) {
  MappedValues s = simplified(mv);
  std::vector<size_t> order(s.operands.size());
  for (size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return s.operands[a] < s.operands[b]; });
  std::vector<int64_t> remap(s.operands.size());
  std::vector<ValueId> sortedOps(s.operands.size());
  for (size_t newPos = 0; newPos < order.size(); ++newPos) {
    remap[order[newPos]] = (int64_t)newPos;
    sortedOps[newPos] = s.operands[order[newPos]];
  }
  std::vector<AffineExpr> rs;
  rs.reserve(s.map.numResults());
  for (const auto &r : s.map.results())
    rs.push_back(r.remapDims(remap));
  int64_t numOps = (int64_t)sortedOps.size();
  return MappedValues(AffineMap(numOps, 0, std::move(rs)),
                      std::move(sortedOps));
}

inline bool sameAccess(const MappedValues &a, const MappedValues &b) {
  MappedValues na = normalized(a), nb = normalized(b);
  return na.operands == nb.operands && na.map.structurallyEqual(nb.map);
}

/// Replaces every use of value `victim` in the map's operand list by the
/// affine expression `repl` over `replOperands`.
inline void substituteValue(MappedValues &mv, ValueId victim,
                            const AffineExpr &repl,
                            const std::vector<ValueId> &replOperands) {
  bool present = false;
  for (ValueId v : mv.operands)
    present = present || v == victim;
  if (!present)
    return;
  std::vector<ValueId> newOps;
  for (ValueId v : mv.operands)
    if (v != victim)
      newOps.push_back(v);
  AffineExpr replRemapped = remapIntoSpace(repl, replOperands, newOps);
  std::vector<AffineExpr> rs;
  rs.reserve(mv.map.numResults());
  for (const auto &r : mv.map.results()) {
    AffineExpr e = r.replace([&](int64_t d) -> AffineExpr {
      if (mv.operands[d] == victim)
        return replRemapped;
      return AffineExpr::dim(operandIndexOf(newOps, mv.operands[d]));
    });
    rs.push_back(simplifyExpr(e));
  }
  int64_t numOps = (int64_t)newOps.size();
  mv = compacted(MappedValues(AffineMap(numOps, 0, std::move(rs)),
                              std::move(newOps)));
}

/// Substitutes `victim := repl(replOperands)` through every map in `ops`
/// (access, bounds) recursively. Plain operand lists must not contain the
/// victim (those are value uses, not affine uses).
inline void substituteValueInOps(std::vector<Operation> &ops, ValueId victim,
                                 const AffineExpr &repl,
                                 const std::vector<ValueId> &replOperands) {
  for (auto &op : ops) {
    substituteValue(op.access, victim, repl, replOperands);
    substituteValue(op.lower, victim, repl, replOperands);
    substituteValue(op.upper, victim, repl, replOperands);
    if (!op.body.empty())
      substituteValueInOps(op.body, victim, repl, replOperands);
  }
}

/// Deep-clones ops, giving every result and iv a fresh value id and renaming
/// uses accordingly. `rename` may pre-seed substitutions (e.g. an unrolled
/// iv mapped to a new value); affine substitutions beyond renames should be
/// applied afterwards via substituteValueInOps.
inline std::vector<Operation>
cloneWithFreshValues(Function &fn, const std::vector<Operation> &ops,
                     std::unordered_map<ValueId, ValueId> &rename) {
  auto renamed = [&](ValueId v) {
    auto it = rename.find(v);
    return it == rename.end() ? v : it->second;
  };
  std::vector<Operation> out;
  out.reserve(ops.size());
  for (const auto &op : ops) {
    Operation c = op;
    for (ValueId &v : c.operands)
      v = renamed(v);
    for (ValueId &v : c.access.operands)
      v = renamed(v);
    for (ValueId &v : c.lower.operands)
      v = renamed(v);
    for (ValueId &v : c.upper.operands)
      v = renamed(v);
    if (op.result != kNoValue) {
      c.result = fn.addValue(fn.typeOf(op.result));
      rename[op.result] = c.result;
    }
    if (op.kind == OpKind::AffineFor) {
      c.iv = fn.addValue(Type::index(), "i");
      rename[op.iv] = c.iv;
      c.body = cloneWithFreshValues(fn, op.body, rename);
    }
    out.push_back(std::move(c));
  }
  return out;
}

//===----------------------------------------------------------------------===//
// Interval analysis over loop ivs
//===----------------------------------------------------------------------===//

/// Conservative iv ranges for the loops enclosing a program point. Built by
/// walking loops outside-in; used to prove loops non-empty and to bound
/// footprint bases.
struct IvRangeEnv {
  std::unordered_map<ValueId, IntInterval> ranges;

  std::optional<IntInterval> rangeOfExpr(const AffineExpr &e,
                                         const std::vector<ValueId> &operands) const {
    std::vector<IntInterval> dims(operands.size());
    for (size_t i = 0; i < operands.size(); ++i) {
      auto it = ranges.find(operands[i]);
      if (it == ranges.end())
        return std::nullopt;
      dims[i] = it->second;
    }
    try {
      return exprRange(e, dims);
    } catch (const Error &) {
      return std::nullopt;
    }
  }

  /// Value range of a loop's iv given its bounds, or nullopt when unknown.
  std::optional<IntInterval> ivRange(const Operation &loop) const {
    // lb = max of results: range lo = max of los; ub similar with min.
    std::optional<IntInterval> lb, ub;
    for (const auto &r : loop.lower.map.results()) {
      auto iv = rangeOfExpr(r, loop.lower.operands);
      if (!iv)
        return std::nullopt;
      if (!lb)
        lb = iv;
      else
        lb = IntInterval{std::max(lb->lo, iv->lo), std::max(lb->hi, iv->hi)};
    }
    for (const auto &r : loop.upper.map.results()) {
      auto iv = rangeOfExpr(r, loop.upper.operands);
      if (!iv)
        return std::nullopt;
      if (!ub)
        ub = iv;
      else
        ub = IntInterval{std::min(ub->lo, iv->lo), std::min(ub->hi, iv->hi)};
    }
    if (!lb || !ub)
      return std::nullopt;
    // iv in [lb.lo, ub.hi - 1]; empty loops keep a degenerate interval.
    return IntInterval{lb->lo, std::max(ub->hi - 1, lb->lo)};
  }

  void enter(const Operation &loop) {
    auto r = ivRange(loop);
    ranges[loop.iv] = r ? *r : IntInterval{INT64_MIN / 4, INT64_MAX / 4};
  }
  void exit(const Operation &loop) { ranges.erase(loop.iv); }

  /// True when the loop provably executes at least one iteration: every
  /// upper bound expr exceeds every lower bound expr across the whole range
  /// of the enclosing ivs.
  bool provablyNonEmpty(const Operation &loop) const {
    for (const auto &le : loop.lower.map.results()) {
      auto lr = rangeOfExpr(le, loop.lower.operands);
      if (!lr)
        return false;
      for (const auto &ue : loop.upper.map.results()) {
        // range of (ub - lb) must stay positive; evaluate jointly so shared
        // ivs cancel instead of being double-counted.
        std::vector<ValueId> merged = loop.upper.operands;
        AffineExpr u = remapIntoSpace(ue, loop.upper.operands, merged);
        AffineExpr l = remapIntoSpace(le, loop.lower.operands, merged);
        auto dr = rangeOfExpr(simplifyExpr(u - l), merged);
        if (!dr || dr->lo < 1)
          return false;
      }
    }
    return true;
  }
};

/// Largest integer d such that expr is always a multiple of d.
inline int64_t largestKnownDivisor(const AffineExpr &expr) {
  AffineExpr e = simplifyExpr(expr);
  detail::LinearForm lf = detail::flatten(e);
  int64_t g = 0;
  for (const auto &t : lf.terms)
    g = std::gcd(g, std::abs(t.second));
  g = std::gcd(g, std::abs(lf.constant));
  return g == 0 ? 1 : g; // expr identically 0: any divisor works; use 1
}

} // namespace hopt
