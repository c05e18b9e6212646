//===- schedule.hpp - Matmul expansion and tiling schedules -----------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Lowers hop.matmul to the canonical 3-d loop nest, and applies restricted
// polyhedral schedules: per source dim a chain of strictly decreasing
// divisors (each dividing the previous, ending at 1), interleaved in any
// order across dims. Loops over divisor-T entries iterate tile indices; the
// generated bounds take the min/max forms the BLIS-style tiling produces,
// with partial-tile mins elided whenever the parent tile size divides the
// extent.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/ir.hpp"

namespace hopt {

/// One schedule result: (source dim, divisor). Divisor 1 denotes the point
/// loop for that dim.
struct ScheduleEntry {
  int64_t dim = 0;
  int64_t divisor = 1;
};

struct TilingSchedule {
  int64_t numDims = 0;
  std::vector<ScheduleEntry> entries;
};

/// Throws unless the schedule satisfies the divisor-chain invariants.
inline void validateSchedule(const TilingSchedule &s) {
  std::vector<int64_t> last(s.numDims, 0); // 0 = unseen
  std::vector<bool> pointSeen(s.numDims, false);
  for (const auto &e : s.entries) {
    if (e.dim < 0 || e.dim >= s.numDims)
      throw Error("schedule entry references dim d" + std::to_string(e.dim) +
                  " outside the domain");
    if (e.divisor < 1)
      throw Error("schedule divisors must be >= 1");
    int64_t prev = last[e.dim];
    if (prev != 0) {
      if (e.divisor >= prev)
        throw Error("schedule divisors for d" + std::to_string(e.dim) +
                    " must strictly decrease");
      if (prev % e.divisor != 0)
        throw Error("schedule divisor " + std::to_string(e.divisor) +
                    " must divide the previous level " + std::to_string(prev) +
                    " for d" + std::to_string(e.dim));
    }
    last[e.dim] = e.divisor;
    if (e.divisor == 1)
      pointSeen[e.dim] = true;
  }
  for (int64_t d = 0; d < s.numDims; ++d)
    if (!pointSeen[d])
      throw Error("schedule must end each dim's chain with a point loop "
                  "(divisor 1); missing for d" +
                  std::to_string(d));
}

/// Iteration domain extents (M, N, K for matmul).
struct IterationDomain {
  std::vector<int64_t> extents;
};

/// Builds a function holding just a hop.matmul over fresh MxK, KxN, MxN
/// parameters.
inline Function makeMatmulFunction(int64_t m, int64_t n, int64_t k,
                                   ElemType elem, const TileParams &tile,
                                   const std::string &name = "matmul") {
  Function fn;
  fn.name = name;
  ValueId a = fn.addParam(MemRefDescriptor({m, k}, elem), "A");
  ValueId b = fn.addParam(MemRefDescriptor({k, n}, elem), "B");
  ValueId c = fn.addParam(MemRefDescriptor({m, n}, elem), "C");
  Operation op;
  op.kind = OpKind::MatmulHL;
  op.operands = {a, b, c};
  op.tile = tile;
  fn.body.push_back(std::move(op));
  return fn;
}

/// Lowers the sole hop.matmul in `fn` into the canonical i-j-k nest with the
/// C[i,j] += A[i,k] * B[k,j] body. The original op's operands become the
/// nest's memrefs; everything else is preserved.
inline Function expandMatmul(const Function &fn) {
  verifyOrThrow(fn, "expand_matmul");
  const Operation *hl = nullptr;
  for (const auto &op : fn.body)
    if (op.kind == OpKind::MatmulHL) {
      if (hl)
        throw Error("expand_matmul: multiple hop.matmul ops");
      hl = &op;
    }
  if (!hl)
    throw Error("expand_matmul: no hop.matmul op in function");

  Function out = fn;
  out.body.clear();
  OpBuilder b(out);

  ValueId A = hl->operands[0], B = hl->operands[1], C = hl->operands[2];
  const auto &aDesc = out.memrefOf(A);
  const auto &cDesc = out.memrefOf(C);
  int64_t m = cDesc.shape[0], n = cDesc.shape[1], k = aDesc.shape[1];
  ElemType elem = aDesc.elem;

  ValueId i = out.addValue(Type::index(), "i");
  ValueId j = out.addValue(Type::index(), "j");
  ValueId kk = out.addValue(Type::index(), "k");
  ValueId lA = out.addValue(Type::of(elem));
  ValueId lB = out.addValue(Type::of(elem));
  ValueId prod = out.addValue(Type::of(elem));
  ValueId lC = out.addValue(Type::of(elem));
  ValueId sum = out.addValue(Type::of(elem));

  std::vector<Operation> body;
  body.push_back(b.load(A, b.ivAccess({i, kk}), lA));
  body.push_back(b.load(B, b.ivAccess({kk, j}), lB));
  body.push_back(b.binary(OpKind::Mul, lA, lB, prod));
  body.push_back(b.load(C, b.ivAccess({i, j}), lC));
  body.push_back(b.binary(OpKind::Add, lC, prod, sum));
  body.push_back(b.store(C, sum, b.ivAccess({i, j})));

  Operation kFor = b.forOp(kk, 0, k);
  kFor.body = std::move(body);
  Operation jFor = b.forOp(j, 0, n);
  jFor.body.push_back(std::move(kFor));
  Operation iFor = b.forOp(i, 0, m);
  iFor.body.push_back(std::move(jFor));
  out.body.push_back(std::move(iFor));

  verifyOrThrow(out, "expand_matmul result");
  return out;
}

namespace detail {

/// The loops of a perfect nest, outermost first, all with constant [0, E)
/// bounds and unit step. Throws when the function is not such a nest of the
/// requested depth.
struct PerfectNest {
  std::vector<const Operation *> loops;
  std::vector<int64_t> extents;
  const std::vector<Operation> *innerBody = nullptr;
};

inline PerfectNest matchPerfectNest(const Function &fn, int64_t depth) {
  PerfectNest nest;
  const std::vector<Operation> *ops = &fn.body;
  for (int64_t level = 0; level < depth; ++level) {
    // Non-loop ops (e.g. shape casts) may precede the nest at the top level;
    // inner levels must be perfectly nested.
    const Operation *forOp = nullptr;
    for (const auto &op : *ops)
      if (op.kind == OpKind::AffineFor) {
        if (forOp)
          throw Error("tiling requires a perfect loop nest of depth " +
                      std::to_string(depth));
        forOp = &op;
      }
    if (!forOp || (level > 0 && ops->size() != 1))
      throw Error("tiling requires a perfect loop nest of depth " +
                  std::to_string(depth));
    const Operation &loop = *forOp;
    auto lb = loop.lower.getIfSingleConstant();
    auto ub = loop.upper.getIfSingleConstant();
    if (!lb || *lb != 0 || !ub || loop.step != 1)
      throw Error("tiling requires constant [0, E) bounds with unit steps");
    nest.loops.push_back(&loop);
    nest.extents.push_back(*ub);
    ops = &loop.body;
  }
  for (const auto &op : *ops)
    if (op.kind == OpKind::AffineFor)
      throw Error("tiling requires a perfect nest: inner body contains loops");
  nest.innerBody = ops;
  return nest;
}

inline int64_t ceilDiv(int64_t a, int64_t b) { return (a + b - 1) / b; }

} // namespace detail

/// Applies a divisor-chain tiling schedule to a perfect nest. One loop is
/// generated per schedule entry, outermost first; body accesses are rewritten
/// to use the point (divisor-1) ivs. The executed point set is exactly the
/// original domain, once per point, in schedule-lexicographic order.
inline Function applyTilingSchedule(const Function &fn,
                                    const TilingSchedule &schedule) {
  verifyOrThrow(fn, "apply_tiling_schedule");
  validateSchedule(schedule);
  detail::PerfectNest nest = detail::matchPerfectNest(fn, schedule.numDims);

  Function out = fn;
  OpBuilder b(out);

  // Create one iv per schedule entry and assemble loops inside-out.
  struct Level {
    ValueId iv;
    int64_t divisor;
  };
  std::vector<Level> lastLevel(schedule.numDims, {kNoValue, 0});
  std::vector<ValueId> pointIv(schedule.numDims, kNoValue);
  std::vector<Operation> loops;
  loops.reserve(schedule.entries.size());

  for (const auto &entry : schedule.entries) {
    int64_t d = entry.dim, T = entry.divisor;
    int64_t E = nest.extents[d];
    ValueId iv = out.addValue(Type::index(), "t");
    MappedValues lb, ub;
    int64_t tileCount = detail::ceilDiv(E, T);
    if (lastLevel[d].iv == kNoValue) {
      lb = MappedValues::constant(0);
      ub = MappedValues::constant(tileCount);
    } else {
      int64_t ratio = lastLevel[d].divisor / T;
      AffineExpr t = AffineExpr::dim(0);
      lb = MappedValues(AffineMap(1, 0, {t * ratio}), {lastLevel[d].iv});
      // Partial parent tiles need min(total, relative); full tiles do not.
      std::vector<AffineExpr> ubExprs;
      if (E % lastLevel[d].divisor != 0)
        ubExprs.push_back(AffineExpr::constant(tileCount));
      ubExprs.push_back(t * ratio + ratio);
      ub = MappedValues(AffineMap(1, 0, std::move(ubExprs)),
                        {lastLevel[d].iv});
    }
    lastLevel[d] = {iv, T};
    if (T == 1)
      pointIv[d] = iv;
    loops.push_back(b.forOp(iv, std::move(lb), std::move(ub)));
  }

  // Body: original inner ops with each source iv replaced by its point iv.
  std::vector<Operation> body = *nest.innerBody;
  for (auto &op : body) {
    auto subst = [&](std::vector<ValueId> &operands) {
      for (ValueId &v : operands)
        for (int64_t d = 0; d < schedule.numDims; ++d)
          if (v == nest.loops[d]->iv)
            v = pointIv[d];
    };
    subst(op.operands);
    subst(op.access.operands);
    subst(op.lower.operands);
    subst(op.upper.operands);
  }

  for (int64_t i = (int64_t)loops.size() - 1; i >= 0; --i) {
    if (i + 1 < (int64_t)loops.size())
      loops[i].body.push_back(std::move(loops[i + 1]));
    else
      loops[i].body = std::move(body);
  }
  // Replace the old nest, keeping any top-level non-loop ops (shape casts).
  std::vector<Operation> newTop;
  for (auto &op : out.body) {
    if (op.kind == OpKind::AffineFor)
      newTop.push_back(std::move(loops[0]));
    else
      newTop.push_back(std::move(op));
  }
  out.body = std::move(newTop);

  verifyOrThrow(out, "apply_tiling_schedule result");
  return out;
}

/// The BLIS-style cache+register tiling schedule for the given parameters:
/// (k / K_C, i / M_C, j / N_R, i / M_R, k, j, i), with the last two flipped
/// for the (i, j) intra-tile permutation. When `vectorized`, the j chain is
/// expressed in vector-lane units (N_R / W).
inline TilingSchedule appliedScheduleFor(const TileParams &p,
                                         bool vectorized = false,
                                         int64_t vectorWidth = 1) {
  if (p.M_C <= 0 || p.K_C <= 0 || p.M_R <= 0 || p.N_R <= 0 || p.K_U < 1)
    throw Error("tile parameters must be positive");
  if (p.M_C % p.M_R != 0)
    throw Error("M_R = " + std::to_string(p.M_R) + " must divide M_C = " +
                std::to_string(p.M_C));
  int64_t jUnit = p.N_R;
  if (vectorized) {
    if (vectorWidth < 1 || p.N_R % vectorWidth != 0)
      throw Error("vector width must divide N_R");
    jUnit = p.N_R / vectorWidth;
  }

  TilingSchedule s;
  s.numDims = 3;
  // Degenerate levels (divisor 1, or equal to the enclosing level) are
  // skipped; the point loops always sit at the three innermost positions.
  if (p.K_C > 1)
    s.entries.push_back({2, p.K_C});
  if (p.M_C > 1)
    s.entries.push_back({0, p.M_C});
  if (jUnit > 1)
    s.entries.push_back({1, jUnit});
  if (p.M_R > 1 && p.M_R < p.M_C)
    s.entries.push_back({0, p.M_R});
  s.entries.push_back({2, 1});
  if (p.innerPerm == TileParams::InnerPerm::JI) {
    s.entries.push_back({1, 1});
    s.entries.push_back({0, 1});
  } else {
    s.entries.push_back({0, 1});
    s.entries.push_back({1, 1});
  }
  validateSchedule(s);
  return s;
}

} // namespace hopt
