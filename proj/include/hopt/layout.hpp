//===- layout.hpp - Packing and memref normalization -------------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Explicit copying (packing) of read-only regions into contiguous buffers at
// a chosen loop depth with a chosen injective layout, plus normalization of
// non-identity layouts into identity-layout buffers of the image shape.
// Footprint analysis is restricted to the GEMM class: accesses affine in the
// ivs with unit coefficients on the inner ivs, yielding rectangular
// constant-size regions.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/rewrite.hpp"

namespace hopt {

/// A rectangular constant-size region of a memref: per dimension a base
/// expression over the ivs enclosing the packing point and a constant extent.
/// `clamp[d]` notes that boundary tiles need min(extent, shape[d] - base).
struct FootprintBox {
  std::vector<AffineExpr> base; // over `operands`
  std::vector<ValueId> operands;
  std::vector<int64_t> extent;
  std::vector<bool> clamp;
};

/// Where and how to pack: the target memref, the loop under which copies are
/// emitted (identified by its op path), the buffer layout, and alignment.
struct PackSpec {
  ValueId memref = kNoValue;
  std::vector<int64_t> loopPath;
  AffineMap bufferLayout; // null => identity
  int64_t alignment = 0;
};

namespace detail {

/// Substitutes every inner iv (ivs defined by loops within the packing loop's
/// body) in `expr` by its loop's single lower/upper-relative bound, recursing
/// until only outer ivs remain. `atLower` picks the lower bound; otherwise
/// the maximum value lb + trip*step - step is used, where the relative trip
/// is derived from the bound pair.
struct InnerIvInfo {
  const Operation *loop;
};

struct FootprintCtx {
  std::unordered_map<ValueId, const Operation *> innerLoops;

  void collect(const std::vector<Operation> &ops) {
    for (const auto &op : ops)
      if (op.kind == OpKind::AffineFor) {
        innerLoops[op.iv] = &op;
        collect(op.body);
      }
  }

  /// Rewrites expr over `operands` so no inner iv remains; `vals` receives
  /// the surviving operand list. Each inner iv contributes its lower bound
  /// (atLower) or its maximum admissible value lb + span - 1 (else), where
  /// span is the constant difference of the relative upper bound and the
  /// lower bound. Throws for non-chain shapes.
  AffineExpr resolve(const AffineExpr &expr,
                     const std::vector<ValueId> &operands,
                     std::vector<ValueId> &vals, bool atLower) {
    return simplifyExpr(expr.replace([&](int64_t d) -> AffineExpr {
      ValueId v = operands[d];
      auto it = innerLoops.find(v);
      if (it == innerLoops.end())
        return AffineExpr::dim(operandIndexOf(vals, v));
      const Operation &loop = *it->second;
      if (loop.lower.map.numResults() != 1)
        throw Error("footprint: inner loop lower bound must be a single "
                    "expression");
      AffineExpr lb =
          resolve(loop.lower.map.result(0), loop.lower.operands, vals, atLower);
      if (atLower)
        return lb;
      int64_t span = relativeSpan(loop);
      return lb + (span - 1);
    }));
  }

  /// Constant iteration span of a chain loop: the smallest constant value of
  /// (ub_i - lb) across upper bound results, in iv units.
  int64_t relativeSpan(const Operation &loop) {
    std::optional<int64_t> best;
    for (const auto &ue : loop.upper.map.results()) {
      std::vector<ValueId> merged = loop.upper.operands;
      AffineExpr u = remapIntoSpace(ue, loop.upper.operands, merged);
      AffineExpr l =
          remapIntoSpace(loop.lower.map.result(0), loop.lower.operands, merged);
      AffineExpr diff = simplifyExpr(u - l);
      if (auto c = diff.getIfConstant())
        best = best ? std::min(*best, *c) : *c;
    }
    if (!best || *best <= 0)
      throw Error("footprint: inner loop has no constant relative extent");
    return *best;
  }
};

inline std::vector<const Operation *>
accessesTo(const std::vector<Operation> &ops, ValueId memref, bool &hasStore) {
  std::vector<const Operation *> acc;
  walk(ops, [&](const Operation &op) {
    if ((op.kind == OpKind::Load || op.kind == OpKind::Store) &&
        op.operands[0] == memref) {
      acc.push_back(&op);
      hasStore = hasStore || op.kind == OpKind::Store;
    }
  });
  return acc;
}

} // namespace detail

/// Computes the rectangular footprint of all accesses to `memref` inside the
/// loop at `loopPath`, as a function of the ivs enclosing that loop (the
/// loop's own iv included). All accesses must resolve to one identical box.
inline FootprintBox computeFootprint(const Function &fn, ValueId memref,
                                     std::span<const int64_t> loopPath) {
  const Operation &packLoop = opAtPath(fn, loopPath);
  if (packLoop.kind != OpKind::AffineFor)
    throw Error("footprint: pack placement path must name a loop");

  bool hasStore = false;
  auto accesses = detail::accessesTo(packLoop.body, memref, hasStore);
  if (accesses.empty())
    throw Error("footprint: memref is not accessed under the pack loop");

  const MemRefDescriptor &desc = fn.memrefOf(memref);
  detail::FootprintCtx cx;
  cx.collect(packLoop.body);

  std::optional<FootprintBox> box;
  for (const Operation *op : accesses) {
    FootprintBox b;
    for (int64_t r = 0; r < desc.rank(); ++r) {
      const AffineExpr &e = op->access.map.result(r);
      AffineExpr lo = cx.resolve(e, op->access.operands, b.operands, false);
      // Recompute at lower bounds against the same operand list so both
      // expressions share a dim space.
      AffineExpr base = cx.resolve(e, op->access.operands, b.operands, true);
      AffineExpr extentExpr = simplifyExpr(lo - base + 1);
      auto extent = extentExpr.getIfConstant();
      if (!extent || *extent <= 0)
        throw Error("footprint: access region for dim " + std::to_string(r) +
                    " is not a constant-size box");
      b.base.push_back(base);
      b.extent.push_back(*extent);
    }
    if (!box) {
      box = std::move(b);
    } else {
      bool same = box->operands == b.operands &&
                  box->extent == b.extent;
      for (int64_t r = 0; same && r < desc.rank(); ++r)
        same = box->base[r].structurallyEqual(b.base[r]);
      if (!same)
        throw Error("footprint: accesses to the memref span differing boxes");
    }
  }

  // Clamp dims whose box can run past the memref extent (partial tiles).
  IvRangeEnv env;
  {
    // Ranges of the outer ivs: walk the whole function; loops enclosing the
    // pack loop are exactly those whose body transitively holds it.
    std::function<bool(const std::vector<Operation> &)> descend =
        [&](const std::vector<Operation> &ops) -> bool {
      for (const auto &op : ops) {
        if (&op == &packLoop) {
          env.enter(op);
          return true;
        }
        if (op.kind == OpKind::AffineFor) {
          env.enter(op);
          if (descend(op.body))
            return true;
          env.exit(op);
        }
      }
      return false;
    };
    descend(fn.body);
  }
  box->clamp.resize(desc.rank(), true);
  for (int64_t r = 0; r < desc.rank(); ++r) {
    auto range = env.rangeOfExpr(box->base[r], box->operands);
    if (range && range->hi + box->extent[r] <= desc.shape[r])
      box->clamp[r] = false;
    if (range && range->lo < 0)
      throw Error("footprint: region base can be negative");
  }
  return *box;
}

/// Default pack-buffer layouts: the LHS block gets the kernel-friendly tiled
/// column layout (d0, d1) -> (d0 floordiv M_R, d1, d0 mod M_R) when feeding a
/// microkernel; everything else stays row-major.
enum class PackRole { LHS, RHS };

inline AffineMap choosePackLayout(const TileParams &p, PackRole role,
                                  bool microkernel) {
  if (role == PackRole::LHS && microkernel) {
    if (p.M_R <= 0)
      throw Error("choose_pack_layout: M_R must be positive");
    AffineExpr d0 = AffineExpr::dim(0), d1 = AffineExpr::dim(1);
    return AffineMap(2, 0,
                     {AffineExpr::floorDiv(d0, p.M_R), d1,
                      AffineExpr::mod(d0, p.M_R)});
  }
  return AffineMap(); // identity of the footprint rank
}

/// Packs the region of `spec.memref` accessed under `spec.loopPath` into a
/// fresh buffer: alloc + copy loops at the top of that loop's body, all
/// region accesses rewritten to the buffer, dealloc at the end. Read-only
/// regions only; returns the function unchanged when the memref is not
/// accessed there.
inline Function generatePack(const Function &fn, const PackSpec &spec) {
  verifyOrThrow(fn, "generate_pack");
  Function out = fn;
  Operation &packLoop = opAtPath(out, spec.loopPath);
  if (packLoop.kind != OpKind::AffineFor)
    throw Error("generate_pack: placement path must name a loop");

  bool hasStore = false;
  auto accesses = detail::accessesTo(packLoop.body, spec.memref, hasStore);
  if (accesses.empty())
    return out; // nothing to pack; no dead alloc is emitted
  if (hasStore)
    throw Error("generate_pack: packed region is written inside the pack "
                "scope; only read-only operands are packable");

  FootprintBox box = computeFootprint(fn, spec.memref, spec.loopPath);
  // By value: adding values below may reallocate the function's value table.
  const MemRefDescriptor desc = out.memrefOf(spec.memref);
  int64_t rank = desc.rank();

  MemRefDescriptor bufDesc(box.extent, desc.elem, spec.bufferLayout,
                           spec.alignment);
  if (!isLayoutInjective(bufDesc))
    throw Error("generate_pack: buffer layout is not injective on the "
                "footprint shape");

  OpBuilder b(out);
  ValueId buf = out.addValue(Type::of(bufDesc), "buf");

  // Copy nest: for c_r in [0, min(extent_r, shape_r - base_r)) over each dim.
  std::vector<ValueId> copyIvs;
  for (int64_t r = 0; r < rank; ++r)
    copyIvs.push_back(out.addValue(Type::index(), "p"));
  std::vector<Operation> copyLoops;
  for (int64_t r = 0; r < rank; ++r) {
    MappedValues lb = MappedValues::constant(0);
    std::vector<AffineExpr> ubExprs;
    std::vector<ValueId> ubOps;
    ubExprs.push_back(AffineExpr::constant(box.extent[r]));
    if (box.clamp[r]) {
      AffineExpr remain = AffineExpr::constant(desc.shape[r]) -
                          remapIntoSpace(box.base[r], box.operands, ubOps);
      ubExprs.push_back(simplifyExpr(remain));
    }
    int64_t numUbOps = (int64_t)ubOps.size();
    MappedValues ub(AffineMap(numUbOps, 0, std::move(ubExprs)),
                    std::move(ubOps));
    copyLoops.push_back(b.forOp(copyIvs[r], std::move(lb), compacted(ub)));
  }
  // Body: load original[base + c], store buffer[c].
  {
    std::vector<ValueId> srcOps;
    std::vector<AffineExpr> srcExprs;
    for (int64_t r = 0; r < rank; ++r) {
      AffineExpr base = remapIntoSpace(box.base[r], box.operands, srcOps);
      AffineExpr c = AffineExpr::dim(operandIndexOf(srcOps, copyIvs[r]));
      srcExprs.push_back(simplifyExpr(base + c));
    }
    ValueId tmp = out.addValue(Type::of(desc.elem));
    int64_t numSrcOps = (int64_t)srcOps.size();
    Operation ld = b.load(
        spec.memref,
        MappedValues(AffineMap(numSrcOps, 0, std::move(srcExprs)),
                     std::move(srcOps)),
        tmp);
    Operation st = b.store(buf, tmp, b.ivAccess(copyIvs));
    std::vector<Operation> copyBody;
    copyBody.push_back(std::move(ld));
    copyBody.push_back(std::move(st));
    for (int64_t r = rank - 1; r >= 0; --r) {
      copyLoops[r].body = std::move(copyBody);
      copyBody.clear();
      copyBody.push_back(std::move(copyLoops[r]));
    }
    copyLoops.clear();
    copyLoops.push_back(std::move(copyBody[0]));
  }

  // Rewrite region accesses to the buffer: index = old index - base.
  walk(packLoop.body, [&](Operation &op) {
    if ((op.kind != OpKind::Load && op.kind != OpKind::Store) ||
        op.operands[0] != spec.memref)
      return;
    std::vector<ValueId> ops = op.access.operands;
    std::vector<AffineExpr> exprs;
    for (int64_t r = 0; r < rank; ++r) {
      AffineExpr old = op.access.map.result(r);
      AffineExpr base = remapIntoSpace(box.base[r], box.operands, ops);
      exprs.push_back(simplifyExpr(old - base));
    }
    int64_t numOps = (int64_t)ops.size();
    op.access = compacted(MappedValues(AffineMap(numOps, 0, std::move(exprs)),
                                       std::move(ops)));
    op.operands[0] = buf;
  });

  // Assemble: alloc, copy nest, original body, dealloc.
  std::vector<Operation> newBody;
  newBody.push_back(b.alloc(buf));
  newBody.push_back(std::move(copyLoops[0]));
  for (auto &op : packLoop.body)
    newBody.push_back(std::move(op));
  newBody.push_back(b.dealloc(buf));
  packLoop.body = std::move(newBody);

  verifyOrThrow(out, "generate_pack result");
  return out;
}

/// Normalization of a descriptor: identity layout over the image shape, with
/// the old layout returned as the access rewrite map.
struct NormalizedMemRef {
  MemRefDescriptor desc;
  AffineMap rewrite;
};

inline NormalizedMemRef normalizeMemref(const MemRefDescriptor &desc) {
  if (!isLayoutInjective(desc))
    throw Error("normalize_memref: layout is not injective");
  NormalizedMemRef out;
  out.rewrite = desc.layout;
  out.desc = MemRefDescriptor(desc.normalizedShape(), desc.elem, AffineMap(),
                              desc.alignment);
  return out;
}

/// Rewrites one memref value of `fn` (an alloc'd buffer) to its normalized
/// form, composing the old layout into every access.
inline Function normalizeBufferInFunction(const Function &fn, ValueId memref) {
  Function out = fn;
  const MemRefDescriptor desc = out.memrefOf(memref);
  if (desc.hasIdentityLayout())
    return out;
  NormalizedMemRef norm = normalizeMemref(desc);
  out.values[memref].type = Type::of(norm.desc);
  walk(out, [&](Operation &op) {
    if ((op.kind == OpKind::Load || op.kind == OpKind::Store) &&
        op.operands[0] == memref)
      op.access.map = norm.rewrite.compose(op.access.map);
  });
  verifyOrThrow(out, "normalize_memref result");
  return out;
}

/// Normalizes every alloc'd buffer with a non-identity layout.
inline Function normalizeAllBuffers(const Function &fn) {
  std::vector<ValueId> targets;
  walk(fn, [&](const Operation &op) {
    if (op.kind == OpKind::Alloc &&
        !fn.memrefOf(op.result).hasIdentityLayout())
      targets.push_back(op.result);
  });
  Function out = fn;
  for (ValueId v : targets)
    out = normalizeBufferInFunction(out, v);
  return out;
}

} // namespace hopt
