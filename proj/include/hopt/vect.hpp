//===- vect.hpp - Outer-loop vectorization ------------------------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Vectorizes along a data-parallel loop by rewriting the element types of
// the memrefs whose minor dimension it indexes (memref_shape_cast), dividing
// the loop's range by the vector width, and broadcasting (splat) loads that
// do not vary along the vectorized dimension. The result computes a W-wide
// SIMD version of the scalar program with identical per-lane operation order;
// trip counts that are not a multiple of W are rejected.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/rewrite.hpp"

namespace hopt {

/// Descriptor-level shape cast: divides the minor dimension by `lanes` and
/// makes the element type a vector. Requires an identity layout and a
/// divisible minor extent; the scalar element count is conserved.
inline MemRefDescriptor shapeCastDescriptor(const MemRefDescriptor &desc,
                                            int64_t lanes) {
  if (!desc.hasIdentityLayout())
    throw Error("memref_shape_cast requires an identity layout");
  if (desc.elem.isVector())
    throw Error("memref_shape_cast source already has a vector element type");
  if (desc.rank() < 1 || desc.shape.back() % lanes != 0)
    throw Error("memref_shape_cast: minor extent " +
                std::to_string(desc.shape.empty() ? 0 : desc.shape.back()) +
                " is not divisible by " + std::to_string(lanes));
  MemRefDescriptor out = desc;
  out.shape.back() /= lanes;
  out.elem = ElemType::vector(lanes, desc.elem.scalar);
  if (out.alignment < (int64_t)(lanes * bytesOf(desc.elem.scalar)))
    out.alignment = lanes * bytesOf(desc.elem.scalar);
  return out;
}

/// Vectorizes the loop at `jLoopPath` by width W. Memrefs accessed with the
/// loop's iv as their (unit-stride) minor index are shape-cast to vector
/// element types; loads not varying along the loop are wrapped in splat.
inline Function vectorize(const Function &fn,
                          std::span<const int64_t> jLoopPath, int64_t width) {
  verifyOrThrow(fn, "vectorize");
  if (width < 1 || width > detail::kMaxLanes)
    throw Error("vectorize: unsupported vector width");
  Function out = fn;
  if (width == 1)
    return out; // degenerate: structural identity
  Operation &jLoop = opAtPath(out, jLoopPath);
  if (jLoop.kind != OpKind::AffineFor || jLoop.step != 1)
    throw Error("vectorize: path must name a unit-step loop");
  ValueId jIv = jLoop.iv;

  // Classify memrefs accessed under the loop. Any access using the iv must
  // use it solely as the whole minor index (unit stride along j).
  std::unordered_map<ValueId, bool> usesJ; // memref -> accessed with j
  bool sawJStore = false;
  std::vector<Operation *> accessOps;
  walk(jLoop.body, [&](Operation &op) {
    if (op.kind != OpKind::Load && op.kind != OpKind::Store)
      return;
    accessOps.push_back(&op);
    ValueId memref = op.operands[0];
    int64_t jDim = -1;
    for (size_t d = 0; d < op.access.operands.size(); ++d)
      if (op.access.operands[d] == jIv)
        jDim = (int64_t)d;
    bool usesIv = false;
    if (jDim >= 0) {
      int64_t last = op.access.map.numResults() - 1;
      for (int64_t r = 0; r < op.access.map.numResults(); ++r) {
        const AffineExpr &e = op.access.map.result(r);
        if (!e.usesDim(jDim))
          continue;
        usesIv = true;
        bool pureMinor = r == last && e.kind() == ExprKind::Dim;
        if (!pureMinor)
          throw Error("vectorize: access to " +
                      out.values[memref].name +
                      " is not unit-stride along the vectorized loop");
      }
    }
    auto [it, inserted] = usesJ.emplace(memref, usesIv);
    if (!inserted && it->second != usesIv)
      throw Error("vectorize: memref " + out.values[memref].name +
                  " is accessed both with and without the vectorized iv");
    if (usesIv && op.kind == OpKind::Store)
      sawJStore = true;
    if (!usesIv && op.kind == OpKind::Store)
      throw Error("vectorize: store to " + out.values[memref].name +
                  " does not vary along the vectorized loop (reduction "
                  "dimension?)");
  });
  if (accessOps.empty() || !sawJStore)
    throw Error("vectorize: loop carries no vectorizable stores");

  // Shape-cast each j-indexed memref; they must be function parameters with
  // identity layout (the pipeline vectorizes before packing). The cast ops
  // are inserted at the very end so the loop reference stays valid.
  std::unordered_map<ValueId, ValueId> castOf;
  std::vector<Operation> casts;
  {
    OpBuilder b(out);
    for (auto &[memref, uses] : usesJ) {
      if (!uses)
        continue;
      bool isParam = false;
      for (ValueId p : out.params)
        isParam = isParam || p == memref;
      if (!isParam)
        throw Error("vectorize: only parameter memrefs can be shape-cast");
      MemRefDescriptor cast = shapeCastDescriptor(out.memrefOf(memref), width);
      ValueId castVal =
          out.addValue(Type::of(std::move(cast)), out.values[memref].name + "v");
      casts.push_back(b.shapeCast(memref, castVal));
      castOf[memref] = castVal;
    }
    // Deterministic order: sort by source value id.
    std::sort(casts.begin(), casts.end(), [](const Operation &a,
                                             const Operation &b) {
      return a.operands[0] < b.operands[0];
    });
  }

  // Rescale the loop's bounds into vector units: every bound expression must
  // be exactly divisible by the width.
  auto rescale = [&](MappedValues &mv) {
    std::vector<AffineExpr> rs;
    for (const auto &e : mv.map.results()) {
      detail::LinearForm lf = detail::flatten(simplifyExpr(e));
      if (!lf.divisibleBy(width))
        throw Error("vectorize: loop bound is not a multiple of the vector "
                    "width " + std::to_string(width));
      detail::LinearForm scaled;
      scaled.constant = lf.constant / width;
      for (auto &t : lf.terms)
        scaled.terms.emplace_back(t.first, t.second / width);
      rs.push_back(detail::rebuild(scaled));
    }
    mv.map = AffineMap(mv.map.numDims(), 0, std::move(rs));
  };
  rescale(jLoop.lower);
  rescale(jLoop.upper);

  // Retarget accesses and retype the body's element values.
  for (Operation *op : accessOps) {
    auto it = castOf.find(op->operands[0]);
    if (it != castOf.end())
      op->operands[0] = it->second;
  }
  // Loads from scalar memrefs feed vector arithmetic via splats; everything
  // else becomes vector-typed. Process ops in order, inserting splats after
  // scalar loads whose results reach vector ops.
  {
    // All arithmetic in the loop becomes W-wide.
    std::function<void(std::vector<Operation> &)> retype =
        [&](std::vector<Operation> &ops) {
          for (size_t i = 0; i < ops.size(); ++i) {
            Operation &op = ops[i];
            if (op.kind == OpKind::AffineFor) {
              retype(op.body);
              continue;
            }
            if (op.kind == OpKind::Load) {
              const ElemType &e = out.memrefOf(op.operands[0]).elem;
              out.values[op.result].type = Type::of(e);
              if (!e.isVector()) {
                // Broadcast for use by vector arithmetic.
                ValueId splatVal = out.addValue(
                    Type::of(ElemType::vector(width, e.scalar)));
                OpBuilder b(out);
                Operation sp = b.splat(op.result, splatVal);
                ValueId scalarRes = op.result;
                ops.insert(ops.begin() + i + 1, std::move(sp));
                // Rewire scalar uses (arith only) to the splat.
                for (size_t j = i + 2; j < ops.size(); ++j) {
                  std::vector<Operation> one{std::move(ops[j])};
                  walk(one, [&](Operation &use) {
                    if (use.kind == OpKind::Add || use.kind == OpKind::Mul ||
                        use.kind == OpKind::Fma)
                      for (ValueId &v : use.operands)
                        if (v == scalarRes)
                          v = splatVal;
                  });
                  ops[j] = std::move(one[0]);
                }
                ++i;
              }
              continue;
            }
            if (op.kind == OpKind::Add || op.kind == OpKind::Mul ||
                op.kind == OpKind::Fma) {
              ElemType t = out.typeOf(op.operands[0]).elem;
              out.values[op.result].type =
                  Type::of(ElemType::vector(width, t.scalar));
            }
          }
        };
    retype(jLoop.body);
  }

  out.body.insert(out.body.begin(), std::make_move_iterator(casts.begin()),
                  std::make_move_iterator(casts.end()));
  verifyOrThrow(out, "vectorize result");
  return out;
}

/// Lane count for the machine vector width in bits.
inline int64_t lanesFor(int64_t vectorBits, ScalarKind k) {
  return vectorBits / (8 * bytesOf(k));
}

} // namespace hopt
