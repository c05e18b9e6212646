//===- xform.hpp - Unroll-and-jam, full unroll, scalar replacement -----------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// unrollJam replicates a loop body `factor` times (iv + u*step), fusing inner
// loops pairwise, with a cleanup loop when the trip count is not a known
// multiple of the factor. The interleaving-safety check is syntactic
// (provably distinct store addresses across replicas), which covers the GEMM
// register tiles; anything it cannot prove is rejected.
//
// scalarReplace promotes loop-invariant load/store pairs into single-element
// buffers hoisted around the loop, forwards stored values to later loads of
// the same location, drops dead stores, deduplicates identical loads, and
// hoists loop-invariant loads.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/rewrite.hpp"

namespace hopt {

namespace detail {

/// trip-count expressions ceil((ub_i - lb) / step) over a merged operand
/// space; requires a single lower-bound expression.
struct TripInfo {
  std::vector<ValueId> operands;
  AffineExpr lowerExpr;
  std::vector<AffineExpr> tripExprs;
};

inline TripInfo tripCount(const Operation &loop) {
  if (loop.lower.map.numResults() != 1)
    throw Error("unroll: loop lower bound must be a single expression");
  TripInfo t;
  t.lowerExpr = remapIntoSpace(loop.lower.map.result(0), loop.lower.operands,
                               t.operands);
  for (const auto &u : loop.upper.map.results()) {
    AffineExpr ue = remapIntoSpace(u, loop.upper.operands, t.operands);
    t.tripExprs.push_back(simplifyExpr(AffineExpr::floorDiv(
        ue - t.lowerExpr + (loop.step - 1), loop.step)));
  }
  return t;
}

/// Replaces the op at ops[idx] with `repl` (may be empty).
inline void spliceAt(std::vector<Operation> &ops, size_t idx,
                     std::vector<Operation> repl) {
  ops.erase(ops.begin() + idx);
  ops.insert(ops.begin() + idx, std::make_move_iterator(repl.begin()),
             std::make_move_iterator(repl.end()));
}

/// Body of `ops` replicated `factor` times with iv := iv + u*step, inner
/// loops fused: straight-line runs are emitted per-replica consecutively,
/// loops once with their bodies jammed recursively.
inline std::vector<Operation> jamOps(Function &fn,
                                     const std::vector<Operation> &ops,
                                     ValueId iv, int64_t step, int64_t factor) {
  std::vector<Operation> out;
  size_t i = 0;
  while (i < ops.size()) {
    if (ops[i].kind == OpKind::AffineFor) {
      const Operation &inner = ops[i];
      for (ValueId v : inner.lower.operands)
        if (v == iv)
          throw Error("unroll-and-jam: inner loop bounds depend on the "
                      "jammed iv");
      for (ValueId v : inner.upper.operands)
        if (v == iv)
          throw Error("unroll-and-jam: inner loop bounds depend on the "
                      "jammed iv");
      Operation fused = inner;
      fused.body = jamOps(fn, inner.body, iv, step, factor);
      out.push_back(std::move(fused));
      ++i;
      continue;
    }
    size_t runEnd = i;
    while (runEnd < ops.size() && ops[runEnd].kind != OpKind::AffineFor)
      ++runEnd;
    std::vector<Operation> run(ops.begin() + i, ops.begin() + runEnd);
    for (int64_t u = 0; u < factor; ++u) {
      std::unordered_map<ValueId, ValueId> rename;
      std::vector<Operation> clone = cloneWithFreshValues(fn, run, rename);
      if (u > 0)
        substituteValueInOps(clone, iv, AffineExpr::dim(0) + u * step, {iv});
      for (auto &op : clone)
        out.push_back(std::move(op));
    }
    i = runEnd;
  }
  return out;
}

/// True when two accesses are provably distinct at equal valuations of all
/// shared operands: some dimension differs by a nonzero constant.
inline bool distinctAtSharedIvs(const MappedValues &a, const MappedValues &b) {
  if (a.map.numResults() != b.map.numResults())
    return true;
  for (int64_t r = 0; r < a.map.numResults(); ++r) {
    std::vector<ValueId> merged = a.operands;
    AffineExpr ea = a.map.result(r);
    AffineExpr eb = remapIntoSpace(b.map.result(r), b.operands, merged);
    AffineExpr diff = simplifyExpr(ea - eb);
    if (auto c = diff.getIfConstant())
      if (*c != 0)
        return true;
  }
  return false;
}

/// Conflict check for jamming: for every pair of same-memref accesses with a
/// store involved, replicas at distinct unroll offsets must touch provably
/// distinct addresses in a dimension whose index does not vary with any loop
/// nested inside the jammed body.
inline void checkJamSafety(const Function &fn,
                           const std::vector<Operation> &body, ValueId iv,
                           int64_t step, int64_t factor) {
  bool hasInnerFor = false;
  std::unordered_set<ValueId> innerIvs;
  walk(body, [&](const Operation &op) {
    if (op.kind == OpKind::AffineFor) {
      hasInnerFor = true;
      innerIvs.insert(op.iv);
    }
  });
  if (!hasInnerFor)
    return; // plain unroll: replica order is the original order

  struct MemAccess {
    const Operation *op;
  };
  std::vector<MemAccess> accesses;
  walk(body, [&](const Operation &op) {
    if (op.kind == OpKind::Load || op.kind == OpKind::Store)
      accesses.push_back({&op});
  });

  auto usesInnerIv = [&](const MappedValues &mv, const AffineExpr &e) {
    for (size_t d = 0; d < mv.operands.size(); ++d)
      if (innerIvs.count(mv.operands[d]) && e.usesDim((int64_t)d))
        return true;
    return false;
  };

  for (size_t x = 0; x < accesses.size(); ++x) {
    for (size_t y = x; y < accesses.size(); ++y) {
      const Operation &X = *accesses[x].op;
      const Operation &Y = *accesses[y].op;
      if (X.operands[0] != Y.operands[0])
        continue;
      if (X.kind != OpKind::Store && Y.kind != OpKind::Store)
        continue;
      bool safe = false;
      for (int64_t r = 0; !safe && r < X.access.map.numResults(); ++r) {
        const AffineExpr &ex = X.access.map.result(r);
        const AffineExpr &ey = Y.access.map.result(r);
        if (usesInnerIv(X.access, ex) || usesInnerIv(Y.access, ey))
          continue;
        bool allDistinct = true;
        for (int64_t u1 = 0; allDistinct && u1 < factor; ++u1) {
          for (int64_t u2 = 0; allDistinct && u2 < factor; ++u2) {
            if (u1 == u2)
              continue;
            std::vector<ValueId> merged = X.access.operands;
            AffineExpr sx = ex.replace([&](int64_t d) -> AffineExpr {
              AffineExpr base = AffineExpr::dim(d);
              return X.access.operands[d] == iv ? base + u1 * step : base;
            });
            AffineExpr syRaw = remapIntoSpace(ey, Y.access.operands, merged);
            AffineExpr sy = syRaw.replace([&](int64_t d) -> AffineExpr {
              AffineExpr base = AffineExpr::dim(d);
              return merged[d] == iv ? base + u2 * step : base;
            });
            auto c = simplifyExpr(sx - sy).getIfConstant();
            allDistinct = c.has_value() && *c != 0;
          }
        }
        safe = allDistinct;
      }
      if (!safe)
        throw Error("unroll-and-jam: cannot prove replicas access distinct "
                    "addresses of " + fn.values[X.operands[0]].name);
    }
  }
}

} // namespace detail

/// Replicates the loop body `factor` times with the iv advanced by step per
/// replica, jamming inner loops. A cleanup loop covers trip remainders; when
/// the trip count is a known multiple of the factor no cleanup is emitted.
inline Function unrollJam(const Function &fn, std::span<const int64_t> path,
                          int64_t factor) {
  verifyOrThrow(fn, "unroll_jam");
  if (factor < 1)
    throw Error("unroll_jam: factor must be >= 1");
  Function out = fn;
  if (factor == 1)
    return out;
  Operation &loop = opAtPath(out, path);
  if (loop.kind != OpKind::AffineFor)
    throw Error("unroll_jam: path must name a loop");

  detail::TripInfo trip = detail::tripCount(loop);

  // Trip analysis decides the unrolled structure.
  std::optional<int64_t> constTrip;
  {
    bool allConst = true;
    int64_t best = 0;
    for (size_t i = 0; i < trip.tripExprs.size(); ++i) {
      auto c = trip.tripExprs[i].getIfConstant();
      if (!c) {
        allConst = false;
        break;
      }
      best = i == 0 ? *c : std::min(best, *c);
    }
    if (allConst)
      constTrip = std::max<int64_t>(best, 0);
  }

  bool divisible = true;
  for (const auto &te : trip.tripExprs)
    divisible = divisible && largestKnownDivisor(te) % factor == 0;
  if (constTrip)
    divisible = *constTrip % factor == 0;

  detail::checkJamSafety(out, loop.body, loop.iv, loop.step, factor);

  int64_t step = loop.step;
  auto loopPos = path.back();
  std::vector<Operation> *parent =
      path.size() == 1
          ? &out.body
          : &opAtPath(out, path.subspan(0, path.size() - 1)).body;

  if (constTrip && *constTrip < factor)
    return out; // nothing to gain; keep the loop as is

  if (divisible) {
    // Same bounds, widened step, jammed body; every instance's trip count is
    // a multiple of the factor so no cleanup is needed.
    ValueId ivId = loop.iv;
    std::vector<Operation> jammed =
        detail::jamOps(out, loop.body, ivId, step, factor);
    if (constTrip && *constTrip == factor) {
      // Single main iteration: inline with iv := lb.
      substituteValueInOps(jammed, ivId, trip.lowerExpr, trip.operands);
      detail::spliceAt(*parent, loopPos, std::move(jammed));
      verifyOrThrow(out, "unroll_jam result");
      return out;
    }
    loop.body = std::move(jammed);
    loop.step = step * factor;
    verifyOrThrow(out, "unroll_jam result");
    return out;
  }

  // Remainders exist: build main + cleanup. Requires a computable main upper
  // bound, i.e. either a constant trip count or a single upper bound expr.
  AffineExpr mainUbExpr;
  if (constTrip) {
    int64_t mainTrip = *constTrip - *constTrip % factor;
    mainUbExpr = simplifyExpr(trip.lowerExpr + mainTrip * step);
  } else if (trip.tripExprs.size() == 1) {
    AffineExpr mainTrip = AffineExpr::floorDiv(trip.tripExprs[0], factor);
    mainUbExpr =
        simplifyExpr(trip.lowerExpr +
                     AffineExpr::mul(mainTrip, AffineExpr::constant(factor)) *
                         step);
  } else {
    throw Error("unroll_jam: trip count has multiple min bounds and is not a "
                "known multiple of the factor; cleanup lower bound is not "
                "affine");
  }

  MappedValues mainUb = compacted(
      MappedValues(AffineMap((int64_t)trip.operands.size(), 0, {mainUbExpr}),
                   trip.operands));

  // Cleanup loop: original body with fresh values, from mainUb to the old ub.
  Operation cleanup;
  {
    ValueId cleanupIv = out.addValue(Type::index(), "ic");
    std::unordered_map<ValueId, ValueId> rename{{loop.iv, cleanupIv}};
    OpBuilder b(out);
    cleanup = b.forOp(cleanupIv, mainUb, loop.upper, step,
                      cloneWithFreshValues(out, loop.body, rename));
  }

  std::vector<Operation> jammed =
      detail::jamOps(out, loop.body, loop.iv, step, factor);
  loop.body = std::move(jammed);
  loop.step = step * factor;
  loop.upper = mainUb;

  parent->insert(parent->begin() + loopPos + 1, std::move(cleanup));
  verifyOrThrow(out, "unroll_jam result");
  return out;
}

/// Eliminates a constant-trip loop by replicating its body once per
/// iteration with iv := lb + t*step.
inline Function unrollFull(const Function &fn, std::span<const int64_t> path,
                           int64_t cap = 64) {
  verifyOrThrow(fn, "unroll_full");
  Function out = fn;
  Operation &loop = opAtPath(out, path);
  if (loop.kind != OpKind::AffineFor)
    throw Error("unroll_full: path must name a loop");
  detail::TripInfo trip = detail::tripCount(loop);
  std::optional<int64_t> constTrip;
  for (size_t i = 0; i < trip.tripExprs.size(); ++i) {
    auto c = trip.tripExprs[i].getIfConstant();
    if (!c)
      throw Error("unroll_full: trip count is not constant");
    constTrip = i == 0 ? *c : std::min(*constTrip, *c);
  }
  int64_t tripN = std::max<int64_t>(*constTrip, 0);
  if (tripN > cap)
    throw Error("unroll_full: trip count " + std::to_string(tripN) +
                " exceeds the cap of " + std::to_string(cap));

  std::vector<Operation> expanded;
  for (int64_t t = 0; t < tripN; ++t) {
    std::unordered_map<ValueId, ValueId> rename;
    std::vector<Operation> clone =
        cloneWithFreshValues(out, loop.body, rename);
    substituteValueInOps(clone, loop.iv,
                         simplifyExpr(trip.lowerExpr + t * loop.step),
                         trip.operands);
    for (auto &op : clone)
      expanded.push_back(std::move(op));
  }
  std::vector<Operation> *parent =
      path.size() == 1
          ? &out.body
          : &opAtPath(out, path.subspan(0, path.size() - 1)).body;
  detail::spliceAt(*parent, path.back(), std::move(expanded));
  verifyOrThrow(out, "unroll_full result");
  return out;
}

//===----------------------------------------------------------------------===//
// Scalar replacement
//===----------------------------------------------------------------------===//

namespace detail {

inline std::string accessKey(const Operation &op) {
  MappedValues n = normalized(op.access);
  std::string key = std::to_string(op.operands[0]) + "|";
  for (ValueId v : n.operands)
    key += std::to_string(v) + ",";
  key += "|";
  for (const auto &r : n.map.results()) {
    // Compact structural key; the affine printer gives a canonical string.
    key += " ;";
    std::function<void(const AffineExpr &)> enc = [&](const AffineExpr &e) {
      key += std::to_string((int)e.kind());
      switch (e.kind()) {
      case ExprKind::Constant:
      case ExprKind::Dim:
      case ExprKind::Symbol:
        key += e.kind() == ExprKind::Constant
                   ? ":" + std::to_string(e.constantValue())
                   : ":" + std::to_string(e.index());
        break;
      default:
        key += "(";
        enc(e.lhs());
        key += ",";
        enc(e.rhs());
        key += ")";
      }
    };
    enc(r);
  }
  return key;
}

/// Applies result-value replacements through ops (operand lists only; access
/// maps hold index values which are never load results).
inline void replaceUses(std::vector<Operation> &ops,
                        const std::unordered_map<ValueId, ValueId> &repl) {
  if (repl.empty())
    return;
  walk(ops, [&](Operation &op) {
    for (ValueId &v : op.operands) {
      auto it = repl.find(v);
      if (it != repl.end())
        v = it->second;
    }
  });
}

/// Store-to-load forwarding, dead store elimination, and duplicate load
/// elimination within the straight-line runs of one region. Loops, calls,
/// and deallocs are barriers.
inline void cleanStraightLine(std::vector<Operation> &ops) {
  std::unordered_map<ValueId, ValueId> repl;
  std::vector<char> dead(ops.size(), 0);

  struct StoreInfo {
    size_t pos;
    ValueId value;
    const Operation *op;
  };
  std::unordered_map<std::string, StoreInfo> lastStore;
  std::unordered_map<std::string, ValueId> seenLoad;
  // Loads of a memref since a store that are not provably distinct from it
  // block dead-store elimination.
  auto anyAliasingLoadSince = [&](const Operation &store, size_t from,
                                  size_t to) {
    for (size_t i = from + 1; i < to; ++i) {
      if (dead[i])
        continue;
      const Operation &op = ops[i];
      if (op.kind == OpKind::Load && op.operands[0] == store.operands[0] &&
          !distinctAtSharedIvs(op.access, store.access))
        return true;
    }
    return false;
  };

  auto barrier = [&](bool full, ValueId memref = kNoValue) {
    if (full) {
      lastStore.clear();
      seenLoad.clear();
      return;
    }
    for (auto it = lastStore.begin(); it != lastStore.end();) {
      if (it->second.op->operands[0] == memref)
        it = lastStore.erase(it);
      else
        ++it;
    }
    std::erase_if(seenLoad, [&](const auto &kv) {
      return kv.first.rfind(std::to_string(memref) + "|", 0) == 0;
    });
  };

  for (size_t i = 0; i < ops.size(); ++i) {
    Operation &op = ops[i];
    for (ValueId &v : op.operands) {
      auto it = repl.find(v);
      if (it != repl.end())
        v = it->second;
    }
    switch (op.kind) {
    case OpKind::AffineFor:
    case OpKind::Call:
      barrier(true);
      break;
    case OpKind::Dealloc:
      barrier(false, op.operands[0]);
      break;
    case OpKind::Load: {
      std::string key = accessKey(op);
      if (auto it = lastStore.find(key); it != lastStore.end()) {
        repl[op.result] = it->second.value; // forward the stored value
        dead[i] = 1;
        break;
      }
      if (auto it = seenLoad.find(key); it != seenLoad.end()) {
        repl[op.result] = it->second; // duplicate load
        dead[i] = 1;
        break;
      }
      seenLoad.emplace(std::move(key), op.result);
      break;
    }
    case OpKind::Store: {
      std::string key = accessKey(op);
      if (auto it = lastStore.find(key); it != lastStore.end()) {
        if (!anyAliasingLoadSince(*it->second.op, it->second.pos, i))
          dead[it->second.pos] = 1;
      }
      // Invalidate loads of this memref that may alias the store.
      std::erase_if(seenLoad, [&](const auto &kv) {
        if (kv.first.rfind(std::to_string(op.operands[0]) + "|", 0) != 0)
          return false;
        ValueId loadRes = kv.second;
        for (size_t j = 0; j < i; ++j)
          if (!dead[j] && ops[j].kind == OpKind::Load &&
              ops[j].result == loadRes)
            return !distinctAtSharedIvs(ops[j].access, op.access);
        return true;
      });
      lastStore[key] = {i, op.operands[1], &op};
      break;
    }
    default:
      break;
    }
  }

  std::vector<Operation> kept;
  kept.reserve(ops.size());
  for (size_t i = 0; i < ops.size(); ++i)
    if (!dead[i])
      kept.push_back(std::move(ops[i]));
  ops = std::move(kept);
  replaceUses(ops, repl);
}

struct ScalarReplaceCtx {
  Function &fn;
  IvRangeEnv env;

  /// Interval env covering the loop's own iv and every nested iv; used for
  /// may-alias range reasoning inside the loop.
  IvRangeEnv innerEnv(const Operation &loop) {
    IvRangeEnv inner = env;
    inner.enter(loop);
    std::function<void(const std::vector<Operation> &)> rec =
        [&](const std::vector<Operation> &ops) {
          for (const auto &op : ops)
            if (op.kind == OpKind::AffineFor) {
              inner.enter(op);
              rec(op.body);
            }
        };
    rec(loop.body);
    return inner;
  }

  bool provablyDistinct(const IvRangeEnv &ienv, const MappedValues &a,
                        const MappedValues &b) {
    if (a.map.numResults() != b.map.numResults())
      return true;
    for (int64_t r = 0; r < a.map.numResults(); ++r) {
      std::vector<ValueId> merged = a.operands;
      AffineExpr ea = a.map.result(r);
      AffineExpr eb = remapIntoSpace(b.map.result(r), b.operands, merged);
      auto range = ienv.rangeOfExpr(simplifyExpr(ea - eb), merged);
      if (range && (range->lo > 0 || range->hi < 0))
        return true;
    }
    return false;
  }

  /// Promotes invariant load/store groups of `loop` into 1-element buffers.
  void promote(Operation &loop, std::vector<Operation> &pre,
               std::vector<Operation> &post) {
    if (!env.provablyNonEmpty(loop))
      return;
    struct Group {
      ValueId memref;
      MappedValues access;
      std::vector<Operation *> members;
      bool hasLoad = false, hasStore = false, firstIsLoad = false;
    };
    std::vector<Group> groups;
    std::unordered_map<std::string, size_t> groupIndex;
    for (auto &op : loop.body) {
      if (op.kind != OpKind::Load && op.kind != OpKind::Store)
        continue;
      bool invariant = true;
      for (ValueId v : op.access.operands)
        invariant = invariant && v != loop.iv;
      if (!invariant)
        continue;
      std::string key = accessKey(op);
      auto [it, inserted] = groupIndex.emplace(key, groups.size());
      if (inserted)
        groups.push_back(
            {op.operands[0], op.access, {}, false, false, op.kind == OpKind::Load});
      Group &g = groups[it->second];
      g.members.push_back(&op);
      g.hasLoad = g.hasLoad || op.kind == OpKind::Load;
      g.hasStore = g.hasStore || op.kind == OpKind::Store;
    }

    IvRangeEnv ienv = innerEnv(loop);
    OpBuilder b(fn);
    for (auto &g : groups) {
      if (!g.hasLoad || !g.hasStore)
        continue;
      // Every other access to the memref inside the loop must be provably
      // distinct from the group's location.
      bool ok = true;
      walk(loop.body, [&](const Operation &op) {
        if (!ok || (op.kind != OpKind::Load && op.kind != OpKind::Store) ||
            op.operands[0] != g.memref)
          return;
        for (Operation *m : g.members)
          if (&op == m)
            return;
        ok = provablyDistinct(ienv, op.access, g.access);
      });
      if (!ok)
        continue;

      MemRefDescriptor bufDesc({1}, fn.memrefOf(g.memref).elem);
      ValueId buf = fn.addValue(Type::of(bufDesc), "acc");
      MappedValues zero(AffineMap(0, 0, {AffineExpr::constant(0)}), {});

      ValueId pin = fn.addValue(Type::of(bufDesc.elem));
      pre.push_back(b.alloc(buf));
      pre.push_back(b.load(g.memref, g.access, pin));
      pre.push_back(b.store(buf, pin, zero));
      for (Operation *m : g.members) {
        m->operands[0] = buf;
        m->access = zero;
      }
      ValueId pout = fn.addValue(Type::of(bufDesc.elem));
      post.push_back(b.load(buf, zero, pout));
      post.push_back(b.store(g.memref, pout, g.access));
      post.push_back(b.dealloc(buf));
    }
  }

  /// Hoists loop-invariant loads of unwritten memrefs out of `loop`.
  void hoist(Operation &loop, std::vector<Operation> &pre) {
    if (!env.provablyNonEmpty(loop))
      return;
    std::unordered_set<ValueId> written;
    walk(loop.body, [&](const Operation &op) {
      if (op.kind == OpKind::Store)
        written.insert(op.operands[0]);
    });
    std::vector<Operation> kept;
    for (auto &op : loop.body) {
      bool hoistable = op.kind == OpKind::Load && !written.count(op.operands[0]);
      if (hoistable)
        for (ValueId v : op.access.operands)
          hoistable = hoistable && v != loop.iv;
      if (hoistable)
        pre.push_back(std::move(op));
      else
        kept.push_back(std::move(op));
    }
    loop.body = std::move(kept);
  }

  void processRegion(std::vector<Operation> &ops) {
    for (size_t i = 0; i < ops.size(); ++i) {
      if (ops[i].kind != OpKind::AffineFor)
        continue;
      env.enter(ops[i]);
      processRegion(ops[i].body);
      env.exit(ops[i]);
      std::vector<Operation> pre, post;
      promote(ops[i], pre, post);
      hoist(ops[i], pre);
      if (!post.empty())
        ops.insert(ops.begin() + i + 1, std::make_move_iterator(post.begin()),
                   std::make_move_iterator(post.end()));
      if (!pre.empty()) {
        ops.insert(ops.begin() + i, std::make_move_iterator(pre.begin()),
                   std::make_move_iterator(pre.end()));
        i += pre.size();
      }
      i += post.size();
    }
    cleanStraightLine(ops);
  }
};

} // namespace detail

/// Reduction promotion, store-to-load forwarding, redundant-load removal,
/// and invariant-load hoisting. A no-op where nothing applies.
inline Function scalarReplace(const Function &fn) {
  verifyOrThrow(fn, "scalar_replace");
  Function out = fn;
  detail::ScalarReplaceCtx cx{out, {}};
  cx.processRegion(out.body);
  verifyOrThrow(out, "scalar_replace result");
  return out;
}

} // namespace hopt
