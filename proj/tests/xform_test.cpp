//===- xform_test.cpp - Unroll-and-jam and scalar replacement tests -----------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <numeric>

using namespace hopt;
using namespace hopt::test;

namespace {

/// f(T): for i in [0, trip): T[i] += i, as a 1-d nest to unroll.
Function makeAccumNest(int64_t trip) {
  TraceNest nest = makeTraceNest(std::vector<int64_t>{trip});
  return nest.fn;
}

std::vector<int64_t> executedIvs(const Function &fn, int64_t trip) {
  TensorBuffer T(MemRefDescriptor({trip}, ElemType::f64()));
  TensorBuffer CNT(MemRefDescriptor({1}, ElemType::f64()));
  for (int64_t i = 0; i < trip; ++i)
    T.f64()[i] = -1.0;
  interpret(fn, {&T, &CNT});
  std::vector<int64_t> seq;
  for (int64_t i = 0; i < trip; ++i)
    if (T.f64()[i] >= 0)
      seq.push_back(i);
  return seq;
}

} // namespace

TEST_CASE("unroll-and-jam with an exact multiple needs no cleanup",
          "[xform]") {
  Function fn = makeAccumNest(8);
  Function u = unrollJam(fn, std::vector<int64_t>{0}, 4);
  // Still a single loop, now stepping by 4 with 4 replicas.
  REQUIRE(u.body.size() == 1);
  CHECK(u.body[0].step == 4);
  int64_t stores = 0;
  for (const auto &op : u.body[0].body)
    stores += op.kind == OpKind::Store;
  CHECK(stores == 8); // 4 replicas x (trace store + counter store)
  auto ivs = executedIvs(u, 8);
  CHECK(ivs.size() == 8);
}

TEST_CASE("unroll-and-jam emits a cleanup loop for remainders", "[xform]") {
  for (int64_t trip : {10, 13}) {
    Function fn = makeAccumNest(trip);
    Function u = unrollJam(fn, std::vector<int64_t>{0}, 4);
    REQUIRE(u.body.size() == 2); // main + cleanup
    CHECK(*u.body[0].upper.getIfSingleConstant() == trip - trip % 4);
    CHECK(*u.body[1].lower.getIfSingleConstant() == trip - trip % 4);
    CHECK(*u.body[1].upper.getIfSingleConstant() == trip);
    // Executed iv multiset equals {0..trip-1}.
    auto ivs = executedIvs(u, trip);
    std::vector<int64_t> expect(trip);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(ivs == expect);
  }
}

TEST_CASE("trips below the factor are left alone", "[xform]") {
  Function fn = makeAccumNest(2);
  Function u = unrollJam(fn, std::vector<int64_t>{0}, 4);
  CHECK(structurallyEqual(fn, u));
}

TEST_CASE("register-tile jam produces the M_R x N_R unrolled body",
          "[xform]") {
  TileParams tp{8, 4, 4, 8, 1, TileParams::InnerPerm::JI};
  Function fn =
      expandMatmul(makeMatmulFunction(16, 16, 8, ElemType::f64(), tp));
  Function tiled = applyTilingSchedule(fn, appliedScheduleFor(tp));
  // Unroll the i and j point loops (innermost two), fully.
  auto nest = detail::mainNestPaths(tiled);
  Function u = unrollJam(tiled, nest.back(), tp.M_R);
  nest = detail::mainNestPaths(u);
  u = unrollJam(u, nest.back(), tp.N_R);
  // The k point loop is now innermost with M_R * N_R multiplies per step.
  nest = detail::mainNestPaths(u);
  const Operation &kLoop = opAtPath(u, nest.back());
  int64_t muls = 0;
  for (const auto &op : kLoop.body)
    muls += op.kind == OpKind::Mul;
  CHECK(muls == 32);

  // Semantics preserved exactly.
  TensorBuffer A = makeBuffer({16, 8}, ScalarKind::F64, 31);
  TensorBuffer B = makeBuffer({8, 16}, ScalarKind::F64, 32);
  TensorBuffer C1 = makeBuffer({16, 16}, ScalarKind::F64, 33);
  TensorBuffer C2(C1.desc);
  C2.copyDataFrom(C1);
  interpret(fn, {&A, &B, &C1});
  interpret(u, {&A, &B, &C2});
  CHECK(bitwiseEqual(C1, C2));
}

TEST_CASE("jam refuses interleavings it cannot prove distinct", "[xform]") {
  // for i { for j { X[0] += j } }: replicas of i all store X[0].
  Function fn;
  fn.name = "clash";
  ValueId X = fn.addParam(MemRefDescriptor({4}, ElemType::f64()), "X");
  OpBuilder b(fn);
  ValueId i = fn.addValue(Type::index(), "i");
  ValueId j = fn.addValue(Type::index(), "j");
  ValueId t = fn.addValue(Type::of(ElemType::f64()));
  MappedValues zero(AffineMap(0, 0, {AffineExpr::constant(0)}), {});
  Operation inner = b.forOp(j, 0, 4);
  inner.body.push_back(b.load(X, zero, t));
  inner.body.push_back(b.store(X, t, zero));
  Operation outer = b.forOp(i, 0, 4);
  outer.body.push_back(std::move(inner));
  fn.body.push_back(std::move(outer));
  CHECK_THROWS_AS(unrollJam(fn, std::vector<int64_t>{0}, 2), Error);
}

TEST_CASE("full unroll inlines constant-trip loops", "[xform]") {
  {
    Function fn = makeAccumNest(1);
    Function u = unrollFull(fn, std::vector<int64_t>{0});
    CHECK(u.body.size() == 5); // the body ops, no loop
    auto ivs = executedIvs(u, 1);
    CHECK(ivs == std::vector<int64_t>{0});
  }
  {
    Function fn = makeAccumNest(4);
    Function u = unrollFull(fn, std::vector<int64_t>{0});
    int64_t stores = 0;
    for (const auto &op : u.body)
      stores += op.kind == OpKind::Store;
    CHECK(stores == 8); // 4 iterations x (trace + counter)
    auto ivs = executedIvs(u, 4);
    CHECK(ivs == std::vector<int64_t>{0, 1, 2, 3});
  }
}

TEST_CASE("full unroll enforces constant trips and the cap", "[xform]") {
  Function fn = makeAccumNest(100);
  CHECK_THROWS_AS(unrollFull(fn, std::vector<int64_t>{0}, 64), Error);
  // Non-constant trip: tile first so the point loop bound depends on the
  // tile iv, then drop the constant.
  TraceNest nest = makeTraceNest(std::vector<int64_t>{10});
  TilingSchedule s{1, {{0, 4}, {0, 1}}};
  Function tiled = applyTilingSchedule(nest.fn, s);
  CHECK_THROWS_AS(unrollFull(tiled, std::vector<int64_t>{0, 0}, 64), Error);
}

TEST_CASE("k-loop unroll by K_U keeps every iteration", "[xform]") {
  // Tiled 1-d nest: outer tile 6, point loop trip 6, unrolled by 2.
  TraceNest nest = makeTraceNest(std::vector<int64_t>{18});
  TilingSchedule s{1, {{0, 6}, {0, 1}}};
  Function tiled = applyTilingSchedule(nest.fn, s);
  Function u = unrollJam(tiled, std::vector<int64_t>{0, 0}, 2);
  auto ivs = executedIvs(u, 18);
  CHECK(ivs.size() == 18);
  const Operation &point = opAtPath(u, std::vector<int64_t>{0, 0});
  CHECK(point.step == 2);
}

TEST_CASE("scalar replacement promotes the register tile's accumulators",
          "[xform]") {
  // Vectorized + tiled + unrolled GEMM at M_R = 4, N_R = 8, W = 4.
  PipelineConfig cfg;
  cfg.m = 16;
  cfg.n = 16;
  cfg.k = 16;
  cfg.tile = {8, 8, 4, 8, 1, TileParams::InnerPerm::JI};
  cfg.flags = {true, true, false, true, true, false};
  MicrokernelRegistry reg;
  Function scalar;
  Function unrolled;
  applyStages(cfg, reg, [&](const std::string &stage, const Function &fn) {
    if (stage == "unroll")
      unrolled = fn;
    if (stage == "scalrep")
      scalar = fn;
  });

  // The innermost (k) loop carries no loads or stores of the C view, and
  // M_R * N_R / W single-element accumulators were created.
  ValueId cView = kNoValue;
  for (const auto &op : scalar.body)
    if (op.kind == OpKind::ShapeCast && op.operands[0] == scalar.params[2])
      cView = op.result;
  REQUIRE(cView != kNoValue);
  auto nest = detail::mainNestPaths(scalar);
  const Operation &kLoop = opAtPath(scalar, nest.back());
  int64_t cTraffic = 0;
  walk(kLoop.body, [&](const Operation &op) {
    if ((op.kind == OpKind::Load || op.kind == OpKind::Store) &&
        op.operands[0] == cView)
      ++cTraffic;
  });
  CHECK(cTraffic == 0);

  int64_t accumulators = 0;
  walk(scalar, [&](const Operation &op) {
    if (op.kind == OpKind::Alloc &&
        scalar.memrefOf(op.result).elementCount() == 1)
      ++accumulators;
  });
  CHECK(accumulators == 4 * 8 / 4);

  // And the rewrite is exact.
  TensorBuffer A = makeBuffer({16, 16}, ScalarKind::F64, 41);
  TensorBuffer B = makeBuffer({16, 16}, ScalarKind::F64, 42);
  TensorBuffer C1 = makeBuffer({16, 16}, ScalarKind::F64, 43);
  TensorBuffer C2(C1.desc);
  C2.copyDataFrom(C1);
  interpret(unrolled, {&A, &B, &C1});
  interpret(scalar, {&A, &B, &C2});
  CHECK(bitwiseEqual(C1, C2));
}

TEST_CASE("iv-dependent stores are not promoted", "[xform]") {
  // for i { C[i] = C[i] + 1 }: the address varies with the loop.
  Function fn;
  fn.name = "varying";
  ValueId C = fn.addParam(MemRefDescriptor({8}, ElemType::f64()), "C");
  OpBuilder b(fn);
  ValueId i = fn.addValue(Type::index(), "i");
  ValueId t = fn.addValue(Type::of(ElemType::f64()));
  ValueId one = fn.addValue(Type::of(ElemType::f64()));
  ValueId sum = fn.addValue(Type::of(ElemType::f64()));
  Operation loop = b.forOp(i, 0, 8);
  loop.body.push_back(b.load(C, b.ivAccess({i}), t));
  Operation cst;
  cst.kind = OpKind::Constant;
  cst.constValue = 1.0;
  cst.constType = ElemType::f64();
  cst.result = one;
  loop.body.push_back(std::move(cst));
  loop.body.push_back(b.binary(OpKind::Add, t, one, sum));
  loop.body.push_back(b.store(C, sum, b.ivAccess({i})));
  fn.body.push_back(std::move(loop));

  Function out = scalarReplace(fn);
  CHECK(structurallyEqual(fn, out));
}

TEST_CASE("duplicate loads are merged and uses rewired", "[xform]") {
  // Two identical loads of B[2, 3] feeding separate stores.
  Function fn;
  fn.name = "dup";
  ValueId B = fn.addParam(MemRefDescriptor({4, 4}, ElemType::f64()), "B");
  ValueId O = fn.addParam(MemRefDescriptor({2}, ElemType::f64()), "O");
  OpBuilder b(fn);
  ValueId t1 = fn.addValue(Type::of(ElemType::f64()));
  ValueId t2 = fn.addValue(Type::of(ElemType::f64()));
  MappedValues at(
      AffineMap(0, 0, {AffineExpr::constant(2), AffineExpr::constant(3)}), {});
  MappedValues o0(AffineMap(0, 0, {AffineExpr::constant(0)}), {});
  MappedValues o1(AffineMap(0, 0, {AffineExpr::constant(1)}), {});
  fn.body.push_back(b.load(B, at, t1));
  fn.body.push_back(b.store(O, t1, o0));
  fn.body.push_back(b.load(B, at, t2));
  fn.body.push_back(b.store(O, t2, o1));

  Function out = scalarReplace(fn);
  int64_t loads = 0;
  walk(out, [&](const Operation &op) { loads += op.kind == OpKind::Load; });
  CHECK(loads == 1);

  TensorBuffer Bb = makeBuffer({4, 4}, ScalarKind::F64, 51);
  TensorBuffer O1(MemRefDescriptor({2}, ElemType::f64()));
  TensorBuffer O2(O1.desc);
  interpret(fn, {&Bb, &O1});
  interpret(out, {&Bb, &O2});
  CHECK(bitwiseEqual(O1, O2));
}

TEST_CASE("store-to-load forwarding reuses the stored value", "[xform]") {
  // store X[0] = a; t = load X[0]; store Y[0] = t.
  Function fn;
  fn.name = "fwd";
  ValueId X = fn.addParam(MemRefDescriptor({1}, ElemType::f64()), "X");
  ValueId Y = fn.addParam(MemRefDescriptor({1}, ElemType::f64()), "Y");
  OpBuilder b(fn);
  MappedValues zero(AffineMap(0, 0, {AffineExpr::constant(0)}), {});
  ValueId a = fn.addValue(Type::of(ElemType::f64()));
  ValueId t = fn.addValue(Type::of(ElemType::f64()));
  Operation cst;
  cst.kind = OpKind::Constant;
  cst.constValue = 6.5;
  cst.constType = ElemType::f64();
  cst.result = a;
  fn.body.push_back(std::move(cst));
  fn.body.push_back(b.store(X, a, zero));
  fn.body.push_back(b.load(X, zero, t));
  fn.body.push_back(b.store(Y, t, zero));

  Function out = scalarReplace(fn);
  int64_t loads = 0;
  walk(out, [&](const Operation &op) { loads += op.kind == OpKind::Load; });
  CHECK(loads == 0);
  TensorBuffer Xb(MemRefDescriptor({1}, ElemType::f64()));
  TensorBuffer Yb(Xb.desc);
  interpret(out, {&Xb, &Yb});
  CHECK(Yb.f64()[0] == 6.5);
}

TEST_CASE("invariant loads hoist out of inner loops", "[xform]") {
  // The tiled (non-unrolled) nest: B[k, j] is invariant in the i point loop
  // and hoists out of it, as in the cache-tiling listing.
  TileParams tp{8, 4, 4, 4, 1, TileParams::InnerPerm::JI};
  Function fn =
      expandMatmul(makeMatmulFunction(16, 16, 8, ElemType::f64(), tp));
  Function tiled = applyTilingSchedule(fn, appliedScheduleFor(tp));
  Function out = scalarReplace(tiled);

  auto nest = detail::mainNestPaths(out);
  const Operation &iPoint = opAtPath(out, nest.back());
  bool bLoadInInnermost = false;
  for (const auto &op : iPoint.body)
    if (op.kind == OpKind::Load && op.operands[0] == out.params[1])
      bLoadInInnermost = true;
  CHECK_FALSE(bLoadInInnermost);

  TensorBuffer A = makeBuffer({16, 8}, ScalarKind::F64, 61);
  TensorBuffer B = makeBuffer({8, 16}, ScalarKind::F64, 62);
  TensorBuffer C1 = makeBuffer({16, 16}, ScalarKind::F64, 63);
  TensorBuffer C2(C1.desc);
  C2.copyDataFrom(C1);
  interpret(tiled, {&A, &B, &C1});
  interpret(out, {&A, &B, &C2});
  CHECK(bitwiseEqual(C1, C2));
}

TEST_CASE("unroll-and-jam on min-bounded loops with divisible trips",
          "[xform]") {
  // The 2088-style chain: point loop under a partial cache tile; the trip
  // count of every instance divides 4 even though a min bound remains.
  TraceNest nest = makeTraceNest(std::vector<int64_t>{2088});
  TilingSchedule s{1, {{0, 180}, {0, 1}}};
  Function tiled = applyTilingSchedule(nest.fn, s);
  const Operation &point = opAtPath(tiled, std::vector<int64_t>{0, 0});
  REQUIRE(point.upper.map.numResults() == 2); // 180 does not divide 2088
  Function u = unrollJam(tiled, std::vector<int64_t>{0, 0}, 4);
  auto ivs = executedIvs(u, 2088);
  CHECK(ivs.size() == 2088);
}
