//===- layout_test.cpp - Footprint, packing, and normalization tests ----------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace hopt;
using namespace hopt::test;

namespace {

const TileParams kStartParams{64, 256, 4, 8, 4, TileParams::InnerPerm::JI};

Function tiledDGEMM(int64_t m = 2088, int64_t n = 2048, int64_t k = 2048) {
  Function fn =
      expandMatmul(makeMatmulFunction(m, n, k, ElemType::f64(), kStartParams));
  return applyTilingSchedule(fn, appliedScheduleFor(kStartParams));
}

} // namespace

TEST_CASE("LHS block footprint is M_C x K_C based at the tile origin",
          "[layout]") {
  Function fn = tiledDGEMM();
  auto nest = detail::mainNestPaths(fn);
  FootprintBox box = computeFootprint(fn, fn.params[0], nest[1]);
  CHECK(box.extent == std::vector<int64_t>{64, 256});
  // Base at (64 * i_tile, 256 * k_tile): evaluate at (kt, it) = (2, 3).
  REQUIRE(box.operands.size() == 2);
  std::vector<int64_t> at{0, 0};
  for (size_t i = 0; i < box.operands.size(); ++i) {
    // operand order: collected from the access walk; identify by value.
    const Operation &ktLoop = opAtPath(fn, nest[0]);
    at[i] = box.operands[i] == ktLoop.iv ? 2 : 3;
  }
  CHECK(box.base[0].evaluate(at) == 64 * 3);
  CHECK(box.base[1].evaluate(at) == 256 * 2);
}

TEST_CASE("RHS panel footprint is K_C x N_R", "[layout]") {
  Function fn = tiledDGEMM();
  auto nest = detail::mainNestPaths(fn);
  FootprintBox box = computeFootprint(fn, fn.params[1], nest[2]);
  CHECK(box.extent == std::vector<int64_t>{256, 8});
}

TEST_CASE("constant-index accesses give unit footprints", "[layout]") {
  Function fn;
  fn.name = "unit";
  ValueId a = fn.addParam(MemRefDescriptor({8, 8}, ElemType::f64()), "A");
  ValueId iv = fn.addValue(Type::index(), "i");
  ValueId t = fn.addValue(Type::of(ElemType::f64()));
  OpBuilder b(fn);
  Operation loop = b.forOp(iv, 0, 4);
  MappedValues constAccess(
      AffineMap(0, 0, {AffineExpr::constant(3), AffineExpr::constant(5)}), {});
  loop.body.push_back(b.load(a, constAccess, t));
  loop.body.push_back(b.store(a, t, constAccess));
  fn.body.push_back(std::move(loop));
  FootprintBox box =
      computeFootprint(fn, a, std::vector<int64_t>{0});
  CHECK(box.extent == std::vector<int64_t>{1, 1});
  CHECK(box.base[0].getIfConstant() == 3);
  CHECK(box.base[1].getIfConstant() == 5);
}

TEST_CASE("packing inserts alloc, copy nest, rewritten body, dealloc",
          "[layout]") {
  Function fn = tiledDGEMM();
  auto nest = detail::mainNestPaths(fn);
  PackSpec spec;
  spec.memref = fn.params[0];
  spec.loopPath = nest[1];
  spec.alignment = 32;
  Function packed = generatePack(fn, spec);
  const Operation &packLoop = opAtPath(packed, nest[1]);
  REQUIRE(packLoop.body.size() == 4);
  CHECK(packLoop.body[0].kind == OpKind::Alloc);
  CHECK(packLoop.body[1].kind == OpKind::AffineFor);
  CHECK(packLoop.body[2].kind == OpKind::AffineFor);
  CHECK(packLoop.body[3].kind == OpKind::Dealloc);
  const MemRefDescriptor &buf = packed.memrefOf(packLoop.body[0].result);
  CHECK(buf.shape == std::vector<int64_t>{64, 256});
  CHECK(buf.alignment == 32);
  // The original memref no longer appears in the compute loop.
  bool stillUsed = false;
  walk(packLoop.body[2].body, [&](const Operation &op) {
    if ((op.kind == OpKind::Load || op.kind == OpKind::Store) &&
        op.operands[0] == fn.params[0])
      stillUsed = true;
  });
  CHECK_FALSE(stillUsed);
}

TEST_CASE("packing an unused memref changes nothing", "[layout]") {
  Function fn = tiledDGEMM(16, 16, 16);
  auto nest = detail::mainNestPaths(fn);
  Function self = fn;
  // A memref parameter that no access mentions.
  Function withExtra = fn;
  ValueId ghost =
      withExtra.addParam(MemRefDescriptor({4, 4}, ElemType::f64()), "G");
  PackSpec spec;
  spec.memref = ghost;
  spec.loopPath = nest[1];
  Function packed = generatePack(withExtra, spec);
  CHECK(structurallyEqual(withExtra, packed));
  (void)self;
}

TEST_CASE("packed buffers satisfy the gather law under random injective "
          "layouts", "[layout]") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 8; ++trial) {
    int64_t th = 3 + (int64_t)(rng() % 6);  // tile height
    int64_t tw = 2 + (int64_t)(rng() % 7);  // tile width
    int64_t m = th * (1 + (int64_t)(rng() % 3));
    int64_t n = tw * (1 + (int64_t)(rng() % 3));
    // A 2-level nest reading X tile by tile and accumulating into Y.
    Function fn;
    fn.name = "gather";
    ValueId X = fn.addParam(MemRefDescriptor({m, n}, ElemType::f64()), "X");
    ValueId Y = fn.addParam(MemRefDescriptor({m, n}, ElemType::f64()), "Y");
    OpBuilder b(fn);
    ValueId it = fn.addValue(Type::index(), "it");
    ValueId jt = fn.addValue(Type::index(), "jt");
    ValueId ii = fn.addValue(Type::index(), "ii");
    ValueId jj = fn.addValue(Type::index(), "jj");
    ValueId v = fn.addValue(Type::of(ElemType::f64()));
    AffineExpr d0 = AffineExpr::dim(0), d1 = AffineExpr::dim(1);

    MappedValues access(
        AffineMap(4, 0,
                  {AffineExpr::dim(0) * th + AffineExpr::dim(2),
                   AffineExpr::dim(1) * tw + AffineExpr::dim(3)}),
        {it, jt, ii, jj});
    Operation jjFor = b.forOp(jj, 0, tw);
    jjFor.body.push_back(b.load(X, access, v));
    jjFor.body.push_back(b.store(Y, v, access));
    Operation iiFor = b.forOp(ii, 0, th);
    iiFor.body.push_back(std::move(jjFor));
    Operation jtFor = b.forOp(jt, 0, n / tw);
    jtFor.body.push_back(std::move(iiFor));
    Operation itFor = b.forOp(it, 0, m / th);
    itFor.body.push_back(std::move(jtFor));
    fn.body.push_back(std::move(itFor));
    verifyOrThrow(fn, "gather-law test nest");

    // Random injective layout: either tiled-rows, tiled-cols, or identity.
    AffineMap layout;
    switch (rng() % 3) {
    case 0:
      layout = AffineMap(
          2, 0, {AffineExpr::floorDiv(d0, 2), d1, AffineExpr::mod(d0, 2)});
      break;
    case 1:
      layout = AffineMap(
          2, 0, {d1, d0});
      break;
    default:
      break; // identity
    }
    if (th % 2 != 0 && !layout.numResults())
      continue;

    PackSpec spec;
    spec.memref = X;
    spec.loopPath = {0, 0}; // under the jt loop
    spec.bufferLayout = layout;
    Function packed = generatePack(fn, spec);

    TensorBuffer Xb = makeBuffer({m, n}, ScalarKind::F64, rng());
    TensorBuffer Y1(MemRefDescriptor({m, n}, ElemType::f64()));
    TensorBuffer Y2(Y1.desc);
    interpret(fn, {&Xb, &Y1});
    interpret(packed, {&Xb, &Y2});
    CHECK(bitwiseEqual(Y1, Y2));
  }
}

TEST_CASE("packing rejects regions that are written", "[layout]") {
  Function fn = tiledDGEMM(16, 16, 16);
  auto nest = detail::mainNestPaths(fn);
  PackSpec spec;
  spec.memref = fn.params[2]; // C is stored in the nest
  spec.loopPath = nest[1];
  CHECK_THROWS_AS(generatePack(fn, spec), Error);
}

TEST_CASE("packing rejects non-injective buffer layouts", "[layout]") {
  Function fn = tiledDGEMM();
  auto nest = detail::mainNestPaths(fn);
  PackSpec spec;
  spec.memref = fn.params[0];
  spec.loopPath = nest[1];
  // (d0, d1) -> (d0 mod 4, d1): collapses rows 0 and 4.
  spec.bufferLayout =
      AffineMap(2, 0, {AffineExpr::mod(AffineExpr::dim(0), 4),
                       AffineExpr::dim(1)});
  CHECK_THROWS_AS(generatePack(fn, spec), Error);
}

TEST_CASE("microkernel LHS layout and defaults", "[layout]") {
  TileParams p{174, 512, 6, 8, 4, TileParams::InnerPerm::JI};
  AffineMap lhs = choosePackLayout(p, PackRole::LHS, true);
  CHECK(toString(lhs) == "(d0, d1) -> (d0 floordiv 6, d1, d0 mod 6)");
  CHECK(choosePackLayout(p, PackRole::RHS, true).numResults() == 0);
  CHECK(choosePackLayout(p, PackRole::LHS, false).numResults() == 0);
}

TEST_CASE("normalization of the tiled LHS layout", "[layout]") {
  AffineExpr d0 = AffineExpr::dim(0), d1 = AffineExpr::dim(1);
  MemRefDescriptor desc(
      {64, 256}, ElemType::f64(),
      AffineMap(2, 0,
                {AffineExpr::floorDiv(d0, 4), d1, AffineExpr::mod(d0, 4)}));
  NormalizedMemRef norm = normalizeMemref(desc);
  CHECK(norm.desc.shape == std::vector<int64_t>{16, 256, 4});
  CHECK(norm.desc.hasIdentityLayout());
  // The rewrite is the old layout: A[i, j] -> A[i floordiv 4, j, i mod 4].
  auto mapped = norm.rewrite.evaluate(std::vector<int64_t>{9, 100});
  CHECK(mapped == std::vector<int64_t>{2, 100, 1});
}

TEST_CASE("identity layouts normalize to themselves", "[layout]") {
  MemRefDescriptor desc({8, 8}, ElemType::f64());
  NormalizedMemRef norm = normalizeMemref(desc);
  CHECK(norm.desc == desc);
}

TEST_CASE("normalization accounts for padded layouts", "[layout]") {
  AffineExpr d0 = AffineExpr::dim(0), d1 = AffineExpr::dim(1);
  // (d0, d1 floordiv 6, d1 mod 6): two dead elements per row (256 % 6 = 4;
  // ceil to 43 panels of 6).
  MemRefDescriptor desc(
      {64, 256}, ElemType::f64(),
      AffineMap(2, 0,
                {d0, AffineExpr::floorDiv(d1, 6), AffineExpr::mod(d1, 6)}));
  NormalizedMemRef norm = normalizeMemref(desc);
  CHECK(norm.desc.shape == std::vector<int64_t>{64, 43, 6});
  CHECK(norm.desc.elementCount() - desc.elementCount() == 64 * 2);

  // The equivalent strided form (d0 * 258 + d1).
  MemRefDescriptor strided({64, 256}, ElemType::f64(),
                           AffineMap(2, 0, {d0 * 258 + d1}));
  NormalizedMemRef snorm = normalizeMemref(strided);
  CHECK(snorm.desc.shape == std::vector<int64_t>{16510});
  CHECK(isLayoutInjective(strided));
}

TEST_CASE("non-injective layouts cannot be normalized", "[layout]") {
  AffineExpr d0 = AffineExpr::dim(0), d1 = AffineExpr::dim(1);
  MemRefDescriptor bad({8, 8}, ElemType::f64(),
                       AffineMap(2, 0, {AffineExpr::mod(d0, 2), d1}));
  CHECK_FALSE(isLayoutInjective(bad));
  CHECK_THROWS_AS(normalizeMemref(bad), Error);
}

TEST_CASE("buffer normalization preserves interpreter semantics", "[layout]") {
  // Pack the LHS with the microkernel layout, then normalize the buffer and
  // compare against the un-normalized function.
  TileParams p{6, 4, 3, 2, 1, TileParams::InnerPerm::JI};
  Function fn = expandMatmul(makeMatmulFunction(12, 4, 8, ElemType::f64(), p));
  Function tiled = applyTilingSchedule(fn, appliedScheduleFor(p));
  auto nest = detail::mainNestPaths(tiled);
  PackSpec spec;
  spec.memref = tiled.params[0];
  spec.loopPath = nest[1];
  spec.bufferLayout = choosePackLayout(p, PackRole::LHS, true);
  Function packed = generatePack(tiled, spec);
  Function normalized = normalizeAllBuffers(packed);

  bool sawTiledLayout = false;
  walk(normalized, [&](const Operation &op) {
    if (op.kind == OpKind::Alloc) {
      CHECK(normalized.memrefOf(op.result).hasIdentityLayout());
      sawTiledLayout |= normalized.memrefOf(op.result).rank() == 3;
    }
  });
  CHECK(sawTiledLayout);

  TensorBuffer A = makeBuffer({12, 8}, ScalarKind::F64, 5);
  TensorBuffer B = makeBuffer({8, 4}, ScalarKind::F64, 6);
  TensorBuffer C1 = makeBuffer({12, 4}, ScalarKind::F64, 7);
  TensorBuffer C2(C1.desc), C3(C1.desc);
  C2.copyDataFrom(C1);
  C3.copyDataFrom(C1);
  interpret(fn, {&A, &B, &C1});
  interpret(packed, {&A, &B, &C2});
  interpret(normalized, {&A, &B, &C3});
  CHECK(bitwiseEqual(C1, C2));
  CHECK(bitwiseEqual(C1, C3));
}
