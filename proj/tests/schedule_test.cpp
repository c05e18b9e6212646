//===- schedule_test.cpp - Expansion and tiling-schedule tests ----------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hopt;
using namespace hopt::test;

namespace {
const TileParams kStartParams{64, 256, 4, 8, 4, TileParams::InnerPerm::JI};
}

TEST_CASE("expansion yields the canonical 3-d nest with the paper's trip "
          "counts", "[schedule]") {
  Function fn = expandMatmul(
      makeMatmulFunction(2088, 2048, 2048, ElemType::f64(), kStartParams));
  auto paths = perfectNestPaths(fn);
  REQUIRE(paths.size() == 3);
  std::vector<int64_t> trips;
  for (const auto &p : paths) {
    const Operation &loop = opAtPath(fn, p);
    trips.push_back(*loop.upper.getIfSingleConstant());
  }
  CHECK(trips == std::vector<int64_t>{2088, 2048, 2048});
}

TEST_CASE("1x1x1 expansion computes the scalar C += A*B", "[schedule]") {
  Function fn = expandMatmul(
      makeMatmulFunction(1, 1, 1, ElemType::f64(), kStartParams));
  TensorBuffer A = makeBuffer({1, 1}, ScalarKind::F64, 1);
  TensorBuffer B = makeBuffer({1, 1}, ScalarKind::F64, 2);
  TensorBuffer C = makeBuffer({1, 1}, ScalarKind::F64, 3);
  double expect = C.f64()[0] + A.f64()[0] * B.f64()[0];
  interpret(fn, {&A, &B, &C});
  CHECK(C.f64()[0] == expect);
}

TEST_CASE("expanded nest matches the brute-force oracle", "[schedule]") {
  Function fn = expandMatmul(
      makeMatmulFunction(3, 4, 5, ElemType::f64(), kStartParams));
  TensorBuffer A = makeBuffer({3, 5}, ScalarKind::F64, 11);
  TensorBuffer B = makeBuffer({5, 4}, ScalarKind::F64, 12);
  TensorBuffer C = makeBuffer({3, 4}, ScalarKind::F64, 13);
  TensorBuffer ref(C.desc);
  ref.copyDataFrom(C);
  referenceGemm(A, B, ref);
  interpret(fn, {&A, &B, &C});
  CHECK(bitwiseEqual(C, ref));
}

TEST_CASE("expansion requires a hop.matmul and matching shapes",
          "[schedule]") {
  Function empty;
  empty.name = "noop";
  CHECK_THROWS_AS(expandMatmul(empty), Error);
}

TEST_CASE("the generated M-dim bounds match the paper's min pattern",
          "[schedule]") {
  // M = 2088 with the (d0, 64) -> (d0, 4) chain: the inner tile loop runs to
  // min(ceil(2088/4), 16*t + 16) = min(522, 16*t + 16).
  Function fn = expandMatmul(
      makeMatmulFunction(2088, 2048, 2048, ElemType::f64(), kStartParams));
  Function tiled = applyTilingSchedule(fn, appliedScheduleFor(kStartParams));
  std::string text = printFunction(tiled);
  CHECK(text.find("min(522, ") != std::string::npos);
  CHECK(text.find("* 16 + 16") != std::string::npos);
  // K = 2048 divides K_C = 256 evenly: the k point loop needs no min.
  CHECK(text.find("min(2048") == std::string::npos);
}

TEST_CASE("identity schedule reproduces the nest", "[schedule]") {
  Function fn = expandMatmul(
      makeMatmulFunction(6, 7, 8, ElemType::f64(), kStartParams));
  TilingSchedule identity{3, {{0, 1}, {1, 1}, {2, 1}}};
  Function same = applyTilingSchedule(fn, identity);
  CHECK(structurallyEqual(fn, same));
}

TEST_CASE("trace bijection for a mixed interleaved schedule", "[schedule]") {
  // extents (7, 5, 6), schedule ((d2,3),(d0,2),(d1,1),(d0,1),(d2,1)).
  std::vector<int64_t> extents{7, 5, 6};
  TilingSchedule s{3, {{2, 3}, {0, 2}, {1, 1}, {0, 1}, {2, 1}}};
  TraceNest nest = makeTraceNest(extents);
  TraceNest tiled = nest;
  tiled.fn = applyTilingSchedule(nest.fn, s);
  std::vector<int64_t> got = runTrace(tiled, extents);
  std::vector<int64_t> expect = scheduleOracleOrder(s, extents);
  CHECK(got == expect);
}

TEST_CASE("tiling preserves interpreter results bit for bit", "[schedule]") {
  TileParams tp{4, 3, 2, 2, 1, TileParams::InnerPerm::JI};
  Function fn =
      expandMatmul(makeMatmulFunction(8, 6, 9, ElemType::f64(), tp));
  Function tiled = applyTilingSchedule(fn, appliedScheduleFor(tp));
  TensorBuffer A = makeBuffer({8, 9}, ScalarKind::F64, 21);
  TensorBuffer B = makeBuffer({9, 6}, ScalarKind::F64, 22);
  TensorBuffer C1 = makeBuffer({8, 6}, ScalarKind::F64, 23);
  TensorBuffer C2(C1.desc);
  C2.copyDataFrom(C1);
  interpret(fn, {&A, &B, &C1});
  interpret(tiled, {&A, &B, &C2});
  CHECK(bitwiseEqual(C1, C2));
}

TEST_CASE("partial tiles keep the min; full tiles drop it", "[schedule]") {
  TilingSchedule s{1, {{0, 4}, {0, 1}}};
  {
    TraceNest nest = makeTraceNest(std::vector<int64_t>{10});
    Function tiled = applyTilingSchedule(nest.fn, s);
    const Operation &point = opAtPath(tiled, std::vector<int64_t>{0, 0});
    CHECK(point.upper.map.numResults() == 2);
  }
  {
    TraceNest nest = makeTraceNest(std::vector<int64_t>{12});
    Function tiled = applyTilingSchedule(nest.fn, s);
    const Operation &point = opAtPath(tiled, std::vector<int64_t>{0, 0});
    CHECK(point.upper.map.numResults() == 1);
  }
}

TEST_CASE("schedule invariants are enforced", "[schedule]") {
  // Divisors must strictly decrease and divide the previous level.
  CHECK_THROWS_AS(validateSchedule(TilingSchedule{1, {{0, 4}, {0, 3}, {0, 1}}}),
                  Error);
  CHECK_THROWS_AS(validateSchedule(TilingSchedule{1, {{0, 4}, {0, 4}, {0, 1}}}),
                  Error);
  // Every dim ends in a point loop.
  CHECK_THROWS_AS(validateSchedule(TilingSchedule{2, {{0, 1}, {1, 2}}}), Error);
  CHECK_NOTHROW(validateSchedule(TilingSchedule{1, {{0, 6}, {0, 3}, {0, 1}}}));
}

TEST_CASE("imperfect nests are rejected", "[schedule]") {
  TraceNest nest = makeTraceNest(std::vector<int64_t>{4, 4});
  TilingSchedule s{2, {{0, 2}, {0, 1}, {1, 1}}};
  // Depth mismatch: asking for 3 dims over a 2-deep nest.
  TilingSchedule deep{3, {{0, 1}, {1, 1}, {2, 1}}};
  CHECK_THROWS_AS(applyTilingSchedule(nest.fn, deep), Error);
  CHECK_NOTHROW(applyTilingSchedule(nest.fn, s));
}

TEST_CASE("the BLIS-style schedule for the starting parameters",
          "[schedule]") {
  TilingSchedule s = appliedScheduleFor(kStartParams);
  REQUIRE(s.entries.size() == 7);
  CHECK(s.entries[0].dim == 2);
  CHECK(s.entries[0].divisor == 256);
  CHECK(s.entries[1].dim == 0);
  CHECK(s.entries[1].divisor == 64);
  CHECK(s.entries[2].dim == 1);
  CHECK(s.entries[2].divisor == 8);
  CHECK(s.entries[3].dim == 0);
  CHECK(s.entries[3].divisor == 4);
  CHECK(s.entries[4].dim == 2);
  CHECK(s.entries[4].divisor == 1);
  CHECK(s.entries[5].dim == 1);
  CHECK(s.entries[6].dim == 0);
}

TEST_CASE("the (i, j) permutation flips the last two entries", "[schedule]") {
  TileParams p = kStartParams;
  p.innerPerm = TileParams::InnerPerm::IJ;
  TilingSchedule s = appliedScheduleFor(p);
  CHECK(s.entries[5].dim == 0);
  CHECK(s.entries[6].dim == 1);
}

TEST_CASE("non-dividing register tile is rejected", "[schedule]") {
  TileParams p{64, 256, 3, 8, 4, TileParams::InnerPerm::JI};
  CHECK_THROWS_AS(appliedScheduleFor(p), Error);
}

TEST_CASE("vectorized schedules express the j chain in lane units",
          "[schedule]") {
  TilingSchedule s = appliedScheduleFor(kStartParams, true, 4);
  bool found = false;
  for (const auto &e : s.entries)
    if (e.dim == 1 && e.divisor == 2)
      found = true; // N_R = 8 over 4 lanes
  CHECK(found);
  CHECK_THROWS_AS(appliedScheduleFor(kStartParams, true, 3), Error);
}
