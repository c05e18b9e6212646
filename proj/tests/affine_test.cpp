//===- affine_test.cpp - AffineExpr/AffineMap tests ----------------------------===//
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

namespace {
AffineExpr d(int64_t i) { return AffineExpr::dim(i); }
int64_t evalAt(const AffineExpr &e, std::initializer_list<int64_t> dims) {
  std::vector<int64_t> v(dims);
  return e.evaluate(v);
}
} // namespace

TEST_CASE("floordiv rounds toward negative infinity", "[affine]") {
  CHECK(evalAt(AffineExpr::floorDiv(d(0), 4), {9}) == 2);
  CHECK(evalAt(AffineExpr::floorDiv(d(0), 4), {-9}) == -3);
  CHECK(evalAt(AffineExpr::mod(d(0), 6), {11}) == 5);
  CHECK(evalAt(AffineExpr::mod(d(0), 6), {-1}) == 5);
}

TEST_CASE("strided layout expression from the affine-map detour", "[affine]") {
  // (d0 * 258 + d1) at (2, 5).
  AffineExpr e = d(0) * 258 + d(1);
  CHECK(evalAt(e, {2, 5}) == 521);
}

TEST_CASE("Euclidean identity over a signed range", "[affine]") {
  for (int64_t c = 1; c <= 7; ++c) {
    AffineExpr q = AffineExpr::floorDiv(d(0), c);
    AffineExpr r = AffineExpr::mod(d(0), c);
    for (int64_t x = -20; x <= 20; ++x) {
      int64_t fd = evalAt(q, {x});
      int64_t md = evalAt(r, {x});
      CHECK(x == fd * c + md);
      CHECK(md >= 0);
      CHECK(md < c);
    }
  }
}

TEST_CASE("simplification folds trivial forms", "[affine]") {
  CHECK(toString(simplifyExpr(d(0) * 1 + 0)) == "d0");
  CHECK(toString(simplifyExpr(
            AffineExpr::floorDiv(AffineExpr::constant(8), 4))) == "2");
  CHECK(toString(simplifyExpr(AffineExpr::floorDiv(d(0) * 4, 4))) == "d0");
  CHECK(toString(simplifyExpr(AffineExpr::mod(d(0) * 4, 4))) == "0");
}

TEST_CASE("simplified divisible floordiv agrees over the domain", "[affine]") {
  AffineExpr e = AffineExpr::floorDiv(d(0) * 4, 4);
  AffineExpr s = simplifyExpr(e);
  for (int64_t x = 0; x <= 100; ++x)
    CHECK(evalAt(e, {x}) == evalAt(s, {x}));
}

namespace {

AffineExpr randomExpr(std::mt19937_64 &rng, int depth) {
  auto pick = [&](int64_t n) { return (int64_t)(rng() % n); };
  if (depth == 0 || pick(4) == 0) {
    switch (pick(3)) {
    case 0:
      return AffineExpr::dim(pick(3));
    case 1:
      return AffineExpr::constant(pick(21) - 10);
    default:
      return AffineExpr::dim(pick(3)) * (pick(9) - 4);
    }
  }
  switch (pick(4)) {
  case 0:
    return randomExpr(rng, depth - 1) + randomExpr(rng, depth - 1);
  case 1:
    return randomExpr(rng, depth - 1) * (pick(7) - 3);
  case 2:
    return AffineExpr::floorDiv(randomExpr(rng, depth - 1), pick(6) + 1);
  default:
    return AffineExpr::mod(randomExpr(rng, depth - 1), pick(6) + 1);
  }
}

} // namespace

TEST_CASE("simplify preserves evaluation on random expressions", "[affine]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    AffineExpr e = randomExpr(rng, 3);
    AffineExpr s = simplifyExpr(e);
    int64_t dims[3] = {(int64_t)(rng() % 200) - 100,
                       (int64_t)(rng() % 200) - 100,
                       (int64_t)(rng() % 200) - 100};
    CHECK(e.evaluate(dims) == s.evaluate(dims));
  }
}

TEST_CASE("quasi-affine construction rules", "[affine]") {
  CHECK_THROWS_AS(AffineExpr::mul(d(0), d(1)), Error);
  CHECK_THROWS_AS(AffineExpr::floorDiv(d(0), 0), Error);
  CHECK_THROWS_AS(AffineExpr::mod(d(0), -2), Error);
  CHECK_THROWS_AS(AffineExpr::dim(-1), Error);
}

TEST_CASE("map evaluation, identity, and composition", "[affine]") {
  AffineMap tiled(2, 0,
                  {AffineExpr::floorDiv(d(0), 4), d(1), AffineExpr::mod(d(0), 4)});
  auto r = tiled.evaluate(std::vector<int64_t>{9, 3});
  CHECK(r == std::vector<int64_t>{2, 3, 1});
  CHECK(AffineMap::identity(3).isIdentity());
  CHECK_FALSE(tiled.isIdentity());

  // Compose the tiled layout with an access map (i + 1, j * 2).
  AffineMap access(2, 0, {d(0) + 1, d(1) * 2});
  AffineMap composed = tiled.compose(access);
  auto c = composed.evaluate(std::vector<int64_t>{7, 3});
  CHECK(c == std::vector<int64_t>{2, 6, 0});
}

TEST_CASE("map referencing out-of-range dims is rejected", "[affine]") {
  CHECK_THROWS_AS(AffineMap(1, 0, {d(1)}), Error);
}

TEST_CASE("interval analysis over loop ranges", "[affine]") {
  // d0 in [0, 9], d1 in [2, 3]: range of 16*d1 + d0 - 2.
  std::vector<IntInterval> ranges{{0, 9}, {2, 3}};
  auto iv = exprRange(d(1) * 16 + d(0) - 2, ranges);
  CHECK(iv.lo == 30);
  CHECK(iv.hi == 55);
  auto fd = exprRange(AffineExpr::floorDiv(d(0), 4), ranges);
  CHECK(fd.lo == 0);
  CHECK(fd.hi == 2);
  auto md = exprRange(AffineExpr::mod(d(0), 16), ranges);
  CHECK(md.lo == 0);
  CHECK(md.hi == 9);
}

TEST_CASE("largest known divisor", "[affine]") {
  CHECK(largestKnownDivisor(d(0) * 12 + 18) == 6);
  CHECK(largestKnownDivisor(d(0) * 480 + d(1) * 32) == 32);
  CHECK(largestKnownDivisor(AffineExpr::constant(480)) == 480);
  CHECK(largestKnownDivisor(d(0) + 1) == 1);
}
