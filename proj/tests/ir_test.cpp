//===- ir_test.cpp - Verifier, printer, parser, goldens -----------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace hopt;

namespace {

Function naive16() {
  TileParams tp{8, 8, 2, 4, 1, TileParams::InnerPerm::JI};
  return expandMatmul(makeMatmulFunction(16, 16, 16, ElemType::f64(), tp));
}

std::filesystem::path testdataDir() {
  // Set by CMake; falls back to the source-relative layout.
  if (const char *env = std::getenv("HOPT_TESTDATA"))
    return env;
  return std::filesystem::path(__FILE__).parent_path().parent_path() /
         "testdata";
}

} // namespace

TEST_CASE("well-formed naive nest verifies cleanly", "[ir]") {
  CHECK(verify(naive16()).empty());
}

TEST_CASE("access map arity mismatch is diagnosed", "[ir]") {
  Function fn = naive16();
  // Rewrite the first load's access to a 1-result map over a rank-2 memref.
  Operation *load = nullptr;
  walk(fn, [&](Operation &op) {
    if (!load && op.kind == OpKind::Load)
      load = &op;
  });
  REQUIRE(load);
  load->access.map = AffineMap(2, 0, {AffineExpr::dim(0)});
  auto diags = verify(fn);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].message.find("rank") != std::string::npos);
}

TEST_CASE("hop.matmul shape mismatch is diagnosed", "[ir]") {
  Function fn;
  fn.name = "bad";
  ValueId a = fn.addParam(MemRefDescriptor({4, 5}, ElemType::f64()), "A");
  ValueId b = fn.addParam(MemRefDescriptor({6, 7}, ElemType::f64()), "B");
  ValueId c = fn.addParam(MemRefDescriptor({4, 7}, ElemType::f64()), "C");
  Operation op;
  op.kind = OpKind::MatmulHL;
  op.operands = {a, b, c};
  fn.body.push_back(op);
  auto diags = verify(fn);
  REQUIRE_FALSE(diags.empty());
  CHECK(diags[0].message.find("shape mismatch") != std::string::npos);
}

TEST_CASE("use before definition is diagnosed", "[ir]") {
  Function fn;
  fn.name = "useb4def";
  ValueId a = fn.addParam(MemRefDescriptor({4}, ElemType::f64()), "A");
  ValueId ghost = fn.addValue(Type::of(ElemType::f64()));
  OpBuilder b(fn);
  fn.body.push_back(
      b.store(a, ghost, MappedValues(AffineMap(0, 0, {AffineExpr::constant(0)}), {})));
  auto diags = verify(fn);
  REQUIRE_FALSE(diags.empty());
  CHECK(diags[0].message.find("before definition") != std::string::npos);
}

TEST_CASE("empty function prints as header plus return", "[ir][print]") {
  Function fn;
  fn.name = "empty";
  CHECK(printFunction(fn) == "func @empty() {\n  return\n}\n");
}

TEST_CASE("naive matmul prints three loops and an fma-shaped body",
          "[ir][print]") {
  std::string text = printFunction(naive16());
  CHECK(std::count(text.begin(), text.end(), '\n') >= 10);
  size_t fors = 0;
  for (size_t at = text.find("affine.for"); at != std::string::npos;
       at = text.find("affine.for", at + 1))
    ++fors;
  CHECK(fors == 3);
  CHECK(text.find("mulf") != std::string::npos);
  CHECK(text.find("addf") != std::string::npos);
  CHECK(text.find("affine.store") != std::string::npos);
}

TEST_CASE("identity layouts are elided, custom layouts printed",
          "[ir][print]") {
  MemRefDescriptor plain({64, 256}, ElemType::f64());
  CHECK(toString(plain) == "memref<64x256xf64>");
  AffineExpr d0 = AffineExpr::dim(0), d1 = AffineExpr::dim(1);
  MemRefDescriptor tiled(
      {64, 256}, ElemType::f64(),
      AffineMap(2, 0,
                {AffineExpr::floorDiv(d0, 4), d1, AffineExpr::mod(d0, 4)}));
  CHECK(toString(tiled) ==
        "memref<64x256xf64, (d0, d1) -> (d0 floordiv 4, d1, d0 mod 4)>");
}

TEST_CASE("parse/print round trip on a fresh function", "[ir][parse]") {
  Function fn = naive16();
  std::string text = printFunction(fn);
  Function parsed = parseFunction(text);
  CHECK(structurallyEqual(fn, parsed));
  CHECK(printFunction(parsed) == text);
}

TEST_CASE("parser rejects floordiv by zero with a location", "[ir][parse]") {
  std::string text = "func @f(%A: memref<4x4xf64>) {\n"
                     "  affine.for %i0 = 0 to 4 {\n"
                     "    %0 = affine.load %A[%i0 floordiv 0, 0]\n"
                     "  }\n"
                     "  return\n}\n";
  try {
    parseFunction(text);
    FAIL("expected a parse error");
  } catch (const ParseError &e) {
    CHECK(e.line == 3);
    CHECK(std::string(e.what()).find("divisor") != std::string::npos);
  }
}

TEST_CASE("parser rejects unknown values and trailing input", "[ir][parse]") {
  CHECK_THROWS_AS(parseFunction("func @f() {\n  dealloc %nope\n  return\n}\n"),
                  ParseError);
  CHECK_THROWS_AS(parseFunction("func @f() {\n  return\n}\nextra"), ParseError);
}

TEST_CASE("a transcription of the tiled-listing bound shapes parses and "
          "verifies", "[ir][parse]") {
  // The generated-bound pattern from the cache-tiling listing:
  // #map8 = (d0) -> (d0 * 16), #map9 = (d0) -> (522, d0 * 16 + 16).
  std::string text =
      "func @tiled(%A: memref<2088x2048xf64>, %C: memref<2088x2048xf64>) {\n"
      "  affine.for %i0 = 0 to 33 {\n"
      "    affine.for %i1 = %i0 * 16 to min(522, %i0 * 16 + 16) {\n"
      "      %0 = affine.load %A[%i1 * 4, 0]\n"
      "      affine.store %0, %C[%i1 * 4, 0]\n"
      "    }\n"
      "  }\n"
      "  return\n}\n";
  Function fn = parseFunction(text);
  CHECK(verify(fn).empty());
  CHECK(printFunction(fn) == text);
}

TEST_CASE("structural equality is insensitive to value ids", "[ir]") {
  Function a = naive16();
  // Rebuild with extra unused values interleaved so the ids differ.
  Function b;
  b.name = a.name;
  b.addValue(Type::index(), "padding");
  TileParams tp{8, 8, 2, 4, 1, TileParams::InnerPerm::JI};
  Function fresh = expandMatmul(makeMatmulFunction(16, 16, 16, ElemType::f64(), tp));
  fresh.addValue(Type::index(), "padding2");
  CHECK(structurallyEqual(a, fresh));
  Function other = expandMatmul(
      makeMatmulFunction(16, 16, 8, ElemType::f64(), tp));
  CHECK_FALSE(structurallyEqual(a, other));
}

TEST_CASE("golden files round trip through parse and print", "[ir][golden]") {
  namespace fs = std::filesystem;
  fs::path dir = testdataDir();
  REQUIRE(fs::exists(dir));
  size_t count = 0;
  for (const auto &entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".ir")
      continue;
    ++count;
    INFO("golden file: " << entry.path().string());
    std::ifstream in(entry.path());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    Function fn = parseFunction(text);
    CHECK(printFunction(fn) == text);
    CHECK(structurallyEqual(fn, parseFunction(printFunction(fn))));
  }
  CHECK(count >= 8);
}
