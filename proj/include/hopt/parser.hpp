//===- parser.hpp - Textual IR parsing ---------------------------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Recursive-descent parser for the printer's grammar. parse(print(f)) is
// structurally equal to f for every verified function. Functions are
// re-verified after parsing, so malformed bounds and type mismatches are
// rejected even when syntactically well formed.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/printer.hpp"

#include <cctype>
#include <cstdlib>
#include <cstring>

namespace hopt {

/// Syntax/verification failure with 1-based line and column.
class ParseError : public Error {
public:
  int line, column;
  ParseError(const std::string &msg, int line, int column)
      : Error("parse error at " + std::to_string(line) + ":" +
              std::to_string(column) + ": " + msg),
        line(line), column(column) {}
};

namespace detail {

class Parser {
public:
  explicit Parser(std::string_view text) : text(text) {}

  Function parseFunction() {
    Function fn;
    expectWord("func");
    expect('@');
    fn.name = parseIdent();
    expect('(');
    if (!peekIs(')')) {
      do {
        expect('%');
        std::string pname = parseIdent();
        expect(':');
        Type t = parseType();
        if (!t.isMemRef())
          fail("function parameters must have memref type");
        ValueId v = fn.addParam(std::move(t.memref), pname);
        defineName("%" + pname, v);
      } while (consumeIf(','));
    }
    expect(')');
    expect('{');
    fn.body = parseOps(fn);
    expectWord("return");
    expect('}');
    skipSpace();
    if (pos != text.size())
      fail("trailing input after function");
    auto diags = verify(fn);
    if (!diags.empty())
      fail("verification failed: " + diags.front().message + " at " +
           diags.front().location);
    return fn;
  }

private:
  std::string_view text;
  size_t pos = 0;
  std::unordered_map<std::string, ValueId> scope;

  [[noreturn]] void fail(const std::string &msg) const {
    int line = 1, col = 1;
    for (size_t i = 0; i < pos && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(msg, line, col);
  }

  void skipSpace() {
    while (pos < text.size()) {
      char c = text[pos];
      if (c == '/' && pos + 1 < text.size() && text[pos + 1] == '/') {
        while (pos < text.size() && text[pos] != '\n')
          ++pos;
      } else if (std::isspace((unsigned char)c)) {
        ++pos;
      } else {
        break;
      }
    }
  }
  bool peekIs(char c) {
    skipSpace();
    return pos < text.size() && text[pos] == c;
  }
  bool consumeIf(char c) {
    if (peekIs(c)) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!consumeIf(c))
      fail(std::string("expected '") + c + "'");
  }
  std::string peekWord() {
    skipSpace();
    size_t p = pos;
    std::string w;
    while (p < text.size() &&
           (std::isalnum((unsigned char)text[p]) || text[p] == '_' ||
            text[p] == '.'))
      w += text[p++];
    return w;
  }
  bool consumeWord(const std::string &w) {
    if (peekWord() == w && !w.empty()) {
      skipSpace();
      pos += w.size();
      return true;
    }
    return false;
  }
  void expectWord(const std::string &w) {
    if (!consumeWord(w))
      fail("expected '" + w + "', found '" + peekWord() + "'");
  }
  std::string parseIdent() {
    std::string w = peekWord();
    if (w.empty())
      fail("expected identifier");
    skipSpace();
    pos += w.size();
    return w;
  }
  int64_t parseInt() {
    skipSpace();
    size_t p = pos;
    bool neg = p < text.size() && text[p] == '-';
    if (neg)
      ++p;
    size_t digits = p;
    while (p < text.size() && std::isdigit((unsigned char)text[p]))
      ++p;
    if (p == digits)
      fail("expected integer");
    int64_t v = std::strtoll(std::string(text.substr(pos, p - pos)).c_str(),
                             nullptr, 10);
    pos = p;
    return v;
  }
  double parseFloat() {
    skipSpace();
    size_t p = pos;
    while (p < text.size() &&
           (std::isdigit((unsigned char)text[p]) ||
            strchr("+-.eExXaAbBcCdDfFpninf", text[p])))
      ++p;
    if (p == pos)
      fail("expected floating-point literal");
    char *end = nullptr;
    std::string s(text.substr(pos, p - pos));
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str())
      fail("invalid floating-point literal");
    pos += (size_t)(end - s.c_str());
    return v;
  }

  void defineName(const std::string &name, ValueId v) { scope[name] = v; }
  ValueId lookup(const std::string &name) {
    auto it = scope.find(name);
    if (it == scope.end())
      fail("use of undefined value " + name);
    return it->second;
  }
  std::string parseValueName() {
    expect('%');
    return "%" + parseIdent();
  }
  ValueId parseValueUse() { return lookup(parseValueName()); }

  //===--------------------------------------------------------------------===//
  // Types
  //===--------------------------------------------------------------------===//

  ElemType parseElemType() {
    if (consumeWord("f32"))
      return ElemType::f32();
    if (consumeWord("f64"))
      return ElemType::f64();
    if (consumeWord("vector")) {
      expect('<');
      int64_t lanes = parseInt();
      skipSpace();
      if (pos >= text.size() || text[pos] != 'x')
        fail("expected 'x' in vector type");
      ++pos;
      ScalarKind k;
      if (consumeWord("f32"))
        k = ScalarKind::F32;
      else if (consumeWord("f64"))
        k = ScalarKind::F64;
      else
        fail("expected f32 or f64 vector element");
      expect('>');
      return ElemType::vector(lanes, k);
    }
    fail("expected element type");
  }

  Type parseType() {
    if (consumeWord("index"))
      return Type::index();
    if (consumeWord("memref")) {
      expect('<');
      std::vector<int64_t> shape;
      skipSpace();
      while (pos < text.size() && std::isdigit((unsigned char)text[pos])) {
        size_t save = pos;
        int64_t v = parseInt();
        if (pos < text.size() && text[pos] == 'x') {
          shape.push_back(v);
          ++pos; // consume 'x'
        } else {
          pos = save;
          break;
        }
      }
      ElemType elem = parseElemType();
      AffineMap layout;
      int64_t alignment = 0;
      if (consumeIf(','))
        layout = parseMapLiteral((int64_t)shape.size());
      expect('>');
      try {
        return Type::of(MemRefDescriptor(std::move(shape), elem,
                                         std::move(layout), alignment));
      } catch (const Error &e) {
        fail(e.what());
      }
    }
    return Type::of(parseElemType());
  }

  /// `(d0, d1) -> (expr, ...)` with a fixed dim space.
  AffineMap parseMapLiteral(int64_t expectDims) {
    expect('(');
    int64_t n = 0;
    if (!peekIs(')')) {
      do {
        std::string d = parseIdent();
        if (d != "d" + std::to_string(n))
          fail("layout map dims must be d0, d1, ... in order");
        ++n;
      } while (consumeIf(','));
    }
    expect(')');
    expectWord("->");
    expect('(');
    std::vector<AffineExpr> results;
    if (!peekIs(')')) {
      do
        results.push_back(parseExpr([&](const std::string &name) {
          if (name.size() > 1 && name[0] == 'd') {
            int64_t idx = std::atoll(name.c_str() + 1);
            if (idx < n)
              return AffineExpr::dim(idx);
          }
          fail("unknown dim '" + name + "' in map literal");
        }));
      while (consumeIf(','));
    }
    expect(')');
    if (expectDims >= 0 && n != expectDims)
      fail("layout map rank mismatch");
    try {
      return AffineMap(n, 0, std::move(results));
    } catch (const Error &e) {
      fail(e.what());
    }
  }

  //===--------------------------------------------------------------------===//
  // Affine expressions
  //===--------------------------------------------------------------------===//

  using AtomFn = std::function<AffineExpr(const std::string &)>;

  AffineExpr parseExpr(const AtomFn &atom) {
    AffineExpr e = parseTerm(atom);
    for (;;) {
      if (consumeIf('+')) {
        e = e + parseTerm(atom);
      } else if (peekIs('-')) {
        ++pos;
        e = e - parseTerm(atom);
      } else {
        return e;
      }
    }
  }
  AffineExpr parseTerm(const AtomFn &atom) {
    AffineExpr e = parseFactor(atom);
    for (;;) {
      if (consumeIf('*')) {
        AffineExpr r = parseFactor(atom);
        try {
          e = AffineExpr::mul(e, r);
        } catch (const Error &err) {
          fail(err.what());
        }
      } else if (consumeWord("floordiv")) {
        AffineExpr r = parseFactor(atom);
        if (!r.isConstant() || r.constantValue() <= 0)
          fail("floordiv divisor must be a positive integer constant");
        e = AffineExpr::floorDiv(e, r.constantValue());
      } else if (consumeWord("mod")) {
        AffineExpr r = parseFactor(atom);
        if (!r.isConstant() || r.constantValue() <= 0)
          fail("mod divisor must be a positive integer constant");
        e = AffineExpr::mod(e, r.constantValue());
      } else {
        return e;
      }
    }
  }
  AffineExpr parseFactor(const AtomFn &atom) {
    skipSpace();
    if (consumeIf('(')) {
      AffineExpr e = parseExpr(atom);
      expect(')');
      return e;
    }
    if (pos < text.size() && text[pos] == '%')
      return atom(parseValueName());
    if (pos < text.size() &&
        (std::isdigit((unsigned char)text[pos]) || text[pos] == '-'))
      return AffineExpr::constant(parseInt());
    return atom(parseIdent());
  }

  /// Parses a comma-separated expr list over %value atoms into a MappedValues
  /// (operands collected in first-use order).
  MappedValues parseMappedExprs(char terminator) {
    std::vector<ValueId> operands;
    std::unordered_map<ValueId, int64_t> dimOf;
    AtomFn atom = [&](const std::string &name) {
      if (name.empty() || name[0] != '%')
        fail("expected %value in expression");
      ValueId v = lookup(name);
      auto it = dimOf.find(v);
      if (it == dimOf.end()) {
        it = dimOf.emplace(v, (int64_t)operands.size()).first;
        operands.push_back(v);
      }
      return AffineExpr::dim(it->second);
    };
    std::vector<AffineExpr> results;
    if (!peekIs(terminator)) {
      do
        results.push_back(parseExpr(atom));
      while (consumeIf(','));
    }
    expect(terminator);
    try {
      int64_t numOps = (int64_t)operands.size();
      return MappedValues(AffineMap(numOps, 0, std::move(results)),
                          std::move(operands));
    } catch (const Error &e) {
      fail(e.what());
    }
  }

  MappedValues parseBound(const char *minOrMax) {
    if (consumeWord(minOrMax)) {
      expect('(');
      return parseMappedExprs(')');
    }
    // Single expression bound: parse up to the following keyword.
    std::vector<ValueId> operands;
    std::unordered_map<ValueId, int64_t> dimOf;
    AtomFn atom = [&](const std::string &name) {
      ValueId v = lookup(name);
      auto it = dimOf.find(v);
      if (it == dimOf.end()) {
        it = dimOf.emplace(v, (int64_t)operands.size()).first;
        operands.push_back(v);
      }
      return AffineExpr::dim(it->second);
    };
    AffineExpr e = parseExpr(atom);
    int64_t numOps = (int64_t)operands.size();
    return MappedValues(AffineMap(numOps, 0, {e}), std::move(operands));
  }

  //===--------------------------------------------------------------------===//
  // Operations
  //===--------------------------------------------------------------------===//

  std::vector<Operation> parseOps(Function &fn) {
    std::vector<Operation> ops;
    std::vector<std::pair<std::string, ValueId>> defined;
    for (;;) {
      std::string w = peekWord();
      if (w == "return" || (w.empty() && peekIs('}')))
        break;
      ops.push_back(parseOp(fn));
    }
    return ops;
  }

  Operation parseOp(Function &fn) {
    OpBuilder b(fn);
    std::string w = peekWord();
    if (w == "affine.for") {
      expectWord("affine.for");
      std::string ivName = parseValueName();
      expect('=');
      MappedValues lb = parseBound("max");
      expectWord("to");
      MappedValues ub = parseBound("min");
      int64_t step = 1;
      if (consumeWord("step"))
        step = parseInt();
      ValueId iv = fn.addValue(Type::index(), ivName.substr(1));
      defineName(ivName, iv);
      expect('{');
      Operation op = b.forOp(iv, std::move(lb), std::move(ub), step);
      op.body = parseOps(fn);
      expect('}');
      return op;
    }
    if (w == "affine.store") {
      expectWord("affine.store");
      ValueId value = parseValueUse();
      expect(',');
      ValueId memref = parseValueUse();
      expect('[');
      MappedValues access = parseMappedExprs(']');
      return b.store(memref, value, std::move(access));
    }
    if (w == "dealloc") {
      expectWord("dealloc");
      return b.dealloc(parseValueUse());
    }
    if (w == "call") {
      expectWord("call");
      expect('@');
      Operation op;
      op.kind = OpKind::Call;
      op.callee = parseIdent();
      expect('(');
      if (!peekIs(')')) {
        do
          op.operands.push_back(parseValueUse());
        while (consumeIf(','));
      }
      expect(')');
      return op;
    }
    if (w == "hop.matmul") {
      expectWord("hop.matmul");
      Operation op;
      op.kind = OpKind::MatmulHL;
      op.operands.push_back(parseValueUse());
      expect(',');
      op.operands.push_back(parseValueUse());
      expect(',');
      op.operands.push_back(parseValueUse());
      expect('{');
      do {
        std::string key = parseIdent();
        expect('=');
        if (key == "M_C")
          op.tile.M_C = parseInt();
        else if (key == "K_C")
          op.tile.K_C = parseInt();
        else if (key == "M_R")
          op.tile.M_R = parseInt();
        else if (key == "N_R")
          op.tile.N_R = parseInt();
        else if (key == "K_U")
          op.tile.K_U = parseInt();
        else if (key == "inner_perm")
          op.tile.innerPerm = parseIdent() == "ij"
                                  ? TileParams::InnerPerm::IJ
                                  : TileParams::InnerPerm::JI;
        else
          fail("unknown hop.matmul attribute '" + key + "'");
      } while (consumeIf(','));
      expect('}');
      return op;
    }

    // Value-producing ops: %name = <op> ...
    std::string resName = parseValueName();
    expect('=');
    std::string opName = parseIdent();
    if (opName == "affine.load") {
      ValueId memref = parseValueUse();
      expect('[');
      MappedValues access = parseMappedExprs(']');
      if (!fn.typeOf(memref).isMemRef())
        fail("affine.load target is not a memref");
      ValueId res = fn.addValue(Type::of(fn.memrefOf(memref).elem));
      defineName(resName, res);
      return b.load(memref, std::move(access), res);
    }
    if (opName == "addf" || opName == "mulf" || opName == "fmaf") {
      std::vector<ValueId> args;
      args.push_back(parseValueUse());
      expect(',');
      args.push_back(parseValueUse());
      if (opName == "fmaf") {
        expect(',');
        args.push_back(parseValueUse());
      }
      ValueId res = fn.addValue(fn.typeOf(args[0]));
      defineName(resName, res);
      Operation op;
      op.kind = opName == "addf"   ? OpKind::Add
                : opName == "mulf" ? OpKind::Mul
                                   : OpKind::Fma;
      op.operands = std::move(args);
      op.result = res;
      return op;
    }
    if (opName == "splat") {
      ValueId scalar = parseValueUse();
      expect(':');
      ElemType t = parseElemType();
      ValueId res = fn.addValue(Type::of(t));
      defineName(resName, res);
      return b.splat(scalar, res);
    }
    if (opName == "memref_shape_cast") {
      ValueId src = parseValueUse();
      expect(':');
      Type t = parseType();
      if (!t.isMemRef())
        fail("memref_shape_cast type must be a memref");
      ValueId res = fn.addValue(t);
      defineName(resName, res);
      return b.shapeCast(src, res);
    }
    if (opName == "alloc") {
      expect('(');
      expect(')');
      int64_t alignment = 0;
      if (consumeIf('{')) {
        expectWord("alignment");
        expect('=');
        alignment = parseInt();
        expect('}');
      }
      expect(':');
      Type t = parseType();
      if (!t.isMemRef())
        fail("alloc type must be a memref");
      t.memref.alignment = alignment;
      ValueId res = fn.addValue(t);
      defineName(resName, res);
      return b.alloc(res);
    }
    if (opName == "constant") {
      double v = parseFloat();
      expect(':');
      ElemType t = parseElemType();
      ValueId res = fn.addValue(Type::of(t));
      defineName(resName, res);
      Operation op;
      op.kind = OpKind::Constant;
      op.constValue = v;
      op.constType = t;
      op.result = res;
      return op;
    }
    fail("unknown operation '" + opName + "'");
  }
};

} // namespace detail

/// Parses the printer's textual form; throws ParseError with line/column on
/// syntax errors and on verification failures.
inline Function parseFunction(std::string_view text) {
  return detail::Parser(text).parseFunction();
}

} // namespace hopt
