//===- printer.hpp - Textual IR emission ------------------------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Deterministic textual form: one op per line, two-space indentation per
// region depth, loops as `affine.for %iv = max(...) to min(...) step s` with
// singleton max/min and unit steps elided. Identity layouts and zero
// alignments are elided from memref types. Value names are canonically
// renumbered on every print, so output is independent of construction order.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/ir.hpp"

#include <cinttypes>
#include <cstdio>

namespace hopt {

namespace detail {

// Precedence levels: additive = 1, multiplicative = 2, atoms = 3.
inline int exprPrecedence(const AffineExpr &e) {
  switch (e.kind()) {
  case ExprKind::Add:
    return 1;
  case ExprKind::Mul:
  case ExprKind::FloorDiv:
  case ExprKind::Mod:
    return 2;
  default:
    return 3;
  }
}

/// Prints an expression with dims rendered through `dimName`.
inline void printExpr(std::string &out, const AffineExpr &e,
                      const std::function<std::string(int64_t)> &dimName,
                      int parentPrec = 0) {
  int prec = exprPrecedence(e);
  bool paren = prec < parentPrec;
  if (paren)
    out += "(";
  switch (e.kind()) {
  case ExprKind::Constant:
    out += std::to_string(e.constantValue());
    break;
  case ExprKind::Dim:
    out += dimName(e.index());
    break;
  case ExprKind::Symbol:
    out += "s" + std::to_string(e.index());
    break;
  case ExprKind::Add: {
    printExpr(out, e.lhs(), dimName, 1);
    AffineExpr r = e.rhs();
    if (r.isConstant() && r.constantValue() < 0) {
      out += " - " + std::to_string(-r.constantValue());
    } else {
      out += " + ";
      printExpr(out, r, dimName, 1);
    }
    break;
  }
  case ExprKind::Mul:
    printExpr(out, e.lhs(), dimName, 2);
    out += " * ";
    printExpr(out, e.rhs(), dimName, 2);
    break;
  case ExprKind::FloorDiv:
    printExpr(out, e.lhs(), dimName, 3);
    out += " floordiv " + std::to_string(e.divisor());
    break;
  case ExprKind::Mod:
    printExpr(out, e.lhs(), dimName, 3);
    out += " mod " + std::to_string(e.divisor());
    break;
  }
  if (paren)
    out += ")";
}

} // namespace detail

inline std::string toString(const AffineExpr &e) {
  std::string out;
  detail::printExpr(out, e, [](int64_t i) { return "d" + std::to_string(i); });
  return out;
}

inline std::string toString(const AffineMap &m) {
  std::string out = "(";
  for (int64_t i = 0; i < m.numDims(); ++i) {
    if (i)
      out += ", ";
    out += "d" + std::to_string(i);
  }
  out += ") -> (";
  for (int64_t i = 0; i < m.numResults(); ++i) {
    if (i)
      out += ", ";
    detail::printExpr(out, m.result(i),
                      [](int64_t d) { return "d" + std::to_string(d); });
  }
  out += ")";
  return out;
}

inline std::string toString(const ElemType &e) {
  if (!e.isVector())
    return nameOf(e.scalar);
  return "vector<" + std::to_string(e.lanes) + "x" + nameOf(e.scalar) + ">";
}

inline std::string toString(const MemRefDescriptor &d) {
  std::string out = "memref<";
  for (int64_t e : d.shape)
    out += std::to_string(e) + "x";
  out += toString(d.elem);
  if (!d.hasIdentityLayout())
    out += ", " + toString(d.layout);
  out += ">";
  return out;
}

inline std::string toString(const Type &t) {
  switch (t.kind) {
  case TypeKind::Index:
    return "index";
  case TypeKind::Elem:
    return toString(t.elem);
  case TypeKind::MemRef:
    return toString(t.memref);
  }
  return "?";
}

namespace detail {

struct PrintState {
  const Function &fn;
  std::vector<std::string> names; // per ValueId
  int nextResult = 0;
  int nextIv = 0;
  std::string out;

  explicit PrintState(const Function &fn)
      : fn(fn), names(fn.values.size()) {}

  const std::string &nameOfValue(ValueId v) {
    assert(!names[v].empty() && "value printed before definition");
    return names[v];
  }
  void defineResult(ValueId v) { names[v] = "%" + std::to_string(nextResult++); }
  void defineIv(ValueId v) { names[v] = "%i" + std::to_string(nextIv++); }

  void indent(int depth) { out.append(2 * (size_t)depth, ' '); }

  std::string mapped(const MappedValues &mv, bool wrapMinMax,
                     const char *minOrMax) {
    auto dimName = [&](int64_t i) { return nameOfValue(mv.operands[i]); };
    std::string s;
    bool wrap = wrapMinMax && mv.map.numResults() > 1;
    if (wrap)
      s += std::string(minOrMax) + "(";
    for (int64_t i = 0; i < mv.map.numResults(); ++i) {
      if (i)
        s += ", ";
      printExpr(s, mv.map.result(i), dimName);
    }
    if (wrap)
      s += ")";
    return s;
  }

  std::string accessString(const MappedValues &mv) {
    auto dimName = [&](int64_t i) { return nameOfValue(mv.operands[i]); };
    std::string s = "[";
    for (int64_t i = 0; i < mv.map.numResults(); ++i) {
      if (i)
        s += ", ";
      printExpr(s, mv.map.result(i), dimName);
    }
    s += "]";
    return s;
  }

  static std::string literal(double v, const ElemType &t) {
    char buf[40];
    if (t.scalar == ScalarKind::F32)
      std::snprintf(buf, sizeof buf, "%.9g", v);
    else
      std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s = buf;
    // Keep literals recognizable as floats.
    if (s.find_first_of(".einf") == std::string::npos)
      s += ".0";
    return s;
  }

  void printOp(const Operation &op, int depth) {
    indent(depth);
    switch (op.kind) {
    case OpKind::AffineFor: {
      defineIv(op.iv);
      out += "affine.for " + nameOfValue(op.iv) + " = " +
             mapped(op.lower, true, "max") + " to " +
             mapped(op.upper, true, "min");
      if (op.step != 1)
        out += " step " + std::to_string(op.step);
      out += " {\n";
      for (const auto &child : op.body)
        printOp(child, depth + 1);
      indent(depth);
      out += "}\n";
      break;
    }
    case OpKind::Load:
      defineResult(op.result);
      out += nameOfValue(op.result) + " = affine.load " +
             nameOfValue(op.operands[0]) + accessString(op.access) + "\n";
      break;
    case OpKind::Store:
      out += "affine.store " + nameOfValue(op.operands[1]) + ", " +
             nameOfValue(op.operands[0]) + accessString(op.access) + "\n";
      break;
    case OpKind::Add:
    case OpKind::Mul:
      defineResult(op.result);
      out += nameOfValue(op.result) + " = " +
             std::string(hopt::nameOf(op.kind)) + " " +
             nameOfValue(op.operands[0]) + ", " + nameOfValue(op.operands[1]) +
             "\n";
      break;
    case OpKind::Fma:
      defineResult(op.result);
      out += nameOfValue(op.result) + " = fmaf " + nameOfValue(op.operands[0]) +
             ", " + nameOfValue(op.operands[1]) + ", " +
             nameOfValue(op.operands[2]) + "\n";
      break;
    case OpKind::Splat:
      defineResult(op.result);
      out += nameOfValue(op.result) + " = splat " +
             nameOfValue(op.operands[0]) + " : " +
             toString(fn.typeOf(op.result).elem) + "\n";
      break;
    case OpKind::ShapeCast:
      defineResult(op.result);
      out += nameOfValue(op.result) + " = memref_shape_cast " +
             nameOfValue(op.operands[0]) + " : " +
             toString(fn.memrefOf(op.result)) + "\n";
      break;
    case OpKind::Alloc: {
      defineResult(op.result);
      const auto &d = fn.memrefOf(op.result);
      out += nameOfValue(op.result) + " = alloc()";
      if (d.alignment)
        out += " {alignment = " + std::to_string(d.alignment) + "}";
      out += " : " + toString(d) + "\n";
      break;
    }
    case OpKind::Dealloc:
      out += "dealloc " + nameOfValue(op.operands[0]) + "\n";
      break;
    case OpKind::Constant:
      defineResult(op.result);
      out += nameOfValue(op.result) + " = constant " +
             literal(op.constValue, op.constType) + " : " +
             toString(op.constType) + "\n";
      break;
    case OpKind::Call: {
      out += "call @" + op.callee + "(";
      for (size_t i = 0; i < op.operands.size(); ++i) {
        if (i)
          out += ", ";
        out += nameOfValue(op.operands[i]);
      }
      out += ")\n";
      break;
    }
    case OpKind::MatmulHL: {
      const TileParams &t = op.tile;
      out += "hop.matmul " + nameOfValue(op.operands[0]) + ", " +
             nameOfValue(op.operands[1]) + ", " + nameOfValue(op.operands[2]) +
             " {M_C = " + std::to_string(t.M_C) +
             ", K_C = " + std::to_string(t.K_C) +
             ", M_R = " + std::to_string(t.M_R) +
             ", N_R = " + std::to_string(t.N_R) +
             ", K_U = " + std::to_string(t.K_U) + ", inner_perm = " +
             (t.innerPerm == TileParams::InnerPerm::JI ? "ji" : "ij") + "}\n";
      break;
    }
    }
  }
};

} // namespace detail

/// Prints a function in the canonical textual form.
inline std::string printFunction(const Function &fn) {
  detail::PrintState ps(fn);
  ps.out += "func @" + fn.name + "(";
  for (size_t i = 0; i < fn.params.size(); ++i) {
    if (i)
      ps.out += ", ";
    ValueId p = fn.params[i];
    std::string name = fn.values[p].name.empty()
                           ? "arg" + std::to_string(i)
                           : fn.values[p].name;
    ps.names[p] = "%" + name;
    ps.out += ps.names[p] + ": " + toString(fn.typeOf(p));
  }
  ps.out += ") {\n";
  for (const auto &op : fn.body)
    ps.printOp(op, 1);
  ps.out += "  return\n}\n";
  return ps.out;
}

} // namespace hopt
