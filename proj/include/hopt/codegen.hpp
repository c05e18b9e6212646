//===- codegen.hpp - C++ source emission for the native backend ---------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Translates a lowered function into a self-contained C++ translation unit
// with one extern "C" entry point:
//
//   void hopt_entry(void** args, void** rt);
//
// args holds the parameter base pointers in order; rt is a runtime table with
// rt[0] = aligned alloc, rt[1] = free, rt[2..] = call targets in callSymbols
// order. Buffers are allocated through the opaque table so the host compiler
// optimizes each pipeline stage as scheduled, not by re-deriving aliasing
// facts the IR never established; single-element buffers (scalar-replacement
// accumulators) become stack locals instead. Vector element types map to GCC
// vector extensions. Affine floordiv/mod are emitted as C / and %, which
// agree with floor semantics on the non-negative index domains verified
// functions produce.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/printer.hpp"
#include "hopt/rewrite.hpp"

#include <set>

namespace hopt {

struct EmittedModule {
  std::string source;
  std::vector<std::string> callSymbols; // rt[2 + i] resolves callSymbols[i]
};

namespace detail {

inline std::string cScalarName(ScalarKind k) {
  return k == ScalarKind::F32 ? "float" : "double";
}
inline std::string cVectorName(const ElemType &e) {
  return "v" + std::to_string(e.lanes) +
         (e.scalar == ScalarKind::F32 ? "f32" : "f64");
}
inline std::string cTypeName(const ElemType &e) {
  return e.isVector() ? cVectorName(e) : cScalarName(e.scalar);
}

/// C rendering of an affine expr over named dims. Divisions assume the
/// non-negative domains of verified nests.
inline void emitCExpr(std::string &out, const AffineExpr &e,
                      const std::vector<std::string> &dimNames,
                      int parentPrec = 0) {
  int prec = exprPrecedence(e);
  bool paren = prec < parentPrec;
  if (paren)
    out += "(";
  switch (e.kind()) {
  case ExprKind::Constant:
    if (e.constantValue() < 0 && parentPrec >= 2) {
      out += "(" + std::to_string(e.constantValue()) + ")";
    } else {
      out += std::to_string(e.constantValue());
    }
    break;
  case ExprKind::Dim:
    out += dimNames[e.index()];
    break;
  case ExprKind::Symbol:
    throw Error("codegen: symbolic affine exprs are not materializable");
  case ExprKind::Add: {
    emitCExpr(out, e.lhs(), dimNames, 1);
    AffineExpr r = e.rhs();
    if (r.isConstant() && r.constantValue() < 0) {
      out += " - " + std::to_string(-r.constantValue());
    } else {
      out += " + ";
      emitCExpr(out, r, dimNames, 1);
    }
    break;
  }
  case ExprKind::Mul:
    emitCExpr(out, e.lhs(), dimNames, 2);
    out += " * ";
    emitCExpr(out, e.rhs(), dimNames, 2);
    break;
  case ExprKind::FloorDiv:
    emitCExpr(out, e.lhs(), dimNames, 3);
    out += " / " + std::to_string(e.divisor());
    break;
  case ExprKind::Mod:
    emitCExpr(out, e.lhs(), dimNames, 3);
    out += " % " + std::to_string(e.divisor());
    break;
  }
  if (paren)
    out += ")";
}

class CppEmitter {
public:
  explicit CppEmitter(const Function &fn) : fn(fn), names(fn.values.size()) {}

  EmittedModule emit() {
    collectKinds();
    emitPrelude();
    body += "extern \"C\" void hopt_entry(void** args, void** rt) {\n";
    body += "  (void)rt;\n";
    for (size_t i = 0; i < fn.params.size(); ++i) {
      ValueId p = fn.params[i];
      names[p] = "p" + std::to_string(p);
      body += "  " + pointerType(fn.memrefOf(p).elem) + " " + names[p] +
              " = (" + pointerType(fn.memrefOf(p).elem) + ")args[" +
              std::to_string(i) + "];\n";
    }
    for (const auto &op : fn.body)
      emitOp(op, 1);
    body += "}\n";
    EmittedModule m;
    m.source = prelude + body;
    m.callSymbols = callSymbols;
    return m;
  }

private:
  const Function &fn;
  std::vector<std::string> names;
  std::string prelude, body;
  std::vector<std::string> callSymbols;
  std::set<std::pair<int64_t, int>> vectorTypes; // (lanes, scalar kind)
  std::unordered_set<ValueId> stackAllocs;

  std::vector<const Operation *> collectKinds() {
    std::vector<const Operation *> all;
    walk(fn, [&](const Operation &op) {
      all.push_back(&op);
      auto note = [&](ValueId v) {
        if (v == kNoValue)
          return;
        const Type &t = fn.typeOf(v);
        if (t.isElem() && t.elem.isVector())
          vectorTypes.insert({t.elem.lanes, (int)t.elem.scalar});
        if (t.isMemRef() && t.memref.elem.isVector())
          vectorTypes.insert(
              {t.memref.elem.lanes, (int)t.memref.elem.scalar});
      };
      note(op.result);
      for (ValueId v : op.operands)
        note(v);
    });
    for (ValueId p : fn.params) {
      const auto &e = fn.memrefOf(p).elem;
      if (e.isVector())
        vectorTypes.insert({e.lanes, (int)e.scalar});
    }
    return all;
  }

  void emitPrelude() {
    prelude += "// Generated by hopt from function '" + fn.name + "'.\n";
    prelude += "#include <cstdint>\n#include <cmath>\n\n";
    for (const auto &[lanes, kind] : vectorTypes) {
      ElemType e = ElemType::vector(lanes, (ScalarKind)kind);
      prelude += "typedef " + cScalarName(e.scalar) + " " + cVectorName(e) +
                 " __attribute__((vector_size(" +
                 std::to_string(e.bytes()) + ")));\n";
    }
    prelude += "typedef void* (*hopt_alloc_fn)(int64_t, int64_t);\n";
    prelude += "typedef void (*hopt_free_fn)(void*);\n";
    prelude += "typedef void (*hopt_uk_fn)(const void*, const void*, void*, "
               "int64_t, int64_t);\n";
    prelude += "static inline int64_t hopt_min(int64_t a, int64_t b) { "
               "return a < b ? a : b; }\n";
    prelude += "static inline int64_t hopt_max(int64_t a, int64_t b) { "
               "return a > b ? a : b; }\n\n";
  }

  std::string pointerType(const ElemType &e) { return cTypeName(e) + "*"; }

  void indent(int depth) { body.append(2 * (size_t)depth, ' '); }

  std::string valueName(ValueId v) {
    if (names[v].empty())
      names[v] = "v" + std::to_string(v);
    return names[v];
  }

  std::string exprString(const AffineExpr &e,
                         const std::vector<ValueId> &operands) {
    std::vector<std::string> dimNames(operands.size());
    for (size_t i = 0; i < operands.size(); ++i)
      dimNames[i] = valueName(operands[i]);
    std::string s;
    emitCExpr(s, simplifyExpr(e), dimNames);
    return s;
  }

  /// min/max chain over the results of a bound map.
  std::string boundString(const MappedValues &mv, const char *fold) {
    std::string s;
    for (int64_t i = 0; i < mv.map.numResults(); ++i) {
      std::string e = exprString(mv.map.result(i), mv.operands);
      s = i == 0 ? e : std::string(fold) + "(" + s + ", " + e + ")";
    }
    return s;
  }

  /// Flat physical index of an access on `memref`.
  std::string indexString(ValueId memref, const MappedValues &access) {
    const MemRefDescriptor &desc = fn.memrefOf(memref);
    AffineMap phys = desc.hasIdentityLayout()
                         ? access.map
                         : desc.layout.compose(access.map);
    std::vector<int64_t> shape = desc.normalizedShape();
    std::vector<int64_t> strides(shape.size(), 1);
    for (int64_t i = (int64_t)shape.size() - 2; i >= 0; --i)
      strides[i] = strides[i + 1] * shape[i + 1];
    AffineExpr flat = AffineExpr::constant(0);
    for (int64_t r = 0; r < phys.numResults(); ++r)
      flat = flat + AffineExpr::mul(phys.result(r),
                                    AffineExpr::constant(strides[r]));
    return exprString(simplifyExpr(flat), access.operands);
  }

  void emitOp(const Operation &op, int depth) {
    switch (op.kind) {
    case OpKind::AffineFor: {
      std::string iv = valueName(op.iv);
      std::string lbName = iv + "_lb", ubName = iv + "_ub";
      indent(depth);
      body += "const int64_t " + lbName + " = " +
              boundString(op.lower, "hopt_max") + ";\n";
      indent(depth);
      body += "const int64_t " + ubName + " = " +
              boundString(op.upper, "hopt_min") + ";\n";
      indent(depth);
      body += "for (int64_t " + iv + " = " + lbName + "; " + iv + " < " +
              ubName + "; " + iv + " += " + std::to_string(op.step) + ") {\n";
      for (const auto &child : op.body)
        emitOp(child, depth + 1);
      indent(depth);
      body += "}\n";
      break;
    }
    case OpKind::Load: {
      const ElemType &e = fn.memrefOf(op.operands[0]).elem;
      indent(depth);
      body += "const " + cTypeName(e) + " " + valueName(op.result) + " = " +
              valueName(op.operands[0]) + "[" +
              indexString(op.operands[0], op.access) + "];\n";
      break;
    }
    case OpKind::Store:
      indent(depth);
      body += valueName(op.operands[0]) + "[" +
              indexString(op.operands[0], op.access) + "] = " +
              valueName(op.operands[1]) + ";\n";
      break;
    case OpKind::Add:
    case OpKind::Mul: {
      const ElemType &e = fn.typeOf(op.result).elem;
      indent(depth);
      body += "const " + cTypeName(e) + " " + valueName(op.result) + " = " +
              valueName(op.operands[0]) +
              (op.kind == OpKind::Add ? " + " : " * ") +
              valueName(op.operands[1]) + ";\n";
      break;
    }
    case OpKind::Fma: {
      const ElemType &e = fn.typeOf(op.result).elem;
      indent(depth);
      if (e.isVector()) {
        body += "const " + cTypeName(e) + " " + valueName(op.result) + " = " +
                valueName(op.operands[0]) + " * " + valueName(op.operands[1]) +
                " + " + valueName(op.operands[2]) + ";\n";
      } else {
        const char *f =
            e.scalar == ScalarKind::F32 ? "__builtin_fmaf" : "__builtin_fma";
        body += "const " + cTypeName(e) + " " + valueName(op.result) + " = " +
                f + "(" + valueName(op.operands[0]) + ", " +
                valueName(op.operands[1]) + ", " + valueName(op.operands[2]) +
                ");\n";
      }
      break;
    }
    case OpKind::Splat: {
      const ElemType &e = fn.typeOf(op.result).elem;
      indent(depth);
      body += "const " + cTypeName(e) + " " + valueName(op.result) + " = {";
      for (int64_t l = 0; l < e.lanes; ++l)
        body += (l ? ", " : "") + valueName(op.operands[0]);
      body += "};\n";
      break;
    }
    case OpKind::ShapeCast: {
      const ElemType &e = fn.memrefOf(op.result).elem;
      indent(depth);
      body += pointerType(e) + " " + valueName(op.result) + " = (" +
              pointerType(e) + ")" + valueName(op.operands[0]) + ";\n";
      break;
    }
    case OpKind::Alloc: {
      const MemRefDescriptor &d = fn.memrefOf(op.result);
      int64_t elems = d.normalizedElementCount();
      int64_t bytes = elems * d.elem.bytes();
      indent(depth);
      if (elems == 1) {
        // Scalar-replacement accumulator: a stack slot the host compiler can
        // promote to a register.
        stackAllocs.insert(op.result);
        body += cTypeName(d.elem) + " " + valueName(op.result) +
                "_slot[1]; " + pointerType(d.elem) + " " +
                valueName(op.result) + " = " + valueName(op.result) +
                "_slot;\n";
      } else {
        int64_t align = std::max<int64_t>(d.alignment, 64);
        body += pointerType(d.elem) + " " + valueName(op.result) + " = (" +
                pointerType(d.elem) + ")((hopt_alloc_fn)rt[0])(" +
                std::to_string(bytes) + ", " + std::to_string(align) + ");\n";
      }
      break;
    }
    case OpKind::Dealloc:
      if (stackAllocs.count(op.operands[0]))
        break;
      indent(depth);
      body += "((hopt_free_fn)rt[1])(" + valueName(op.operands[0]) + ");\n";
      break;
    case OpKind::Constant: {
      indent(depth);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%a", op.constValue);
      const ElemType &e = op.constType;
      if (e.isVector()) {
        body += "const " + cTypeName(e) + " " + valueName(op.result) + " = {";
        for (int64_t l = 0; l < e.lanes; ++l)
          body += std::string(l ? ", " : "") + buf;
        body += "};\n";
      } else {
        body += "const " + cTypeName(e) + " " + valueName(op.result) + " = " +
                buf + (e.scalar == ScalarKind::F32 ? "f" : "") + ";\n";
      }
      break;
    }
    case OpKind::Call: {
      // Microkernel call convention: (Abuf, Bbuf, C, i3, jp, kt) where Abuf
      // is the normalized [M_C/M_R, K_C, M_R] packed block, Bbuf the packed
      // [K_C, N_R] panel, i3 the global register-tile row, jp the panel
      // column index. See microkernel.hpp.
      if (op.operands.size() != 6)
        throw Error("codegen: call expects the microkernel operand shape");
      int64_t slot = -1;
      for (size_t i = 0; i < callSymbols.size(); ++i)
        if (callSymbols[i] == op.callee)
          slot = (int64_t)i;
      if (slot < 0) {
        slot = (int64_t)callSymbols.size();
        callSymbols.push_back(op.callee);
      }
      const auto &aDesc = fn.memrefOf(op.operands[0]);
      const auto &bDesc = fn.memrefOf(op.operands[1]);
      const auto &cDesc = fn.memrefOf(op.operands[2]);
      if (aDesc.rank() != 3 || bDesc.rank() != 2 || cDesc.rank() != 2)
        throw Error("codegen: unexpected microkernel operand ranks");
      if (aDesc.elem.isVector() || bDesc.elem.isVector() ||
          cDesc.elem.isVector())
        throw Error("codegen: microkernel calls take scalar element types");
      int64_t kc = aDesc.shape[1], mr = aDesc.shape[2];
      int64_t panels = aDesc.shape[0];
      int64_t nr = bDesc.shape[1] * bDesc.elem.lanes;
      int64_t ldc = cDesc.shape[1] * cDesc.elem.lanes;
      std::string i3 = valueName(op.operands[3]);
      std::string jp = valueName(op.operands[4]);
      indent(depth);
      body += "((hopt_uk_fn)rt[" + std::to_string(2 + slot) + "])(" +
              valueName(op.operands[0]) + " + (" + i3 + " % " +
              std::to_string(panels) + ") * " + std::to_string(kc * mr) +
              ", " + valueName(op.operands[1]) + ", " +
              valueName(op.operands[2]) + " + " + i3 + " * " +
              std::to_string(mr * ldc) + " + " + jp + " * " +
              std::to_string(nr) + ", " + std::to_string(ldc) + ", " +
              std::to_string(kc) + ");\n";
      break;
    }
    case OpKind::MatmulHL:
      throw Error("codegen: hop.matmul must be expanded before native "
                  "emission");
    }
  }
};

} // namespace detail

/// Emits a function as a compilable C++ translation unit.
inline EmittedModule emitCpp(const Function &fn) {
  verifyOrThrow(fn, "emit_native");
  detail::CppEmitter emitter(fn);
  return emitter.emit();
}

} // namespace hopt
