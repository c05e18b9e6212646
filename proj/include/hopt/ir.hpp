//===- ir.hpp - Loop-nest IR: types, values, operations --------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// A small affine loop-nest IR. Functions hold a region of operations;
// affine.for ops carry max/min bound maps whose dims bind to explicit
// operand values (enclosing loop ivs), and loads/stores carry an affine
// access map over operand ivs. Everything is plain value-semantic data:
// rewrites copy and rebuild, verified functions are treated as immutable.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/affine.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hopt {

enum class ScalarKind : uint8_t { F32, F64 };

namespace detail {
/// Lane cap for vector element types (512-bit f32 vectors).
inline constexpr int kMaxLanes = 16;
} // namespace detail

inline int64_t bytesOf(ScalarKind k) { return k == ScalarKind::F32 ? 4 : 8; }
inline const char *nameOf(ScalarKind k) {
  return k == ScalarKind::F32 ? "f32" : "f64";
}

/// Element type of a memref or arithmetic value: a scalar float kind with a
/// lane count; lanes == 1 is a plain scalar, lanes > 1 a vector<lanes x k>.
struct ElemType {
  ScalarKind scalar = ScalarKind::F64;
  int64_t lanes = 1;

  bool isVector() const { return lanes > 1; }
  int64_t bytes() const { return lanes * bytesOf(scalar); }
  bool operator==(const ElemType &o) const = default;

  static ElemType f32() { return {ScalarKind::F32, 1}; }
  static ElemType f64() { return {ScalarKind::F64, 1}; }
  static ElemType vector(int64_t lanes, ScalarKind k) { return {k, lanes}; }
};

/// Shape + element type + affine layout map + alignment. The layout maps
/// logical indices to coordinates in a physical (identity-layout) buffer.
struct MemRefDescriptor {
  std::vector<int64_t> shape;
  ElemType elem;
  AffineMap layout; // null/identity => row-major
  int64_t alignment = 0; // bytes; 0 = natural

  MemRefDescriptor() = default;
  MemRefDescriptor(std::vector<int64_t> shape, ElemType elem,
                   AffineMap layout = AffineMap(), int64_t alignment = 0)
      : shape(std::move(shape)), elem(elem), layout(std::move(layout)),
        alignment(alignment) {
    for (int64_t e : this->shape)
      if (e <= 0)
        throw Error("memref extents must be positive");
    if (!this->layout.numResults())
      this->layout = AffineMap::identity(rank());
    if (this->layout.numDims() != rank())
      throw Error("memref layout dim count must equal rank");
    if (alignment < 0 || (alignment & (alignment - 1)) != 0)
      throw Error("memref alignment must be a power of two");
  }

  int64_t rank() const { return (int64_t)shape.size(); }
  int64_t elementCount() const {
    int64_t n = 1;
    for (int64_t e : shape)
      n *= e;
    return n;
  }
  bool hasIdentityLayout() const { return layout.isIdentity(); }

  /// Extents of the layout's image box: the shape of the physical buffer
  /// backing this memref (identity layouts: same as shape).
  std::vector<int64_t> normalizedShape() const {
    if (hasIdentityLayout())
      return shape;
    std::vector<IntInterval> ranges;
    ranges.reserve(shape.size());
    for (int64_t e : shape)
      ranges.push_back({0, e - 1});
    std::vector<int64_t> out;
    out.reserve(layout.numResults());
    for (const auto &r : layout.results()) {
      auto iv = exprRange(r, ranges);
      if (iv.lo < 0)
        throw Error("memref layout image has negative coordinates");
      out.push_back(iv.hi + 1);
    }
    return out;
  }
  int64_t normalizedElementCount() const {
    int64_t n = 1;
    for (int64_t e : normalizedShape())
      n *= e;
    return n;
  }

  bool operator==(const MemRefDescriptor &o) const {
    return shape == o.shape && elem == o.elem && alignment == o.alignment &&
           layout.structurallyEqual(o.layout);
  }
};

/// Checks that the layout maps distinct in-shape indices to distinct physical
/// coordinates, by enumeration. Only call for test-scale shapes.
inline bool isLayoutInjective(const MemRefDescriptor &desc,
                              int64_t enumerationCap = 1 << 22) {
  if (desc.hasIdentityLayout())
    return true;
  if (desc.elementCount() > enumerationCap)
    throw Error("layout injectivity check: shape too large to enumerate");
  auto norm = desc.normalizedShape();
  std::vector<char> seen(desc.normalizedElementCount(), 0);
  std::vector<int64_t> idx(desc.rank(), 0);
  for (;;) {
    auto phys = desc.layout.evaluate(idx);
    int64_t flat = 0;
    for (size_t i = 0; i < phys.size(); ++i)
      flat = flat * norm[i] + phys[i];
    if (seen[flat])
      return false;
    seen[flat] = 1;
    int64_t d = desc.rank() - 1;
    for (; d >= 0; --d) {
      if (++idx[d] < desc.shape[d])
        break;
      idx[d] = 0;
    }
    if (d < 0)
      break;
  }
  return true;
}

/// Register/cache tile sizes carried by the high-level matmul op.
struct TileParams {
  int64_t M_C = 0, K_C = 0, M_R = 0, N_R = 0, K_U = 1;
  enum class InnerPerm : uint8_t { JI, IJ }; // order of the last two schedule dims
  InnerPerm innerPerm = InnerPerm::JI;

  bool operator==(const TileParams &o) const = default;
};

enum class TypeKind : uint8_t { Index, Elem, MemRef };

struct Type {
  TypeKind kind = TypeKind::Index;
  ElemType elem;            // TypeKind::Elem
  MemRefDescriptor memref;  // TypeKind::MemRef

  static Type index() { return Type{TypeKind::Index, {}, {}}; }
  static Type of(ElemType e) { return Type{TypeKind::Elem, e, {}}; }
  static Type of(MemRefDescriptor d) {
    return Type{TypeKind::MemRef, {}, std::move(d)};
  }
  bool isMemRef() const { return kind == TypeKind::MemRef; }
  bool isIndex() const { return kind == TypeKind::Index; }
  bool isElem() const { return kind == TypeKind::Elem; }
  bool operator==(const Type &o) const {
    if (kind != o.kind)
      return false;
    if (kind == TypeKind::Elem)
      return elem == o.elem;
    if (kind == TypeKind::MemRef)
      return memref == o.memref;
    return true;
  }
};

using ValueId = int32_t;
inline constexpr ValueId kNoValue = -1;

struct ValueInfo {
  std::string name; // printing hint; may be empty (renumbered on print)
  Type type;
};

enum class OpKind : uint8_t {
  AffineFor,
  Load,
  Store,
  Add,
  Mul,
  Fma,
  Splat,
  ShapeCast,
  Alloc,
  Dealloc,
  Constant,
  Call,
  MatmulHL,
};

inline const char *nameOf(OpKind k) {
  switch (k) {
  case OpKind::AffineFor: return "affine.for";
  case OpKind::Load:      return "affine.load";
  case OpKind::Store:     return "affine.store";
  case OpKind::Add:       return "addf";
  case OpKind::Mul:       return "mulf";
  case OpKind::Fma:       return "fmaf";
  case OpKind::Splat:     return "splat";
  case OpKind::ShapeCast: return "memref_shape_cast";
  case OpKind::Alloc:     return "alloc";
  case OpKind::Dealloc:   return "dealloc";
  case OpKind::Constant:  return "constant";
  case OpKind::Call:      return "call";
  case OpKind::MatmulHL:  return "hop.matmul";
  }
  return "?";
}

/// A bound or access map together with the values its dims bind to.
struct MappedValues {
  AffineMap map;
  std::vector<ValueId> operands;

  MappedValues() = default;
  MappedValues(AffineMap m, std::vector<ValueId> ops)
      : map(std::move(m)), operands(std::move(ops)) {}

  /// Single-result constant shorthand.
  static MappedValues constant(int64_t c) {
    return MappedValues(AffineMap(0, 0, {AffineExpr::constant(c)}), {});
  }
  std::optional<int64_t> getIfSingleConstant() const {
    if (map.numResults() == 1)
      return map.result(0).getIfConstant();
    return std::nullopt;
  }
};

/// One IR operation. A single struct covers all kinds; fields beyond `kind`,
/// `operands`, and `result` are meaningful only for the kinds noted.
struct Operation {
  OpKind kind;
  std::vector<ValueId> operands;
  ValueId result = kNoValue;

  // AffineFor: iv, bounds (lb = max of results, ub = min of results), step.
  ValueId iv = kNoValue;
  MappedValues lower, upper;
  int64_t step = 1;
  std::vector<Operation> body;

  // Load/Store: operands[0] is the memref (store: operands[1] the value);
  // access.map results index the memref.
  MappedValues access;

  // Constant: literal value of type `constType`.
  double constValue = 0.0;
  ElemType constType;

  // Call: callee symbol.
  std::string callee;

  // MatmulHL: tile parameter attributes.
  TileParams tile;
};

/// A function: named memref parameters and a top-level op region.
/// Values live in a function-owned table; ids are stable across rewrites
/// (rewrites may add values; they never re-type existing ones).
struct Function {
  std::string name;
  std::vector<ValueId> params;
  std::vector<ValueInfo> values;
  std::vector<Operation> body;

  ValueId addValue(Type type, std::string nameHint = "") {
    values.push_back(ValueInfo{std::move(nameHint), std::move(type)});
    return (ValueId)values.size() - 1;
  }
  ValueId addParam(MemRefDescriptor desc, std::string paramName) {
    ValueId v = addValue(Type::of(std::move(desc)), std::move(paramName));
    params.push_back(v);
    return v;
  }
  const Type &typeOf(ValueId v) const { return values[v].type; }
  const MemRefDescriptor &memrefOf(ValueId v) const {
    assert(typeOf(v).isMemRef());
    return typeOf(v).memref;
  }
  MemRefDescriptor &memrefOf(ValueId v) {
    assert(values[v].type.isMemRef());
    return values[v].type.memref;
  }
};

//===----------------------------------------------------------------------===//
// Structural equality
//===----------------------------------------------------------------------===//

namespace detail {

struct ValueMatcher {
  std::unordered_map<ValueId, ValueId> fwd;

  bool match(ValueId a, ValueId b) {
    auto it = fwd.find(a);
    if (it != fwd.end())
      return it->second == b;
    fwd.emplace(a, b);
    return true;
  }
  bool matchAll(const std::vector<ValueId> &a, const std::vector<ValueId> &b) {
    if (a.size() != b.size())
      return false;
    for (size_t i = 0; i < a.size(); ++i)
      if (!match(a[i], b[i]))
        return false;
    return true;
  }
};

inline bool structurallyEqual(const Function &fa, const Operation &a,
                              const Function &fb, const Operation &b,
                              ValueMatcher &vm) {
  if (a.kind != b.kind || a.step != b.step || a.callee != b.callee)
    return false;
  if ((a.result == kNoValue) != (b.result == kNoValue))
    return false;
  if (!vm.matchAll(a.operands, b.operands))
    return false;
  if (!a.lower.map.structurallyEqual(b.lower.map) ||
      !a.upper.map.structurallyEqual(b.upper.map) ||
      !a.access.map.structurallyEqual(b.access.map))
    return false;
  if (!vm.matchAll(a.lower.operands, b.lower.operands) ||
      !vm.matchAll(a.upper.operands, b.upper.operands) ||
      !vm.matchAll(a.access.operands, b.access.operands))
    return false;
  if (a.kind == OpKind::Constant &&
      (a.constValue != b.constValue || !(a.constType == b.constType)))
    return false;
  if (a.kind == OpKind::MatmulHL && !(a.tile == b.tile))
    return false;
  if (a.result != kNoValue) {
    if (!(fa.typeOf(a.result) == fb.typeOf(b.result)))
      return false;
    if (!vm.match(a.result, b.result))
      return false;
  }
  if (a.iv != kNoValue && !vm.match(a.iv, b.iv))
    return false;
  if (a.body.size() != b.body.size())
    return false;
  for (size_t i = 0; i < a.body.size(); ++i)
    if (!structurallyEqual(fa, a.body[i], fb, b.body[i], vm))
      return false;
  return true;
}

} // namespace detail

/// Structural equality modulo value ids and names.
inline bool structurallyEqual(const Function &a, const Function &b) {
  if (a.name != b.name || a.params.size() != b.params.size() ||
      a.body.size() != b.body.size())
    return false;
  detail::ValueMatcher vm;
  for (size_t i = 0; i < a.params.size(); ++i) {
    if (!(a.typeOf(a.params[i]) == b.typeOf(b.params[i])))
      return false;
    if (!vm.match(a.params[i], b.params[i]))
      return false;
  }
  for (size_t i = 0; i < a.body.size(); ++i)
    if (!detail::structurallyEqual(a, a.body[i], b, b.body[i], vm))
      return false;
  return true;
}

//===----------------------------------------------------------------------===//
// Verifier
//===----------------------------------------------------------------------===//

struct Diagnostic {
  enum class Severity : uint8_t { Error, Warning, Note };
  Severity severity = Severity::Error;
  std::string message;
  std::string location; // op path like "body[0].body[2]"
};

namespace detail {

struct VerifyCtx {
  const Function &fn;
  std::vector<Diagnostic> diags;
  std::unordered_set<ValueId> inScope;
  std::unordered_set<ValueId> everDefined;

  void error(const std::string &msg, const std::string &loc) {
    diags.push_back({Diagnostic::Severity::Error, msg, loc});
  }

  bool checkUse(ValueId v, const std::string &loc, const char *what) {
    if (v < 0 || v >= (ValueId)fn.values.size()) {
      error(std::string(what) + ": value id out of range", loc);
      return false;
    }
    if (!inScope.count(v)) {
      error(std::string(what) + " '" + fn.values[v].name +
                "' used before definition",
            loc);
      return false;
    }
    return true;
  }

  void define(ValueId v, const std::string &loc) {
    if (v < 0 || v >= (ValueId)fn.values.size()) {
      error("defined value id out of range", loc);
      return;
    }
    if (everDefined.count(v)) {
      error("value defined more than once", loc);
      return;
    }
    everDefined.insert(v);
    inScope.insert(v);
  }
};

inline void verifyExprInvariants(const AffineExpr &e, VerifyCtx &cx,
                                 const std::string &loc) {
  if (e.isNull())
    return;
  switch (e.kind()) {
  case ExprKind::Mul:
    if (e.lhs().kind() != ExprKind::Constant &&
        e.rhs().kind() != ExprKind::Constant)
      cx.error("affine mul without constant operand", loc);
    verifyExprInvariants(e.lhs(), cx, loc);
    verifyExprInvariants(e.rhs(), cx, loc);
    break;
  case ExprKind::FloorDiv:
  case ExprKind::Mod:
    if (!e.rhs().isConstant() || e.rhs().constantValue() <= 0)
      cx.error("floordiv/mod divisor must be a positive constant", loc);
    verifyExprInvariants(e.lhs(), cx, loc);
    break;
  case ExprKind::Add:
    verifyExprInvariants(e.lhs(), cx, loc);
    verifyExprInvariants(e.rhs(), cx, loc);
    break;
  default:
    break;
  }
}

inline void verifyMappedValues(const MappedValues &mv, VerifyCtx &cx,
                               const std::string &loc, const char *what) {
  if (mv.map.numDims() != (int64_t)mv.operands.size())
    cx.error(std::string(what) + ": map dim count != operand count", loc);
  for (ValueId v : mv.operands)
    if (cx.checkUse(v, loc, what) && !cx.fn.typeOf(v).isIndex())
      cx.error(std::string(what) + ": map operand is not an index value", loc);
  for (const auto &r : mv.map.results())
    verifyExprInvariants(r, cx, loc);
}

inline void verifyOp(const Operation &op, VerifyCtx &cx,
                     const std::string &loc) {
  const Function &fn = cx.fn;
  auto elemResult = [&](ValueId r) -> const ElemType * {
    if (r == kNoValue || !fn.typeOf(r).isElem())
      return nullptr;
    return &fn.typeOf(r).elem;
  };

  switch (op.kind) {
  case OpKind::AffineFor: {
    verifyMappedValues(op.lower, cx, loc, "lower bound");
    verifyMappedValues(op.upper, cx, loc, "upper bound");
    if (op.lower.map.numResults() < 1 || op.upper.map.numResults() < 1)
      cx.error("loop bounds need at least one result expression", loc);
    if (op.step < 1)
      cx.error("loop step must be >= 1", loc);
    if (op.iv == kNoValue || !fn.typeOf(op.iv).isIndex())
      cx.error("loop induction variable must be an index value", loc);
    cx.define(op.iv, loc);
    for (size_t i = 0; i < op.body.size(); ++i)
      verifyOp(op.body[i], cx, loc + ".body[" + std::to_string(i) + "]");
    cx.inScope.erase(op.iv);
    // Values defined in the region go out of scope with it.
    for (const auto &child : op.body)
      if (child.result != kNoValue)
        cx.inScope.erase(child.result);
    break;
  }
  case OpKind::Load: {
    if (op.operands.size() != 1) {
      cx.error("load takes exactly one memref operand", loc);
      break;
    }
    if (!cx.checkUse(op.operands[0], loc, "load memref"))
      break;
    if (!fn.typeOf(op.operands[0]).isMemRef()) {
      cx.error("load target is not a memref", loc);
      break;
    }
    const auto &desc = fn.memrefOf(op.operands[0]);
    verifyMappedValues(op.access, cx, loc, "access map");
    if (op.access.map.numResults() != desc.rank())
      cx.error("access map result count != memref rank", loc);
    const ElemType *rt = elemResult(op.result);
    if (!rt || !(*rt == desc.elem))
      cx.error("load result type must equal memref element type", loc);
    cx.define(op.result, loc);
    break;
  }
  case OpKind::Store: {
    if (op.operands.size() != 2) {
      cx.error("store takes memref and value operands", loc);
      break;
    }
    if (!cx.checkUse(op.operands[0], loc, "store memref") ||
        !cx.checkUse(op.operands[1], loc, "store value"))
      break;
    if (!fn.typeOf(op.operands[0]).isMemRef()) {
      cx.error("store target is not a memref", loc);
      break;
    }
    const auto &desc = fn.memrefOf(op.operands[0]);
    verifyMappedValues(op.access, cx, loc, "access map");
    if (op.access.map.numResults() != desc.rank())
      cx.error("access map result count != memref rank", loc);
    if (!(fn.typeOf(op.operands[1]).isElem() &&
          fn.typeOf(op.operands[1]).elem == desc.elem))
      cx.error("stored value type must equal memref element type", loc);
    break;
  }
  case OpKind::Add:
  case OpKind::Mul: {
    if (op.operands.size() != 2) {
      cx.error("binary arith op takes two operands", loc);
      break;
    }
    for (ValueId v : op.operands)
      cx.checkUse(v, loc, "arith operand");
    const ElemType *rt = elemResult(op.result);
    if (!rt || !(fn.typeOf(op.operands[0]).isElem() &&
                 fn.typeOf(op.operands[0]).elem == *rt &&
                 fn.typeOf(op.operands[1]).isElem() &&
                 fn.typeOf(op.operands[1]).elem == *rt))
      cx.error("arith operand/result types must all match", loc);
    cx.define(op.result, loc);
    break;
  }
  case OpKind::Fma: {
    if (op.operands.size() != 3) {
      cx.error("fma takes three operands", loc);
      break;
    }
    for (ValueId v : op.operands)
      cx.checkUse(v, loc, "fma operand");
    const ElemType *rt = elemResult(op.result);
    if (!rt)
      cx.error("fma result must be an element value", loc);
    cx.define(op.result, loc);
    break;
  }
  case OpKind::Splat: {
    if (op.operands.size() != 1) {
      cx.error("splat takes one scalar operand", loc);
      break;
    }
    cx.checkUse(op.operands[0], loc, "splat operand");
    const ElemType *rt = elemResult(op.result);
    if (!rt || !rt->isVector() ||
        !(fn.typeOf(op.operands[0]).isElem() &&
          fn.typeOf(op.operands[0]).elem.lanes == 1 &&
          fn.typeOf(op.operands[0]).elem.scalar == rt->scalar))
      cx.error("splat must broadcast a scalar to a vector of the same kind",
               loc);
    cx.define(op.result, loc);
    break;
  }
  case OpKind::ShapeCast: {
    if (op.operands.size() != 1 || !cx.checkUse(op.operands[0], loc, "cast") ||
        !fn.typeOf(op.operands[0]).isMemRef()) {
      cx.error("memref_shape_cast takes one memref operand", loc);
      break;
    }
    if (op.result == kNoValue || !fn.typeOf(op.result).isMemRef()) {
      cx.error("memref_shape_cast result must be a memref", loc);
      break;
    }
    const auto &src = fn.memrefOf(op.operands[0]);
    const auto &dst = fn.memrefOf(op.result);
    if (!src.hasIdentityLayout() || !dst.hasIdentityLayout())
      cx.error("memref_shape_cast requires identity layouts", loc);
    if (src.elementCount() * src.elem.lanes !=
        dst.elementCount() * dst.elem.lanes)
      cx.error("memref_shape_cast must conserve the scalar element count",
               loc);
    if (src.elem.scalar != dst.elem.scalar)
      cx.error("memref_shape_cast cannot change the scalar kind", loc);
    cx.define(op.result, loc);
    break;
  }
  case OpKind::Alloc: {
    if (op.result == kNoValue || !fn.typeOf(op.result).isMemRef()) {
      cx.error("alloc result must be a memref", loc);
      break;
    }
    cx.define(op.result, loc);
    break;
  }
  case OpKind::Dealloc: {
    if (op.operands.size() != 1 ||
        !cx.checkUse(op.operands[0], loc, "dealloc") ||
        !fn.typeOf(op.operands[0]).isMemRef())
      cx.error("dealloc takes one memref operand", loc);
    break;
  }
  case OpKind::Constant: {
    const ElemType *rt = elemResult(op.result);
    if (!rt || !(*rt == op.constType))
      cx.error("constant result type mismatch", loc);
    cx.define(op.result, loc);
    break;
  }
  case OpKind::Call: {
    if (op.callee.empty())
      cx.error("call requires a callee symbol", loc);
    for (ValueId v : op.operands)
      cx.checkUse(v, loc, "call operand");
    break;
  }
  case OpKind::MatmulHL: {
    if (op.operands.size() != 3) {
      cx.error("hop.matmul takes exactly three memref operands", loc);
      break;
    }
    bool ok = true;
    for (ValueId v : op.operands)
      ok &= cx.checkUse(v, loc, "hop.matmul operand") &&
            fn.typeOf(v).isMemRef();
    if (!ok) {
      cx.error("hop.matmul operands must be memrefs", loc);
      break;
    }
    const auto &a = fn.memrefOf(op.operands[0]);
    const auto &b = fn.memrefOf(op.operands[1]);
    const auto &c = fn.memrefOf(op.operands[2]);
    if (a.rank() != 2 || b.rank() != 2 || c.rank() != 2) {
      cx.error("hop.matmul operands must be rank-2 memrefs", loc);
      break;
    }
    if (a.shape[1] != b.shape[0] || a.shape[0] != c.shape[0] ||
        b.shape[1] != c.shape[1])
      cx.error("hop.matmul shape mismatch: A is " +
                   std::to_string(a.shape[0]) + "x" + std::to_string(a.shape[1]) +
                   ", B is " + std::to_string(b.shape[0]) + "x" +
                   std::to_string(b.shape[1]) + ", C is " +
                   std::to_string(c.shape[0]) + "x" + std::to_string(c.shape[1]),
               loc);
    if (!(a.elem == b.elem) || !(a.elem == c.elem))
      cx.error("hop.matmul operand element types must match", loc);
    const TileParams &tp = op.tile;
    if (tp.M_C > 0 && tp.M_R > 0 && tp.M_C % tp.M_R != 0)
      cx.error("hop.matmul attribute M_R must divide M_C", loc);
    break;
  }
  }
}

} // namespace detail

/// Structural verification. Returns the violations found (empty = valid).
inline std::vector<Diagnostic> verify(const Function &fn) {
  detail::VerifyCtx cx{fn, {}, {}, {}};
  for (ValueId p : fn.params) {
    if (!fn.typeOf(p).isMemRef())
      cx.error("function parameters must be memrefs", "params");
    cx.define(p, "params");
  }
  for (size_t i = 0; i < fn.body.size(); ++i)
    detail::verifyOp(fn.body[i], cx, "body[" + std::to_string(i) + "]");
  return std::move(cx.diags);
}

inline void verifyOrThrow(const Function &fn, const char *when) {
  auto diags = verify(fn);
  if (!diags.empty())
    throw Error(std::string(when) + ": IR verification failed: " +
                diags.front().message + " at " + diags.front().location);
}

//===----------------------------------------------------------------------===//
// Construction helpers
//===----------------------------------------------------------------------===//

/// Builders for the common op shapes. All return the op by value; callers
/// append them into the region they are assembling.
struct OpBuilder {
  Function &fn;

  explicit OpBuilder(Function &fn) : fn(fn) {}

  Operation forOp(ValueId iv, MappedValues lb, MappedValues ub,
                  int64_t step = 1, std::vector<Operation> body = {}) {
    Operation op;
    op.kind = OpKind::AffineFor;
    op.iv = iv;
    op.lower = std::move(lb);
    op.upper = std::move(ub);
    op.step = step;
    op.body = std::move(body);
    return op;
  }
  Operation forOp(ValueId iv, int64_t lb, int64_t ub, int64_t step = 1) {
    return forOp(iv, MappedValues::constant(lb), MappedValues::constant(ub),
                 step);
  }

  Operation load(ValueId memref, MappedValues access, ValueId result) {
    Operation op;
    op.kind = OpKind::Load;
    op.operands = {memref};
    op.access = std::move(access);
    op.result = result;
    return op;
  }
  Operation store(ValueId memref, ValueId value, MappedValues access) {
    Operation op;
    op.kind = OpKind::Store;
    op.operands = {memref, value};
    op.access = std::move(access);
    return op;
  }
  Operation binary(OpKind kind, ValueId a, ValueId b, ValueId result) {
    Operation op;
    op.kind = kind;
    op.operands = {a, b};
    op.result = result;
    return op;
  }
  Operation splat(ValueId scalar, ValueId result) {
    Operation op;
    op.kind = OpKind::Splat;
    op.operands = {scalar};
    op.result = result;
    return op;
  }
  Operation alloc(ValueId result) {
    Operation op;
    op.kind = OpKind::Alloc;
    op.result = result;
    return op;
  }
  Operation dealloc(ValueId memref) {
    Operation op;
    op.kind = OpKind::Dealloc;
    op.operands = {memref};
    return op;
  }
  Operation shapeCast(ValueId memref, ValueId result) {
    Operation op;
    op.kind = OpKind::ShapeCast;
    op.operands = {memref};
    op.result = result;
    return op;
  }

  /// Identity access A[iv0, iv1, ...].
  MappedValues ivAccess(std::vector<ValueId> ivs) {
    int64_t rank = (int64_t)ivs.size();
    return MappedValues(AffineMap::identity(rank), std::move(ivs));
  }
};

//===----------------------------------------------------------------------===//
// Walking utilities
//===----------------------------------------------------------------------===//

/// Pre-order walk over ops (mutable).
inline void walk(std::vector<Operation> &ops,
                 const std::function<void(Operation &)> &fn) {
  for (auto &op : ops) {
    fn(op);
    if (!op.body.empty())
      walk(op.body, fn);
  }
}
inline void walk(Function &f, const std::function<void(Operation &)> &fn) {
  walk(f.body, fn);
}
inline void walk(const std::vector<Operation> &ops,
                 const std::function<void(const Operation &)> &fn) {
  for (const auto &op : ops) {
    fn(op);
    if (!op.body.empty())
      walk(op.body, fn);
  }
}
inline void walk(const Function &f,
                 const std::function<void(const Operation &)> &fn) {
  walk(f.body, fn);
}

/// Follows a path of body indices to a (loop) op. Throws on bad paths.
inline Operation &opAtPath(Function &fn, std::span<const int64_t> path) {
  std::vector<Operation> *ops = &fn.body;
  Operation *cur = nullptr;
  for (int64_t idx : path) {
    if (idx < 0 || idx >= (int64_t)ops->size())
      throw Error("op path out of range");
    cur = &(*ops)[idx];
    ops = &cur->body;
  }
  if (!cur)
    throw Error("empty op path");
  return *cur;
}
inline const Operation &opAtPath(const Function &fn,
                                 std::span<const int64_t> path) {
  return opAtPath(const_cast<Function &>(fn), path);
}

/// Path of the perfectly nested loop chain starting at the function body:
/// [0] while each level's sole loop contains exactly one op... The returned
/// paths address each loop from outermost to innermost.
inline std::vector<std::vector<int64_t>> perfectNestPaths(const Function &fn) {
  std::vector<std::vector<int64_t>> paths;
  const std::vector<Operation> *ops = &fn.body;
  std::vector<int64_t> cur;
  while (true) {
    int64_t forIdx = -1;
    for (size_t i = 0; i < ops->size(); ++i)
      if ((*ops)[i].kind == OpKind::AffineFor) {
        if (forIdx >= 0)
          return paths; // multiple loops at one level: stop here
        forIdx = (int64_t)i;
      }
    if (forIdx < 0)
      return paths;
    cur.push_back(forIdx);
    paths.push_back(cur);
    ops = &(*ops)[forIdx].body;
  }
}

} // namespace hopt
