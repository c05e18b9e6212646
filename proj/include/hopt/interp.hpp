//===- interp.hpp - Reference interpreter and tensor buffers ----------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Big-step evaluation of verified functions. This is the ground-truth
// semantics every backend and rewrite is checked against: loops follow the
// max/min bound maps, accesses resolve through layout maps with logical
// bounds checks (the interpreter doubles as the memory-safety oracle),
// vector ops are lane-wise, and f32 arithmetic rounds per operation.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/ir.hpp"

#include <cmath>
#include <cstring>
#include <random>

namespace hopt {

/// Flat scalar storage for a memref, sized to the layout's image box
/// (padding included) and aligned to at least the descriptor's alignment.
/// Views (e.g. results of memref_shape_cast) share storage.
class TensorBuffer {
public:
  MemRefDescriptor desc;

  TensorBuffer() = default;

  explicit TensorBuffer(MemRefDescriptor d) : desc(std::move(d)) {
    normShape = desc.normalizedShape();
    initStrides();
    int64_t align = std::max<int64_t>(desc.alignment, 64);
    size_t bytes = (size_t)scalars * bytesOf(desc.elem.scalar);
    bytes = (bytes + align - 1) / align * align;
    void *p = ::operator new(bytes, std::align_val_t((size_t)align));
    std::memset(p, 0, bytes);
    storage = std::shared_ptr<void>(
        p, [align](void *q) { ::operator delete(q, std::align_val_t((size_t)align)); });
  }

  /// A view reinterpreting this buffer's storage under another descriptor.
  /// The scalar element counts must agree.
  TensorBuffer viewAs(MemRefDescriptor d) const {
    TensorBuffer v;
    v.desc = std::move(d);
    v.normShape = v.desc.normalizedShape();
    v.initStrides();
    if (v.scalars != scalars)
      throw Error("buffer view must preserve the scalar element count");
    v.storage = storage;
    return v;
  }

  int64_t scalarCount() const { return scalars; }
  ScalarKind kind() const { return desc.elem.scalar; }
  int64_t lanes() const { return desc.elem.lanes; }

  double *f64() { return static_cast<double *>(storage.get()); }
  const double *f64() const { return static_cast<const double *>(storage.get()); }
  float *f32() { return static_cast<float *>(storage.get()); }
  const float *f32() const { return static_cast<const float *>(storage.get()); }
  void *raw() { return storage.get(); }
  const void *raw() const { return storage.get(); }

  double readScalar(int64_t i) const {
    return kind() == ScalarKind::F32 ? (double)f32()[i] : f64()[i];
  }
  void writeScalar(int64_t i, double v) {
    if (kind() == ScalarKind::F32)
      f32()[i] = (float)v;
    else
      f64()[i] = v;
  }

  const std::vector<int64_t> &physicalShape() const { return normShape; }
  const std::vector<int64_t> &physicalStrides() const { return strides; }

  /// Deterministic pseudo-random fill in [-1, 1), identical across hosts.
  void fillRandom(uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int64_t i = 0; i < scalars; ++i) {
      double u = (double)(rng() >> 11) * 0x1p-53; // [0,1)
      writeScalar(i, 2.0 * u - 1.0);
    }
  }
  void fillZero() {
    std::memset(storage.get(), 0, (size_t)scalars * bytesOf(kind()));
  }
  void copyDataFrom(const TensorBuffer &other) {
    if (other.scalars != scalars || other.kind() != kind())
      throw Error("buffer copy: storage mismatch");
    std::memcpy(storage.get(), other.storage.get(),
                (size_t)scalars * bytesOf(kind()));
  }

private:
  std::vector<int64_t> normShape;
  std::vector<int64_t> strides; // element strides over normShape (row-major)
  std::shared_ptr<void> storage;
  int64_t scalars = 0;

  void initStrides() {
    strides.assign(normShape.size(), 1);
    for (int64_t i = (int64_t)normShape.size() - 2; i >= 0; --i)
      strides[i] = strides[i + 1] * normShape[i + 1];
    int64_t elems = normShape.empty() ? 1 : strides[0] * normShape[0];
    scalars = elems * desc.elem.lanes;
  }
};

/// Max relative error between two equally-shaped buffers, and a pass flag
/// against the given tolerance. Denominator is max(|b|, eps).
struct VerifyResult {
  double maxRelError = 0.0;
  bool pass = true;
};

inline VerifyResult verifyBuffers(const TensorBuffer &a, const TensorBuffer &b,
                                  double relTol) {
  if (a.scalarCount() != b.scalarCount())
    throw Error("verify: buffer shapes differ");
  constexpr double eps = 1e-30;
  VerifyResult r;
  for (int64_t i = 0; i < a.scalarCount(); ++i) {
    double x = a.readScalar(i), y = b.readScalar(i);
    double rel = std::abs(x - y) / std::max(std::abs(y), eps);
    if (rel > r.maxRelError)
      r.maxRelError = rel;
  }
  r.pass = r.maxRelError <= relTol;
  return r;
}

/// Argument marshaled to a call-op handler: a buffer or an index value.
struct CallArg {
  TensorBuffer *buffer = nullptr;
  int64_t index = 0;
};
using CallHandler =
    std::function<void(const std::string &callee, std::span<const CallArg>)>;

namespace detail {

struct RtVal {
  int64_t idx = 0;
  double lane[kMaxLanes] = {};
};

class Interp {
public:
  Interp(const Function &fn, std::span<TensorBuffer *const> args,
         const CallHandler *hook)
      : fn(fn), hook(hook) {
    env.resize(fn.values.size());
    buffers.resize(fn.values.size(), nullptr);
    if (args.size() != fn.params.size())
      throw Error("interpret: argument count != parameter count");
    for (size_t i = 0; i < args.size(); ++i) {
      if (!(args[i]->desc == fn.memrefOf(fn.params[i])))
        throw Error("interpret: buffer descriptor mismatch for parameter " +
                    fn.values[fn.params[i]].name);
      buffers[fn.params[i]] = args[i];
    }
  }

  void run() { execBlock(fn.body); }

private:
  const Function &fn;
  const CallHandler *hook;
  std::vector<RtVal> env;
  std::vector<TensorBuffer *> buffers;
  // Buffers created by alloc/shape_cast, keyed by result id so a dealloc
  // (or a later alloc of the same id) releases the storage promptly.
  std::unordered_map<ValueId, std::unique_ptr<TensorBuffer>> owned;

  int64_t evalMapped(const MappedValues &mv, bool takeMax) const {
    int64_t dims[16];
    assert(mv.operands.size() <= 16);
    for (size_t i = 0; i < mv.operands.size(); ++i)
      dims[i] = env[mv.operands[i]].idx;
    std::span<const int64_t> d(dims, mv.operands.size());
    int64_t best = mv.map.result(0).evaluate(d);
    for (int64_t i = 1; i < mv.map.numResults(); ++i) {
      int64_t v = mv.map.result(i).evaluate(d);
      best = takeMax ? std::max(best, v) : std::min(best, v);
    }
    return best;
  }

  /// Resolves an access to a flat scalar offset (of the element's first lane).
  int64_t resolveAccess(const Operation &op, const TensorBuffer &buf) const {
    const MappedValues &mv = op.access;
    int64_t dims[16], logical[8];
    assert(mv.operands.size() <= 16 && buf.desc.rank() <= 8);
    for (size_t i = 0; i < mv.operands.size(); ++i)
      dims[i] = env[mv.operands[i]].idx;
    std::span<const int64_t> d(dims, mv.operands.size());
    for (int64_t r = 0; r < buf.desc.rank(); ++r) {
      logical[r] = mv.map.result(r).evaluate(d);
      if (logical[r] < 0 || logical[r] >= buf.desc.shape[r])
        throw Error("out-of-bounds access: index " + std::to_string(logical[r]) +
                    " outside extent " + std::to_string(buf.desc.shape[r]) +
                    " in " + std::string(nameOf(op.kind)) + " on " +
                    fn.values[op.operands[0]].name);
    }
    int64_t flat = 0;
    if (buf.desc.hasIdentityLayout()) {
      const auto &strides = buf.physicalStrides();
      for (int64_t r = 0; r < buf.desc.rank(); ++r)
        flat += logical[r] * strides[r];
    } else {
      std::span<const int64_t> l(logical, buf.desc.rank());
      const auto &strides = buf.physicalStrides();
      for (int64_t r = 0; r < (int64_t)strides.size(); ++r)
        flat += buf.desc.layout.result(r).evaluate(l) * strides[r];
    }
    return flat * buf.desc.elem.lanes;
  }

  TensorBuffer &bufferOf(ValueId v) {
    if (!buffers[v])
      throw Error("interpret: memref " + fn.values[v].name +
                  " has no live buffer (use after dealloc?)");
    return *buffers[v];
  }

  void execBlock(const std::vector<Operation> &ops) {
    for (const auto &op : ops)
      exec(op);
  }

  void exec(const Operation &op) {
    switch (op.kind) {
    case OpKind::AffineFor: {
      int64_t lb = evalMapped(op.lower, /*takeMax=*/true);
      int64_t ub = evalMapped(op.upper, /*takeMax=*/false);
      for (int64_t iv = lb; iv < ub; iv += op.step) {
        env[op.iv].idx = iv;
        execBlock(op.body);
      }
      break;
    }
    case OpKind::Load: {
      TensorBuffer &buf = bufferOf(op.operands[0]);
      int64_t at = resolveAccess(op, buf);
      RtVal &dst = env[op.result];
      for (int64_t l = 0; l < buf.lanes(); ++l)
        dst.lane[l] = buf.readScalar(at + l);
      break;
    }
    case OpKind::Store: {
      TensorBuffer &buf = bufferOf(op.operands[0]);
      int64_t at = resolveAccess(op, buf);
      const RtVal &src = env[op.operands[1]];
      for (int64_t l = 0; l < buf.lanes(); ++l)
        buf.writeScalar(at + l, src.lane[l]);
      break;
    }
    case OpKind::Add:
    case OpKind::Mul: {
      const ElemType &t = fn.typeOf(op.result).elem;
      const RtVal &a = env[op.operands[0]];
      const RtVal &b = env[op.operands[1]];
      RtVal &r = env[op.result];
      if (t.scalar == ScalarKind::F32) {
        for (int64_t l = 0; l < t.lanes; ++l)
          r.lane[l] = op.kind == OpKind::Add
                          ? (float)((float)a.lane[l] + (float)b.lane[l])
                          : (float)((float)a.lane[l] * (float)b.lane[l]);
      } else {
        for (int64_t l = 0; l < t.lanes; ++l)
          r.lane[l] = op.kind == OpKind::Add ? a.lane[l] + b.lane[l]
                                             : a.lane[l] * b.lane[l];
      }
      break;
    }
    case OpKind::Fma: {
      const ElemType &t = fn.typeOf(op.result).elem;
      const RtVal &a = env[op.operands[0]];
      const RtVal &b = env[op.operands[1]];
      const RtVal &c = env[op.operands[2]];
      RtVal &r = env[op.result];
      for (int64_t l = 0; l < t.lanes; ++l)
        r.lane[l] = t.scalar == ScalarKind::F32
                        ? (double)std::fmaf((float)a.lane[l], (float)b.lane[l],
                                            (float)c.lane[l])
                        : std::fma(a.lane[l], b.lane[l], c.lane[l]);
      break;
    }
    case OpKind::Splat: {
      const ElemType &t = fn.typeOf(op.result).elem;
      double v = env[op.operands[0]].lane[0];
      RtVal &r = env[op.result];
      for (int64_t l = 0; l < t.lanes; ++l)
        r.lane[l] = v;
      break;
    }
    case OpKind::ShapeCast: {
      TensorBuffer &src = bufferOf(op.operands[0]);
      auto view = std::make_unique<TensorBuffer>(
          src.viewAs(fn.memrefOf(op.result)));
      buffers[op.result] = view.get();
      owned[op.result] = std::move(view);
      break;
    }
    case OpKind::Alloc: {
      auto buf = std::make_unique<TensorBuffer>(fn.memrefOf(op.result));
      buffers[op.result] = buf.get();
      owned[op.result] = std::move(buf);
      break;
    }
    case OpKind::Dealloc:
      buffers[op.operands[0]] = nullptr;
      owned.erase(op.operands[0]);
      break;
    case OpKind::Constant: {
      RtVal &r = env[op.result];
      double v = op.constType.scalar == ScalarKind::F32
                     ? (double)(float)op.constValue
                     : op.constValue;
      for (int64_t l = 0; l < op.constType.lanes; ++l)
        r.lane[l] = v;
      break;
    }
    case OpKind::Call: {
      if (!hook || !*hook)
        throw Error("interpret: no handler registered for call @" + op.callee);
      std::vector<CallArg> args;
      args.reserve(op.operands.size());
      for (ValueId v : op.operands) {
        CallArg a;
        if (fn.typeOf(v).isMemRef())
          a.buffer = &bufferOf(v);
        else
          a.index = env[v].idx;
        args.push_back(a);
      }
      (*hook)(op.callee, args);
      break;
    }
    case OpKind::MatmulHL:
      throw Error("interpret: hop.matmul must be expanded before execution");
    }
  }
};

} // namespace detail

/// Runs `fn` on the given parameter buffers (updated in place).
/// Out-of-bounds accesses raise a hard fault identifying the op.
inline void interpret(const Function &fn, std::span<TensorBuffer *const> args,
                      const CallHandler *callHook = nullptr) {
  verifyOrThrow(fn, "interpret");
  detail::Interp interp(fn, args, callHook);
  interp.run();
}

inline void interpret(const Function &fn,
                      std::initializer_list<TensorBuffer *> args,
                      const CallHandler *callHook = nullptr) {
  std::vector<TensorBuffer *> v(args);
  interpret(fn, std::span<TensorBuffer *const>(v), callHook);
}

} // namespace hopt
