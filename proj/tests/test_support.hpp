//===- test_support.hpp - Shared test utilities and oracles -------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Independent oracles used to check the engine: a brute-force GEMM that never
// touches the IR path, an execution-order tracer, and buffer helpers. These
// deliberately avoid the interpreter/backend code they validate.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/hopt.hpp"

#include <cstring>

namespace hopt::test {

inline TensorBuffer makeBuffer(std::vector<int64_t> shape, ScalarKind kind,
                               uint64_t seed) {
  TensorBuffer buf(MemRefDescriptor(std::move(shape), ElemType{kind, 1}));
  buf.fillRandom(seed);
  return buf;
}

/// Brute-force C += A*B with the same reduction order as the expanded nest
/// (k innermost, ascending). Independent of the IR, interpreter, and backend.
inline void referenceGemm(const TensorBuffer &A, const TensorBuffer &B,
                          TensorBuffer &C) {
  int64_t m = C.desc.shape[0], n = C.desc.shape[1], k = A.desc.shape[1];
  if (A.kind() == ScalarKind::F64) {
    const double *a = A.f64();
    const double *b = B.f64();
    double *c = C.f64();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        double acc = c[i * n + j];
        for (int64_t p = 0; p < k; ++p)
          acc += a[i * k + p] * b[p * n + j];
        c[i * n + j] = acc;
      }
  } else {
    const float *a = A.f32();
    const float *b = B.f32();
    float *c = C.f32();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        float acc = c[i * n + j];
        for (int64_t p = 0; p < k; ++p)
          acc += a[i * k + p] * b[p * n + j];
        c[i * n + j] = acc;
      }
  }
}

inline bool bitwiseEqual(const TensorBuffer &a, const TensorBuffer &b) {
  return a.scalarCount() == b.scalarCount() &&
         std::memcmp(a.raw(), b.raw(),
                     (size_t)a.scalarCount() * bytesOf(a.kind())) == 0;
}

/// A perfect nest over `extents` whose body records the visit order: on the
/// (i, j, k) visit the running counter is stored to T[i, j, k]. Interpreting
/// the (transformed) nest and reading T back yields the execution order of
/// every domain point.
struct TraceNest {
  Function fn;
  MemRefDescriptor traceDesc, counterDesc;
};

inline TraceNest makeTraceNest(std::span<const int64_t> extents) {
  TraceNest t;
  Function &fn = t.fn;
  fn.name = "trace";
  t.traceDesc = MemRefDescriptor(
      std::vector<int64_t>(extents.begin(), extents.end()), ElemType::f64());
  t.counterDesc = MemRefDescriptor({1}, ElemType::f64());
  ValueId T = fn.addParam(t.traceDesc, "T");
  ValueId CNT = fn.addParam(t.counterDesc, "CNT");

  OpBuilder b(fn);
  std::vector<ValueId> ivs;
  for (size_t d = 0; d < extents.size(); ++d)
    ivs.push_back(fn.addValue(Type::index(), "i"));

  MappedValues zero(AffineMap(0, 0, {AffineExpr::constant(0)}), {});
  ValueId cur = fn.addValue(Type::of(ElemType::f64()));
  ValueId one = fn.addValue(Type::of(ElemType::f64()));
  ValueId next = fn.addValue(Type::of(ElemType::f64()));

  std::vector<Operation> body;
  body.push_back(b.load(CNT, zero, cur));
  body.push_back(b.store(T, cur, b.ivAccess(ivs)));
  Operation cst;
  cst.kind = OpKind::Constant;
  cst.constValue = 1.0;
  cst.constType = ElemType::f64();
  cst.result = one;
  body.push_back(std::move(cst));
  body.push_back(b.binary(OpKind::Add, cur, one, next));
  body.push_back(b.store(CNT, next, zero));

  for (int64_t d = (int64_t)extents.size() - 1; d >= 0; --d) {
    Operation loop = b.forOp(ivs[d], 0, extents[d]);
    loop.body = std::move(body);
    body.clear();
    body.push_back(std::move(loop));
  }
  fn.body = std::move(body);
  return t;
}

/// Execution order of every point of the (possibly transformed) trace nest:
/// result[flat(i,j,k)] = visit sequence number, or -1 if unvisited.
inline std::vector<int64_t> runTrace(const TraceNest &nest,
                                     std::span<const int64_t> extents) {
  TensorBuffer T(nest.traceDesc), CNT(nest.counterDesc);
  int64_t total = 1;
  for (int64_t e : extents)
    total *= e;
  for (int64_t i = 0; i < total; ++i)
    T.f64()[i] = -1.0;
  interpret(nest.fn, {&T, &CNT});
  std::vector<int64_t> order(total);
  for (int64_t i = 0; i < total; ++i)
    order[i] = (int64_t)T.f64()[i];
  return order;
}

/// Schedule-lexicographic visit order computed directly from the schedule
/// definition (timestamps via affine evaluation), independent of the engine.
inline std::vector<int64_t>
scheduleOracleOrder(const TilingSchedule &s, std::span<const int64_t> extents) {
  int64_t total = 1;
  for (int64_t e : extents)
    total *= e;
  std::vector<std::vector<int64_t>> stamps(total);
  std::vector<int64_t> point(extents.size(), 0);
  std::vector<int64_t> flatOf(total);
  for (int64_t flat = 0; flat < total; ++flat) {
    int64_t rem = flat;
    for (int64_t d = (int64_t)extents.size() - 1; d >= 0; --d) {
      point[d] = rem % extents[d];
      rem /= extents[d];
    }
    std::vector<int64_t> stamp;
    for (const auto &e : s.entries)
      stamp.push_back(point[e.dim] / e.divisor);
    stamps[flat] = std::move(stamp);
    flatOf[flat] = flat;
  }
  std::sort(flatOf.begin(), flatOf.end(), [&](int64_t a, int64_t b) {
    return stamps[a] < stamps[b];
  });
  std::vector<int64_t> order(total);
  for (int64_t seq = 0; seq < total; ++seq)
    order[flatOf[seq]] = seq;
  return order;
}

} // namespace hopt::test
