//===- microkernel.hpp - Pluggable panel-panel microkernels -------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// "Outer loops generated, inner kernel supplied": mapToMicrokernel replaces
// the inner three loops (K_C, N_R, M_R trips) of a tiled+packed function with
// one call per (register-tile row, panel), targeting a registered kernel that
// multiplies an M_R x K_C packed block column by a K_C x N_R packed panel
// into C.
//
// Kernel C ABI (also used by the emitted native code):
//
//   void kernel(const void* aPanel,  // M_R x K_C, column-of-M_R layout
//               const void* bPanel,  // K_C x N_R, row-major
//               void* cBlock,        // M_R x N_R block at row stride ldc
//               int64_t ldc, int64_t kc);
//
// The generated call op carries (Abuf, Bbuf, C, i3, jp, kt) with the packed
// LHS normalized to [M_C/M_R, K_C, M_R]; i3 is the global register-tile row
// index, jp the panel index, kt the k-tile index (kept for the foreign-hook
// argument order; the packed operands are already k-local).
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/interp.hpp"
#include "hopt/rewrite.hpp"

#include <map>

namespace hopt {

using MicrokernelRawFn = void (*)(const void *, const void *, void *, int64_t,
                                  int64_t);

/// A registered microkernel and the tile shape it implements.
struct Microkernel {
  std::string name;
  int64_t M_R = 0, N_R = 0, K_C = 0;
  ScalarKind elem = ScalarKind::F64;
  MicrokernelRawFn fn = nullptr;
};

class MicrokernelRegistry {
public:
  void add(Microkernel k) {
    if (!k.fn)
      throw Error("register_microkernel: null kernel function");
    if (k.M_R <= 0 || k.N_R <= 0 || k.K_C <= 0)
      throw Error("register_microkernel: sizes must be positive");
    kernels[k.name] = k;
  }

  const Microkernel *find(int64_t mr, int64_t nr, int64_t kc,
                          ScalarKind elem) const {
    for (const auto &[name, k] : kernels)
      if (k.M_R == mr && k.N_R == nr && k.K_C == kc && k.elem == elem)
        return &k;
    return nullptr;
  }
  const Microkernel *findByName(const std::string &name) const {
    auto it = kernels.find(name);
    return it == kernels.end() ? nullptr : &it->second;
  }

  /// The interpreter hook: marshals call-op arguments to the kernel ABI.
  CallHandler interpreterHook() const {
    return [this](const std::string &callee, std::span<const CallArg> args) {
      const Microkernel *k = findByName(callee);
      if (!k)
        throw Error("call @" + callee + ": no registered microkernel");
      if (args.size() != 6 || !args[0].buffer || !args[1].buffer ||
          !args[2].buffer)
        throw Error("call @" + callee + ": unexpected argument shape");
      TensorBuffer &aBuf = *args[0].buffer;
      TensorBuffer &bBuf = *args[1].buffer;
      TensorBuffer &cBuf = *args[2].buffer;
      int64_t i3 = args[3].index, jp = args[4].index;
      int64_t panels = aBuf.desc.shape[0];
      int64_t kc = aBuf.desc.shape[1], mr = aBuf.desc.shape[2];
      int64_t nr = bBuf.desc.shape[1];
      int64_t ldc = cBuf.desc.shape[1];
      int64_t eb = bytesOf(aBuf.kind());
      auto *a = (const char *)aBuf.raw() + (i3 % panels) * kc * mr * eb;
      auto *b = (const char *)bBuf.raw();
      auto *c = (char *)cBuf.raw() + (i3 * mr * ldc + jp * nr) * eb;
      k->fn(a, b, c, ldc, kc);
    };
  }

  /// Raw call targets for a native kernel's callSymbols list.
  std::vector<void *> nativeCallTargets(std::span<const std::string> symbols) const {
    std::vector<void *> out;
    for (const auto &s : symbols) {
      const Microkernel *k = findByName(s);
      if (!k)
        throw Error("native call target @" + s + " is not registered");
      out.push_back((void *)k->fn);
    }
    return out;
  }

private:
  std::map<std::string, Microkernel> kernels;
};

//===----------------------------------------------------------------------===//
// Reference kernels
//===----------------------------------------------------------------------===//

/// Plain-C++ reference microkernel: an M_R x N_R register tile accumulated
/// over kc. The packed LHS stores column k of the block as M_R consecutive
/// elements (the tiled layout produced by choosePackLayout).
template <typename T, int MR, int NR>
void referenceMicrokernel(const void *aPanel, const void *bPanel, void *cBlock,
                          int64_t ldc, int64_t kc) {
  const T *a = (const T *)aPanel;
  const T *b = (const T *)bPanel;
  T *c = (T *)cBlock;
  T acc[MR][NR];
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j)
      acc[i][j] = c[i * ldc + j];
  for (int64_t k = 0; k < kc; ++k) {
    for (int i = 0; i < MR; ++i) {
      T av = a[k * MR + i];
      for (int j = 0; j < NR; ++j)
        acc[i][j] += av * b[k * NR + j];
    }
  }
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j)
      c[i * ldc + j] = acc[i][j];
}

/// Registers the built-in reference kernel for the given shape, or throws if
/// no instantiation exists. Returns the kernel name.
inline std::string registerReferenceMicrokernel(MicrokernelRegistry &registry,
                                                int64_t mr, int64_t nr,
                                                int64_t kc, ScalarKind elem) {
  MicrokernelRawFn fn = nullptr;
  if (elem == ScalarKind::F64) {
    if (mr == 6 && nr == 8)
      fn = &referenceMicrokernel<double, 6, 8>;
    else if (mr == 4 && nr == 8)
      fn = &referenceMicrokernel<double, 4, 8>;
    else if (mr == 3 && nr == 16)
      fn = &referenceMicrokernel<double, 3, 16>;
  } else {
    if (mr == 6 && nr == 8)
      fn = &referenceMicrokernel<float, 6, 8>;
    else if (mr == 3 && nr == 32)
      fn = &referenceMicrokernel<float, 3, 32>;
  }
  if (!fn)
    throw Error("no reference microkernel instantiation for M_R = " +
                std::to_string(mr) + ", N_R = " + std::to_string(nr));
  std::string name = std::string(elem == ScalarKind::F64 ? "hopt_dgemm"
                                                         : "hopt_sgemm") +
                     "_kernel_" + std::to_string(mr) + "x" +
                     std::to_string(nr);
  registry.add({name, mr, nr, kc, elem, fn});
  return name;
}

/// Foreign-function hook with the exact call-site argument order
/// (A panel, B panel, C, i, j, k-offset); disabled unless explicitly wired.
/// Adapts an external kernel of that shape to the registry ABI... the offsets
/// are pre-applied by the caller, so the adapter simply drops them.
using ForeignMicrokernelFn = void (*)(const void *aPanel, const void *bPanel,
                                      void *c, int64_t i, int64_t j,
                                      int64_t k0);

//===----------------------------------------------------------------------===//
// Mapping the inner loops to a kernel call
//===----------------------------------------------------------------------===//

/// Replaces the inner three loops of the tiled+packed (non-vectorized) GEMM
/// with one call per (i-tile, j-panel). Expects the packed LHS already
/// normalized to its [M_C/M_R, K_C, M_R] tiled form and full cache tiles
/// (extents divisible by the tile sizes).
inline Function mapToMicrokernel(const Function &fn, const TileParams &params,
                                 const MicrokernelRegistry &registry) {
  verifyOrThrow(fn, "map_to_microkernel");

  // Locate the compute nest: kt -> it -> jp -> i3 -> (k, j, i).
  std::vector<const Operation *> loops;
  const std::vector<Operation> *ops = &fn.body;
  while (true) {
    const Operation *last = nullptr;
    for (const auto &op : *ops)
      if (op.kind == OpKind::AffineFor)
        last = &op;
    if (!last)
      break;
    loops.push_back(last);
    ops = &last->body;
  }
  if (loops.size() != 7)
    throw Error("map_to_microkernel: expected the tiled+packed 7-loop nest, "
                "found depth " + std::to_string(loops.size()));

  // The innermost straight-line body identifies A, B, C by access shape:
  // the store target is C, the rank-3 load the packed LHS, the remaining
  // load the packed RHS panel.
  ValueId aBuf = kNoValue, bBuf = kNoValue, cMem = kNoValue;
  for (const auto &op : loops[6]->body)
    if (op.kind == OpKind::Store)
      cMem = op.operands[0];
  for (const auto &op : loops[6]->body) {
    if (op.kind != OpKind::Load)
      continue;
    if (fn.memrefOf(op.operands[0]).rank() == 3)
      aBuf = op.operands[0];
    else if (op.operands[0] != cMem)
      bBuf = op.operands[0];
  }
  if (aBuf == kNoValue || bBuf == kNoValue || cMem == kNoValue)
    throw Error("map_to_microkernel: could not identify the packed operands; "
                "was the LHS buffer normalized to its tiled layout?");

  const MemRefDescriptor &aDesc = fn.memrefOf(aBuf);
  const MemRefDescriptor &bDesc = fn.memrefOf(bBuf);
  const MemRefDescriptor &cDesc = fn.memrefOf(cMem);
  if (aDesc.elem.isVector() || bDesc.elem.isVector())
    throw Error("map_to_microkernel: operands must be scalar-typed");
  int64_t mr = aDesc.shape[2], kc = aDesc.shape[1], nr = bDesc.shape[1];
  if (mr != params.M_R || nr != params.N_R || kc != params.K_C)
    throw Error("map_to_microkernel: packed shapes (M_R = " +
                std::to_string(mr) + ", N_R = " + std::to_string(nr) +
                ", K_C = " + std::to_string(kc) +
                ") do not match the tile parameters");
  const Microkernel *kernel = registry.find(mr, nr, kc, aDesc.elem.scalar);
  if (!kernel)
    throw Error("map_to_microkernel: no kernel registered for M_R = " +
                std::to_string(mr) + ", N_R = " + std::to_string(nr) +
                ", K_C = " + std::to_string(kc));
  if (cDesc.shape[0] % params.M_C != 0 || cDesc.shape[1] % nr != 0 ||
      fn.memrefOf(aBuf).shape[0] * mr != params.M_C)
    throw Error("map_to_microkernel: partial tiles are not supported; "
                "extents must be multiples of the tile sizes");

  Function out = fn;
  // Re-locate in the copy and splice the call over the k loop (loops[4]).
  std::vector<Operation *> mloops;
  std::vector<Operation> *mops = &out.body;
  while (true) {
    Operation *last = nullptr;
    for (auto &op : *mops)
      if (op.kind == OpKind::AffineFor)
        last = &op;
    if (!last)
      break;
    mloops.push_back(last);
    mops = &last->body;
  }
  Operation &i3Loop = *mloops[3];
  Operation &kLoop = *mloops[4];
  Operation call;
  call.kind = OpKind::Call;
  call.callee = kernel->name;
  call.operands = {aBuf,         bBuf,         cMem,
                   i3Loop.iv,    mloops[2]->iv, mloops[0]->iv};
  for (auto &op : i3Loop.body) {
    if (&op == &kLoop) {
      op = std::move(call);
      break;
    }
  }

  verifyOrThrow(out, "map_to_microkernel result");
  return out;
}

} // namespace hopt
