//===- jit.hpp - Compile-and-load execution backend ---------------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Native execution: emitted C++ is compiled by the host toolchain into a
// shared object and loaded with dlopen. Compilation wall time is reported,
// mirroring the compile-and-run measurement loop. Timing utilities use
// minimum-of-repetitions after discarded warmups.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/codegen.hpp"
#include "hopt/interp.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <dlfcn.h>
#include <unistd.h>

namespace hopt {

struct NativeOptions {
  int optLevel = 3;
  std::string march = "native";
  std::string compiler;      // empty: $HOPT_CXX, then "c++"
  std::string workDir;       // empty: a fresh directory under the system tmp
  bool keepArtifacts = false;
};

namespace detail {

inline std::string compilerPath(const NativeOptions &opts) {
  if (!opts.compiler.empty())
    return opts.compiler;
  if (const char *env = std::getenv("HOPT_CXX"); env && *env)
    return env;
  return "c++";
}

inline std::filesystem::path freshWorkDir(const NativeOptions &opts) {
  namespace fs = std::filesystem;
  if (!opts.workDir.empty()) {
    fs::create_directories(opts.workDir);
    return opts.workDir;
  }
  static std::atomic<uint64_t> counter{0};
  fs::path base = fs::temp_directory_path() / "hopt-jit";
  fs::create_directories(base);
  fs::path dir = base / ("k" + std::to_string(::getpid()) + "-" +
                         std::to_string(counter.fetch_add(1)));
  fs::create_directories(dir);
  return dir;
}

extern "C" inline void *hoptRtAlloc(int64_t bytes, int64_t align) {
  if (align < 64)
    align = 64;
  int64_t rounded = (bytes + align - 1) / align * align;
  return std::aligned_alloc((size_t)align, (size_t)rounded);
}
extern "C" inline void hoptRtFree(void *p) { std::free(p); }

} // namespace detail

/// A compiled kernel: dlopen'd shared object with the hopt_entry symbol.
class NativeKernel {
public:
  using EntryFn = void (*)(void **, void **);

  NativeKernel() = default;
  NativeKernel(NativeKernel &&o) noexcept { *this = std::move(o); }
  NativeKernel &operator=(NativeKernel &&o) noexcept {
    std::swap(handle, o.handle);
    std::swap(entry, o.entry);
    std::swap(compileSeconds, o.compileSeconds);
    std::swap(callSymbols, o.callSymbols);
    std::swap(sourcePath, o.sourcePath);
    return *this;
  }
  NativeKernel(const NativeKernel &) = delete;
  NativeKernel &operator=(const NativeKernel &) = delete;
  ~NativeKernel() {
    if (handle)
      dlclose(handle);
  }

  double compileSeconds = 0.0;
  std::vector<std::string> callSymbols;
  std::string sourcePath;

  bool valid() const { return entry != nullptr; }

  /// Runs the kernel on the given parameter buffers. `callFns` provides the
  /// call targets for callSymbols, in order.
  void run(std::span<TensorBuffer *const> args,
           std::span<void *const> callFns = {}) const {
    if (!entry)
      throw Error("native kernel not compiled");
    if (callFns.size() != callSymbols.size())
      throw Error("native kernel expects " +
                  std::to_string(callSymbols.size()) + " call targets, got " +
                  std::to_string(callFns.size()));
    std::vector<void *> argv(args.size());
    for (size_t i = 0; i < args.size(); ++i)
      argv[i] = args[i]->raw();
    std::vector<void *> rt;
    rt.reserve(2 + callFns.size());
    rt.push_back((void *)&detail::hoptRtAlloc);
    rt.push_back((void *)&detail::hoptRtFree);
    for (void *f : callFns)
      rt.push_back(f);
    entry(argv.data(), rt.data());
  }

  void run(std::initializer_list<TensorBuffer *> args,
           std::span<void *const> callFns = {}) const {
    std::vector<TensorBuffer *> v(args);
    run(std::span<TensorBuffer *const>(v), callFns);
  }

private:
  friend NativeKernel compileNative(const Function &, const NativeOptions &);
  void *handle = nullptr;
  EntryFn entry = nullptr;
};

/// Emits, compiles, and loads `fn`. Throws with the compiler log on failure.
inline NativeKernel compileNative(const Function &fn,
                                  const NativeOptions &opts = {}) {
  namespace fs = std::filesystem;
  EmittedModule mod = emitCpp(fn);

  fs::path dir = detail::freshWorkDir(opts);
  fs::path cpp = dir / (fn.name + ".cpp");
  fs::path so = dir / (fn.name + ".so");
  fs::path log = dir / (fn.name + ".log");
  {
    std::ofstream out(cpp);
    out << mod.source;
  }

  std::string cmd = detail::compilerPath(opts) + " -std=c++17 -O" +
                    std::to_string(opts.optLevel);
  if (!opts.march.empty())
    cmd += " -march=" + opts.march;
  cmd += " -fPIC -shared -o '" + so.string() + "' '" + cpp.string() + "' 2> '" +
         log.string() + "'";

  auto t0 = std::chrono::steady_clock::now();
  int rc = std::system(cmd.c_str());
  auto t1 = std::chrono::steady_clock::now();

  if (rc != 0) {
    std::ifstream in(log);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    throw Error("native compilation failed (" + cmd + "):\n" + text);
  }

  NativeKernel kernel;
  kernel.compileSeconds = std::chrono::duration<double>(t1 - t0).count();
  kernel.callSymbols = mod.callSymbols;
  kernel.sourcePath = cpp.string();
  kernel.handle = dlopen(so.c_str(), RTLD_NOW | RTLD_LOCAL);
  if (!kernel.handle)
    throw Error(std::string("dlopen failed: ") + dlerror());
  kernel.entry = (NativeKernel::EntryFn)dlsym(kernel.handle, "hopt_entry");
  if (!kernel.entry)
    throw Error("hopt_entry symbol missing from compiled kernel");
  if (!opts.keepArtifacts) {
    std::error_code ec;
    fs::remove(log, ec);
  }
  return kernel;
}

/// Minimum wall time across `reps` runs after `warmups` discarded runs.
/// `reset` restores input state before every run (timed and warmup alike)
/// and is excluded from the measurement.
struct BenchResult {
  double bestSeconds = 0.0;
  std::vector<double> allSeconds;
};

template <typename RunFn, typename ResetFn>
BenchResult benchmark(RunFn &&run, ResetFn &&reset, int warmups, int reps) {
  if (reps < 1)
    throw Error("benchmark: reps must be >= 1");
  for (int i = 0; i < warmups; ++i) {
    reset();
    run();
  }
  BenchResult r;
  r.allSeconds.reserve(reps);
  for (int i = 0; i < reps; ++i) {
    reset();
    auto t0 = std::chrono::steady_clock::now();
    run();
    auto t1 = std::chrono::steady_clock::now();
    r.allSeconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  r.bestSeconds = *std::min_element(r.allSeconds.begin(), r.allSeconds.end());
  return r;
}

} // namespace hopt
