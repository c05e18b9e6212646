//===- pipeline.hpp - The staged GEMM optimization pipeline -------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Fixed stage order: vectorize -> tile -> pack -> unroll(+K_U) -> scalar
// replacement -> normalize -> native backend, with an optional microkernel
// route (tile + pack + normalize + call mapping). Each run verifies the
// optimized kernel against the naive native baseline on seeded inputs,
// benchmarks it, and reports compile time, GFLOPS, register demand, and
// cache diagnostics as a CSV row.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/jit.hpp"
#include "hopt/layout.hpp"
#include "hopt/microkernel.hpp"
#include "hopt/model.hpp"
#include "hopt/schedule.hpp"
#include "hopt/vect.hpp"
#include "hopt/xform.hpp"

#include <iostream>
#include <map>
#include <sstream>

namespace hopt {

struct PipelineFlags {
  bool vect = false;
  bool tile = false;
  bool copy = false;
  bool unroll = false;
  bool scalrep = false;
  bool microkernel = false;

  std::string str() const {
    std::string s;
    auto add = [&](bool on, const char *name) {
      if (on)
        s += (s.empty() ? "" : "+") + std::string(name);
    };
    add(vect, "vect");
    add(tile, "tile");
    add(copy, "copy");
    add(unroll, "unroll");
    add(scalrep, "scalrep");
    add(microkernel, "microkernel");
    return s.empty() ? "none" : s;
  }

  void validate() const {
    if (copy && !tile)
      throw Error("flag error: --copy requires --tile");
    if (unroll && !tile)
      throw Error("flag error: --unroll requires --tile");
    if (microkernel) {
      if (!tile || !copy)
        throw Error("flag error: --microkernel requires --tile and --copy");
      if (unroll || vect || scalrep)
        throw Error("flag error: --microkernel replaces the inner loops; it "
                    "is incompatible with --vect/--unroll/--scalrep");
    }
  }
};

struct PipelineConfig {
  int64_t m = 2088, n = 2048, k = 2048;
  ScalarKind elem = ScalarKind::F64;
  TileParams tile{180, 480, 3, 16, 4, TileParams::InnerPerm::JI};
  PipelineFlags flags;
  MachineModel machine = coffeelakeI78700K();
  int warmups = 1;
  int reps = 5;
  uint64_t seed = 42;
  int optLevel = 3;
  std::string printIrStage; // dump textual IR after this stage ("all" = every)

  /// The paper's best configurations per element type.
  static TileParams defaultTile(ScalarKind elem) {
    if (elem == ScalarKind::F32)
      return {348, 512, 3, 32, 4, TileParams::InnerPerm::JI};
    return {180, 480, 3, 16, 4, TileParams::InnerPerm::JI};
  }
};

struct PipelineReport {
  PipelineConfig config;
  bool verified = false;
  double maxRelErr = 0.0;
  double compileSeconds = 0.0;
  double bestSeconds = 0.0;
  double gflopsValue = 0.0;
  int64_t regDemand = 0;
  std::vector<Diagnostic> cacheDiags;
  std::string failure; // set when the configuration itself failed

  static std::string csvHeader() {
    return "m,n,k,elem,mc,kc,mr,nr,ku,perm,flags,verified,max_rel_err,"
           "compile_s,best_s,gflops,reg_demand,cache_notes";
  }

  std::string csvRow() const {
    std::ostringstream os;
    const TileParams &t = config.tile;
    os << config.m << ',' << config.n << ',' << config.k << ','
       << nameOf(config.elem) << ',' << t.M_C << ',' << t.K_C << ',' << t.M_R
       << ',' << t.N_R << ',' << t.K_U << ','
       << (t.innerPerm == TileParams::InnerPerm::JI ? "ji" : "ij") << ','
       << config.flags.str() << ',';
    if (!failure.empty()) {
      std::string msg = failure;
      for (char &c : msg)
        if (c == ',' || c == '\n')
          c = ';';
      os << "error,,,,,," << '"' << msg << '"';
      return os.str();
    }
    os << (verified ? "pass" : "fail") << ',';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", maxRelErr);
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.4f", compileSeconds);
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.6f", bestSeconds);
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.3f", gflopsValue);
    os << buf << ',' << regDemand << ',' << '"';
    for (size_t i = 0; i < cacheDiags.size(); ++i)
      os << (i ? "; " : "") << cacheDiags[i].message;
    os << '"';
    return os.str();
  }
};

namespace detail {

/// The main compute nest: at every region level, the last loop (packs insert
/// copy nests before the compute loop).
inline std::vector<std::vector<int64_t>> mainNestPaths(const Function &fn) {
  std::vector<std::vector<int64_t>> paths;
  const std::vector<Operation> *ops = &fn.body;
  std::vector<int64_t> cur;
  while (true) {
    int64_t lastIdx = -1;
    for (size_t i = 0; i < ops->size(); ++i)
      if ((*ops)[i].kind == OpKind::AffineFor)
        lastIdx = (int64_t)i;
    if (lastIdx < 0)
      return paths;
    cur.push_back(lastIdx);
    paths.push_back(cur);
    ops = &(*ops)[lastIdx].body;
  }
}

} // namespace detail

/// Applies the enabled stages to the expanded function. `dump` receives each
/// stage's output ("hl", "expand", "vect", "tile", "copy", "unroll",
/// "scalrep", "microkernel", "normalize"). The registry receives the
/// reference kernel when the microkernel route is taken.
inline Function applyStages(
    const PipelineConfig &config, MicrokernelRegistry &registry,
    const std::function<void(const std::string &, const Function &)> &dump =
        nullptr) {
  const PipelineFlags &flags = config.flags;
  flags.validate();
  config.machine.validate();
  const TileParams &tp = config.tile;
  int64_t w = config.machine.vectorLanes(config.elem);

  auto stage = [&](const char *name, const Function &fn) {
    if (dump)
      dump(name, fn);
  };

  Function hl = makeMatmulFunction(config.m, config.n, config.k,
                                   ElemType{config.elem, 1}, tp);
  stage("hl", hl);
  Function f = expandMatmul(hl);
  stage("expand", f);

  ValueId aVal = f.params[0], bVal = f.params[1];

  if (flags.vect) {
    auto paths = perfectNestPaths(f);
    f = vectorize(f, paths[1], w);
    stage("vect", f);
    for (const auto &op : f.body)
      if (op.kind == OpKind::ShapeCast && op.operands[0] == f.params[1])
        bVal = op.result;
  }

  if (flags.tile) {
    TilingSchedule schedule = appliedScheduleFor(tp, flags.vect, w);
    f = applyTilingSchedule(f, schedule);
    stage("tile", f);
  }

  if (flags.copy) {
    int64_t align = w * bytesOf(config.elem);
    auto nest = detail::mainNestPaths(f);
    // LHS block under the i / M_C loop (the paper's "second loop").
    PackSpec packA;
    packA.memref = aVal;
    packA.loopPath = nest[1];
    packA.bufferLayout =
        choosePackLayout(tp, PackRole::LHS, flags.microkernel);
    packA.alignment = align;
    f = generatePack(f, packA);
    // RHS panel under the j / N_R loop (the third dimension).
    nest = detail::mainNestPaths(f);
    PackSpec packB;
    packB.memref = bVal;
    packB.loopPath = nest[2];
    packB.bufferLayout = choosePackLayout(tp, PackRole::RHS, flags.microkernel);
    packB.alignment = align;
    f = generatePack(f, packB);
    stage("copy", f);
  }

  if (flags.unroll) {
    // Fully unroll-and-jam the register-tile point loops, innermost first,
    // then unroll the k loop by K_U.
    int64_t jUnit = flags.vect ? tp.N_R / w : tp.N_R;
    int64_t innerFactor, outerFactor;
    if (tp.innerPerm == TileParams::InnerPerm::JI) {
      innerFactor = tp.M_R;
      outerFactor = jUnit;
    } else {
      innerFactor = jUnit;
      outerFactor = tp.M_R;
    }
    for (int64_t factor : {innerFactor, outerFactor}) {
      auto nest = detail::mainNestPaths(f);
      f = unrollJam(f, nest.back(), factor);
    }
    auto nest = detail::mainNestPaths(f);
    f = unrollJam(f, nest.back(), tp.K_U);
    stage("unroll", f);
  }

  if (flags.scalrep) {
    f = scalarReplace(f);
    stage("scalrep", f);
  }

  if (flags.microkernel) {
    f = normalizeAllBuffers(f);
    registerReferenceMicrokernel(registry, tp.M_R, tp.N_R, tp.K_C,
                                 config.elem);
    f = mapToMicrokernel(f, tp, registry);
    stage("microkernel", f);
  } else {
    f = normalizeAllBuffers(f);
  }
  stage("normalize", f);
  return f;
}

/// Caches the naive baseline's native kernel output per problem so sweeps and
/// ladders do not re-run the slow baseline for every configuration.
struct BaselineCache {
  struct Key {
    int64_t m, n, k;
    int elem;
    uint64_t seed;
    auto operator<=>(const Key &) const = default;
  };
  std::map<Key, TensorBuffer> results;
};

inline double verifyTolerance(ScalarKind elem) {
  return elem == ScalarKind::F32 ? 1e-4 : 1e-10;
}

/// Runs one configuration end to end: build, transform, compile, verify
/// against the naive native baseline, and benchmark.
inline PipelineReport runPipeline(const PipelineConfig &config,
                                  std::ostream *log = nullptr,
                                  BaselineCache *cache = nullptr) {
  PipelineReport report;
  report.config = config;

  auto dump = [&](const std::string &name, const Function &fn) {
    if (log && (config.printIrStage == name || config.printIrStage == "all"))
      (*log) << "// ----- IR after " << name << " -----\n"
             << printFunction(fn) << "\n";
  };

  MicrokernelRegistry registry;
  Function final_ = applyStages(config, registry, dump);

  int64_t w = config.machine.vectorLanes(config.elem);
  report.regDemand =
      config.tile.N_R % w == 0
          ? registerDemand(config.tile.M_R, config.tile.N_R, w,
                           config.tile.innerPerm)
          : 0;
  report.cacheDiags =
      validateTileParams(config.tile, config.machine, config.elem);
  for (const auto &d : report.cacheDiags)
    if (d.severity == Diagnostic::Severity::Error)
      throw Error("tile parameter error: " + d.message);

  // Seeded inputs; C starts random (the op computes C += A*B).
  ElemType et{config.elem, 1};
  TensorBuffer A(MemRefDescriptor({config.m, config.k}, et));
  TensorBuffer B(MemRefDescriptor({config.k, config.n}, et));
  TensorBuffer pristineC(MemRefDescriptor({config.m, config.n}, et));
  A.fillRandom(config.seed);
  B.fillRandom(config.seed + 1);
  pristineC.fillRandom(config.seed + 2);

  NativeOptions nopts;
  nopts.optLevel = config.optLevel;

  // Naive native baseline output (cached across configurations).
  TensorBuffer refC(pristineC.desc);
  {
    BaselineCache::Key key{config.m, config.n, config.k, (int)config.elem,
                           config.seed};
    TensorBuffer *cached =
        cache ? (cache->results.count(key) ? &cache->results[key] : nullptr)
              : nullptr;
    if (cached) {
      refC.copyDataFrom(*cached);
    } else {
      Function naive = expandMatmul(makeMatmulFunction(
          config.m, config.n, config.k, et, config.tile, "matmul_naive"));
      NativeKernel baseline = compileNative(naive, nopts);
      refC.copyDataFrom(pristineC);
      baseline.run({&A, &B, &refC});
      if (cache) {
        auto [it, inserted] =
            cache->results.emplace(key, TensorBuffer(refC.desc));
        it->second.copyDataFrom(refC);
      }
    }
  }

  NativeKernel kernel = compileNative(final_, nopts);
  report.compileSeconds = kernel.compileSeconds;
  if (log)
    (*log) << "Compilation time: " << report.compileSeconds << "s\n";

  std::vector<void *> callTargets =
      registry.nativeCallTargets(kernel.callSymbols);

  TensorBuffer C(pristineC.desc);
  C.copyDataFrom(pristineC);
  kernel.run({&A, &B, &C}, callTargets);
  VerifyResult vr = verifyBuffers(C, refC, verifyTolerance(config.elem));
  report.verified = vr.pass;
  report.maxRelErr = vr.maxRelError;
  if (log)
    (*log) << "Verification: " << (vr.pass ? "PASS" : "FAIL")
           << " (max rel err = " << vr.maxRelError << ")\n";

  BenchResult bench = benchmark(
      [&] { kernel.run({&A, &B, &C}, callTargets); },
      [&] { C.copyDataFrom(pristineC); }, config.warmups, config.reps);
  report.bestSeconds = bench.bestSeconds;
  report.gflopsValue =
      gflops(config.m, config.n, config.k, bench.bestSeconds);
  if (log) {
    char line[160];
    std::snprintf(line, sizeof line, "%.6f GFLOPS (%.2f%% of machine peak)",
                  report.gflopsValue,
                  100.0 * report.gflopsValue /
                      machinePeak(config.machine, config.elem));
    (*log) << line << "\n";
  }
  return report;
}

/// Grid sweep: one CSV row per configuration; invalid configurations become
/// failed rows rather than aborting the sweep.
inline std::vector<PipelineReport>
sweep(const std::vector<PipelineConfig> &grid, std::ostream &csv,
      std::ostream *log = nullptr) {
  std::vector<PipelineReport> reports;
  BaselineCache cache;
  csv << PipelineReport::csvHeader() << "\n";
  for (const auto &config : grid) {
    PipelineReport report;
    report.config = config;
    try {
      report = runPipeline(config, log, &cache);
    } catch (const Error &e) {
      report.failure = e.what();
    }
    csv << report.csvRow() << "\n";
    reports.push_back(std::move(report));
  }
  return reports;
}

} // namespace hopt
