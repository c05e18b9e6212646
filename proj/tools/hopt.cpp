//===- hopt.cpp - Pipeline driver CLI -----------------------------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// hopt run:   build a hop.matmul, apply the enabled stages, verify against
//             the naive native baseline, benchmark, and print the report.
// hopt sweep: run a grid of register-tile configurations and emit CSV.
//
//===----------------------------------------------------------------------===//

#include "hopt/hopt.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace hopt;

namespace {

struct CommonArgs {
  PipelineConfig config;
  std::string machineArg = "coffeelake-i7-8700k";
  std::string elemArg = "f64";
  std::string permArg = "ji";
  std::string csvPath;
  bool tileSet = false;

  void addTo(CLI::App &app, bool withFlags) {
    app.add_option("--m", config.m, "Rows of A and C");
    app.add_option("--n", config.n, "Columns of B and C");
    app.add_option("--k", config.k, "Columns of A / rows of B");
    app.add_option("--elem", elemArg, "Element type: f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    auto *mc = app.add_option("--mc", config.tile.M_C, "Cache tile M_C");
    auto *kc = app.add_option("--kc", config.tile.K_C, "Cache tile K_C");
    auto *mr = app.add_option("--mr", config.tile.M_R, "Register tile M_R");
    auto *nr = app.add_option("--nr", config.tile.N_R, "Register tile N_R");
    auto *ku = app.add_option("--ku", config.tile.K_U, "k-loop unroll factor");
    app.add_option("--inner-perm", permArg,
                   "Intra-register-tile order of the last two loops")
        ->check(CLI::IsMember({"ji", "ij"}));
    app.add_option("--machine", machineArg,
                   "Machine model preset name or config file path");
    app.add_option("--reps", config.reps, "Timed repetitions (min is kept)");
    app.add_option("--warmup", config.warmups, "Discarded warmup runs");
    app.add_option("--seed", config.seed, "Seed for input initialization");
    app.add_option("--csv", csvPath, "Append/write the CSV report here");
    app.add_option("--print-ir", config.printIrStage,
                   "Dump IR after a stage: hl, expand, vect, tile, copy, "
                   "unroll, scalrep, microkernel, normalize, or all");
    app.add_option("--opt-level", config.optLevel,
                   "Native backend -O level (default 3)");
    if (withFlags) {
      app.add_flag("--vect", config.flags.vect, "Vectorize along j");
      app.add_flag("--tile", config.flags.tile, "Apply the cache/register "
                                                "tiling schedule");
      app.add_flag("--copy", config.flags.copy, "Pack the LHS block and RHS "
                                                "panels (requires --tile)");
      app.add_flag("--unroll", config.flags.unroll,
                   "Unroll-and-jam the register tile and the k loop");
      app.add_flag("--scalrep", config.flags.scalrep, "Scalar replacement");
      app.add_flag("--microkernel", config.flags.microkernel,
                   "Map the inner loops to the registered reference "
                   "microkernel (requires --tile --copy)");
    }
    // Track whether tile params were overridden so element-type defaults can
    // kick in otherwise.
    app.callback([this, mc, kc, mr, nr, ku] {
      tileSet = mc->count() || kc->count() || mr->count() || nr->count() ||
                ku->count();
    });
  }

  void finalize() {
    config.elem = elemArg == "f32" ? ScalarKind::F32 : ScalarKind::F64;
    config.tile.innerPerm = permArg == "ij" ? TileParams::InnerPerm::IJ
                                             : TileParams::InnerPerm::JI;
    if (!tileSet) {
      auto perm = config.tile.innerPerm;
      config.tile = PipelineConfig::defaultTile(config.elem);
      config.tile.innerPerm = perm;
    }
    if (machineArg.find('/') != std::string::npos ||
        machineArg.find(".cfg") != std::string::npos)
      config.machine = loadMachineModel(machineArg);
    else
      config.machine = machineModelByName(machineArg);
  }
};

void writeCsv(const std::string &path, const std::string &header,
              const std::vector<std::string> &rows) {
  bool writeHeader = true;
  if (std::ifstream probe(path); probe.good())
    writeHeader = probe.peek() == std::ifstream::traits_type::eof();
  std::ofstream out(path, std::ios::app);
  if (!out)
    throw Error("cannot open CSV file '" + path + "'");
  if (writeHeader)
    out << header << "\n";
  for (const auto &r : rows)
    out << r << "\n";
}

std::vector<std::pair<int64_t, int64_t>>
parseRegisterTiles(const std::string &arg) {
  std::vector<std::pair<int64_t, int64_t>> tiles;
  std::stringstream ss(arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto x = item.find('x');
    if (x == std::string::npos)
      throw Error("--rtile entries look like MRxNR, e.g. 4x8");
    tiles.emplace_back(std::stoll(item.substr(0, x)),
                       std::stoll(item.substr(x + 1)));
  }
  return tiles;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"hopt: affine loop-nest transformations for GEMM, with a "
               "benchmarking pipeline"};
  app.require_subcommand(1);

  CommonArgs runArgs;
  CLI::App *run = app.add_subcommand(
      "run", "Run one configuration: transform, verify, benchmark");
  runArgs.addTo(*run, /*withFlags=*/true);

  CommonArgs sweepArgs;
  std::string rtileArg = "4x8,6x8,3x16";
  std::string flagsArg = "vect,tile,copy,unroll,scalrep";
  CLI::App *sw = app.add_subcommand(
      "sweep", "Run a grid of register tiles and emit a CSV report");
  sweepArgs.addTo(*sw, /*withFlags=*/false);
  sw->add_option("--rtile", rtileArg,
                 "Comma list of MRxNR register tiles, e.g. 4x8,6x8,3x16");
  sw->add_option("--flags", flagsArg,
                 "Stages to enable for every sweep row (comma list of "
                 "vect,tile,copy,unroll,scalrep,microkernel)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      runArgs.finalize();
      PipelineReport report = runPipeline(runArgs.config, &std::cout);
      if (!runArgs.csvPath.empty())
        writeCsv(runArgs.csvPath, PipelineReport::csvHeader(),
                 {report.csvRow()});
      else
        std::cout << PipelineReport::csvHeader() << "\n"
                  << report.csvRow() << "\n";
      if (!report.verified) {
        std::cerr << "error: verification failed (max rel err = "
                  << report.maxRelErr << ")\n";
        return 1;
      }
      return 0;
    }

    sweepArgs.finalize();
    PipelineFlags flags;
    {
      std::stringstream ss(flagsArg);
      std::string f;
      while (std::getline(ss, f, ',')) {
        if (f == "vect")
          flags.vect = true;
        else if (f == "tile")
          flags.tile = true;
        else if (f == "copy")
          flags.copy = true;
        else if (f == "unroll")
          flags.unroll = true;
        else if (f == "scalrep")
          flags.scalrep = true;
        else if (f == "microkernel")
          flags.microkernel = true;
        else if (!f.empty())
          throw Error("unknown stage '" + f + "' in --flags");
      }
    }
    std::vector<PipelineConfig> grid;
    for (auto [mr, nr] : parseRegisterTiles(rtileArg)) {
      PipelineConfig c = sweepArgs.config;
      c.flags = flags;
      c.tile.M_R = mr;
      c.tile.N_R = nr;
      grid.push_back(c);
    }
    std::ostringstream csv;
    std::vector<PipelineReport> reports = sweep(grid, csv, &std::cout);
    if (!sweepArgs.csvPath.empty()) {
      std::ofstream out(sweepArgs.csvPath);
      out << csv.str();
    }
    std::cout << csv.str();
    for (const auto &r : reports)
      if (!r.failure.empty())
        std::cout << "note: configuration M_R=" << r.config.tile.M_R
                  << " N_R=" << r.config.tile.N_R
                  << " failed: " << r.failure << "\n";
    return 0;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
