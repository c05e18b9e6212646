//===- hopt-gengolden.cpp - Regenerate the textual IR golden files ------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Writes the testdata/*.ir golden files from the pipeline builders. Run after
// an intentional printer or pipeline change, then review the diff:
//
//   ./hopt-gengolden <testdata-dir>
//
//===----------------------------------------------------------------------===//

#include "hopt/hopt.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace hopt;

namespace {

void write(const std::filesystem::path &dir, const std::string &name,
           const Function &fn) {
  std::ofstream out(dir / name);
  out << printFunction(fn);
  std::cout << "wrote " << (dir / name).string() << "\n";
}

Function staged(PipelineConfig config, const std::string &lastStage) {
  MicrokernelRegistry registry;
  Function result;
  bool found = false;
  applyStages(config, registry,
              [&](const std::string &stage, const Function &fn) {
                if (stage == lastStage) {
                  result = fn;
                  found = true;
                }
              });
  if (!found)
    throw Error("stage '" + lastStage + "' not produced");
  return result;
}

} // namespace

int main(int argc, char **argv) {
  if (argc != 2) {
    std::cerr << "usage: hopt-gengolden <testdata-dir>\n";
    return 2;
  }
  std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);

  // The paper's running DGEMM shape with the starting-point tile parameters.
  PipelineConfig dgemm;
  dgemm.m = 2088;
  dgemm.n = 2048;
  dgemm.k = 2048;
  dgemm.tile = {64, 256, 4, 8, 4, TileParams::InnerPerm::JI};

  {
    PipelineConfig c = dgemm;
    write(dir, "hl_dgemm.ir", staged(c, "hl"));
    write(dir, "naive_dgemm.ir", staged(c, "expand"));
  }
  {
    PipelineConfig c = dgemm;
    c.flags.tile = true;
    write(dir, "tiled_dgemm_2088.ir", staged(c, "tile"));
  }
  {
    PipelineConfig c = dgemm;
    c.flags.vect = true;
    write(dir, "vect_dgemm.ir", staged(c, "vect"));
  }
  {
    PipelineConfig c = dgemm;
    c.flags.vect = c.flags.tile = c.flags.copy = true;
    write(dir, "tiled_packed_dgemm.ir", staged(c, "copy"));
  }
  {
    PipelineConfig c = dgemm;
    c.tile.K_U = 1; // the readable register-tile listing
    c.flags.vect = c.flags.tile = c.flags.copy = c.flags.unroll =
        c.flags.scalrep = true;
    write(dir, "unroll_scalrep_dgemm.ir", staged(c, "scalrep"));
  }
  {
    PipelineConfig c;
    c.m = 1044;
    c.n = 1024;
    c.k = 1024;
    c.tile = {174, 512, 6, 8, 1, TileParams::InnerPerm::JI};
    c.flags.tile = c.flags.copy = c.flags.microkernel = true;
    write(dir, "microkernel_dgemm.ir", staged(c, "microkernel"));
  }
  {
    PipelineConfig c = dgemm;
    c.elem = ScalarKind::F32;
    c.tile = {348, 512, 3, 32, 4, TileParams::InnerPerm::JI};
    c.flags.vect = true;
    write(dir, "vect_sgemm.ir", staged(c, "vect"));
  }
  return 0;
}
