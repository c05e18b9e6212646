//===- model.hpp - Analytical machine model -----------------------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//
//
// Peak FLOPS, register demand per register-tile permutation, cache-footprint
// validation of tile parameters, and GFLOPS accounting. Cache checks are
// advisory (overflowing L2 into L3 can pay off); divisibility violations are
// hard errors.
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/ir.hpp"

#include <fstream>

namespace hopt {

struct MachineModel {
  std::string name = "custom";
  int64_t vector_bits = 256;
  int64_t num_vector_registers = 16;
  int64_t fma_units = 2;
  double freq_ghz = 1.0;
  int64_t l1_bytes = 32 * 1024;
  int64_t l2_bytes = 256 * 1024;
  int64_t l3_bytes = 12 * 1024 * 1024;

  int64_t vectorLanes(ScalarKind k) const {
    return vector_bits / (8 * bytesOf(k));
  }

  void validate() const {
    if (vector_bits != 128 && vector_bits != 256 && vector_bits != 512)
      throw Error("machine model: vector_bits must be 128, 256, or 512");
    if (num_vector_registers <= 0 || fma_units <= 0 || freq_ghz <= 0 ||
        l1_bytes <= 0 || l2_bytes <= 0 || l3_bytes <= 0)
      throw Error("machine model: all parameters must be positive");
  }
};

/// The paper's target: Core i7-8700K (Coffee Lake), AVX2, two FMA units,
/// 4.7 GHz max turbo, 32 KiB L1d / 256 KiB L2 per core, 12 MiB shared L3.
inline MachineModel coffeelakeI78700K() {
  MachineModel m;
  m.name = "coffeelake-i7-8700k";
  m.vector_bits = 256;
  m.num_vector_registers = 16;
  m.fma_units = 2;
  m.freq_ghz = 4.7;
  m.l1_bytes = 32 * 1024;
  m.l2_bytes = 256 * 1024;
  m.l3_bytes = 12 * 1024 * 1024;
  return m;
}

inline MachineModel machineModelByName(const std::string &name) {
  if (name == "coffeelake-i7-8700k")
    return coffeelakeI78700K();
  throw Error("unknown machine model preset '" + name + "'");
}

/// Loads a key-value config ("key = value" lines, '#' comments). Unknown keys
/// are rejected.
inline MachineModel loadMachineModel(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open machine model file '" + path + "'");
  MachineModel m;
  m.name = path;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    auto hash = line.find('#');
    if (hash != std::string::npos)
      line.resize(hash);
    auto eq = line.find('=');
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (eq == std::string::npos) {
      if (!trim(line).empty())
        throw Error("machine model " + path + ":" + std::to_string(lineNo) +
                    ": expected 'key = value'");
      continue;
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "name")
      m.name = value;
    else if (key == "vector_bits")
      m.vector_bits = std::stoll(value);
    else if (key == "num_vector_registers")
      m.num_vector_registers = std::stoll(value);
    else if (key == "fma_units")
      m.fma_units = std::stoll(value);
    else if (key == "freq_ghz")
      m.freq_ghz = std::stod(value);
    else if (key == "l1_bytes")
      m.l1_bytes = std::stoll(value);
    else if (key == "l2_bytes")
      m.l2_bytes = std::stoll(value);
    else if (key == "l3_bytes")
      m.l3_bytes = std::stoll(value);
    else
      throw Error("machine model " + path + ":" + std::to_string(lineNo) +
                  ": unknown key '" + key + "'");
  }
  m.validate();
  return m;
}

/// Peak GFLOPS: fma_units * lanes * 2 flops * frequency.
inline double machinePeak(const MachineModel &m, ScalarKind elem) {
  m.validate();
  return (double)m.fma_units * (double)m.vectorLanes(elem) * 2.0 * m.freq_ghz;
}

/// Vector registers needed by an M_R x N_R register tile with vector width W:
/// the accumulators plus the operands kept live by the intra-tile order.
/// (j,i): M_R*N_R/W + M_R + 1; (i,j): M_R*N_R/W + N_R/W + 1.
inline int64_t registerDemand(int64_t mr, int64_t nr, int64_t w,
                              TileParams::InnerPerm perm) {
  if (mr <= 0 || nr <= 0 || w <= 0)
    throw Error("register_demand: sizes must be positive");
  if (nr % w != 0)
    throw Error("register_demand: vector width " + std::to_string(w) +
                " must divide N_R = " + std::to_string(nr));
  int64_t acc = mr * (nr / w);
  return perm == TileParams::InnerPerm::JI ? acc + mr + 1 : acc + nr / w + 1;
}

/// Advisory validation of tile parameters against a machine model.
/// Divisibility violations are errors; everything else is a warning or note.
inline std::vector<Diagnostic> validateTileParams(const TileParams &p,
                                                  const MachineModel &m,
                                                  ScalarKind elem) {
  m.validate();
  std::vector<Diagnostic> diags;
  auto add = [&](Diagnostic::Severity s, std::string msg) {
    diags.push_back({s, std::move(msg), ""});
  };
  if (p.M_C <= 0 || p.K_C <= 0 || p.M_R <= 0 || p.N_R <= 0 || p.K_U < 1) {
    add(Diagnostic::Severity::Error, "tile parameters must be positive");
    return diags;
  }
  int64_t w = m.vectorLanes(elem);
  if (p.M_R > 0 && p.M_C % p.M_R != 0)
    add(Diagnostic::Severity::Error,
        "M_R = " + std::to_string(p.M_R) +
            " does not divide M_C = " + std::to_string(p.M_C));
  if (p.N_R % w != 0)
    add(Diagnostic::Severity::Error,
        "vector width " + std::to_string(w) +
            " does not divide N_R = " + std::to_string(p.N_R));
  for (const auto &d : diags)
    if (d.severity == Diagnostic::Severity::Error)
      return diags;

  int64_t eb = bytesOf(elem);
  int64_t lhsTile = p.M_C * p.K_C * eb;
  if (lhsTile > m.l2_bytes) {
    add(Diagnostic::Severity::Warning,
        "LHS tile M_C x K_C = " + std::to_string(lhsTile / 1024) +
            " KiB exceeds L2 (" + std::to_string(m.l2_bytes / 1024) + " KiB)");
    if (lhsTile <= m.l3_bytes)
      add(Diagnostic::Severity::Note,
          "LHS tile still fits in L3 (" + std::to_string(m.l3_bytes / 1024) +
              " KiB); reuse moves one level down");
  }
  int64_t rhsPanel = p.K_C * p.N_R * eb;
  if (rhsPanel > m.l1_bytes)
    add(Diagnostic::Severity::Warning,
        "RHS panel K_C x N_R = " + std::to_string(rhsPanel / 1024) +
            " KiB exceeds L1 (" + std::to_string(m.l1_bytes / 1024) + " KiB)");
  int64_t demand = registerDemand(p.M_R, p.N_R, w, p.innerPerm);
  if (demand > m.num_vector_registers)
    add(Diagnostic::Severity::Warning,
        "register demand " + std::to_string(demand) + " exceeds the " +
            std::to_string(m.num_vector_registers) +
            " vector registers; expect a spill");
  return diags;
}

/// Standard GEMM flop count over wall time: 2*m*n*k / seconds / 1e9.
inline double gflops(int64_t m, int64_t n, int64_t k, double seconds) {
  if (seconds <= 0)
    throw Error("gflops: time must be positive");
  return 2.0 * (double)m * (double)n * (double)k / seconds / 1e9;
}

} // namespace hopt
