//===- hopt.hpp - Umbrella header ---------------------------------------------===//
//
// Part of the hopt project, under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception
//
//===----------------------------------------------------------------------===//

#pragma once

#include "hopt/affine.hpp"
#include "hopt/ir.hpp"
#include "hopt/printer.hpp"
#include "hopt/parser.hpp"
#include "hopt/schedule.hpp"
#include "hopt/layout.hpp"
#include "hopt/xform.hpp"
#include "hopt/vect.hpp"
#include "hopt/model.hpp"
#include "hopt/interp.hpp"
#include "hopt/codegen.hpp"
#include "hopt/jit.hpp"
#include "hopt/microkernel.hpp"
#include "hopt/pipeline.hpp"
