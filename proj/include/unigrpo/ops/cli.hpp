// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace unigrpo::ops {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitCheckpoint = 3,
  kExitNumeric = 4,
  kExitVerification = 5,
};

// Entry point of the `unigrpo` tool. `args` excludes the program name.
// Commands: pretrain, train, ablate, verify, eval.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unigrpo::ops
