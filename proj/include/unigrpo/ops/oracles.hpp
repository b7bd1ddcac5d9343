// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace unigrpo::ops {

// One self-check. `measured` is compared against `tolerance` in the sense
// recorded by `relation` ("<=" or "<").
struct OracleResult {
  std::string group;
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string relation = "<=";
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  uint64_t seed = 2026;
  // Negative control: perturbs every analytic gradient by 1% before the
  // finite-difference comparison.
  bool corrupt_gradient = false;
};

// Central finite differences (>= 120 coordinates, relative tolerance 1e-4)
// for the text surrogate, the flow surrogate, both flow regularizers and
// both pretraining losses, with rollout noise frozen.
std::vector<OracleResult> gradient_oracles(const VerifyOptions& options);
// Hand values, standardization over 1000 random groups, affine invariance.
std::vector<OracleResult> advantage_oracles(const VerifyOptions& options);
// Monte-Carlo centering of the normalized log ratio, and r = 1 on-policy.
std::vector<OracleResult> ratio_norm_oracles(const VerifyOptions& options);
// Latent KL against Monte Carlo, plus the closed-form spot value.
std::vector<OracleResult> latent_kl_oracles(const VerifyOptions& options);
// Zero-noise hybrid rollouts equal ODE rollouts bit for bit; SDE and ODE
// terminal moments agree for a Gaussian target.
std::vector<OracleResult> sde_oracles(const VerifyOptions& options);
// Velocity evaluations per training rollout with and without guidance.
std::vector<OracleResult> rollout_budget_oracles(const VerifyOptions& options);

std::vector<OracleResult> run_all_oracles(const VerifyOptions& options);

// "ORACLE <group>/<name> PASS|FAIL measured=<x> tolerance<=<y> <detail>"
std::string format_oracle(const OracleResult& r);
bool all_passed(const std::vector<OracleResult>& results);

}  // namespace unigrpo::ops
