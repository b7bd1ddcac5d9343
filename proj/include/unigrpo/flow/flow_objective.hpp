// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string_view>

#include "unigrpo/flow/flow_policy.hpp"
#include "unigrpo/nn/param_set.hpp"

namespace unigrpo::flow {

enum class RegMode { kNone, kLatentKl, kVelocityMse };

std::string_view reg_mode_name(RegMode mode);
// Throws ConfigError listing the valid names.
RegMode parse_reg_mode(std::string_view name);

struct FlowLossConfig {
  double clip_eps = 1e-4;
  RegMode reg = RegMode::kNone;
  double reg_weight = 0.0;
};

struct FlowLossStats {
  double surrogate = 0.0;
  double regularizer = 0.0;  // mean per windowed step, unweighted
  double mean_ratio = 0.0;
  double max_ratio = 0.0;
  double clip_fraction = 0.0;
  // Mean |v_theta - v_ref|^2 over windowed steps (0 without a reference).
  double velocity_drift = 0.0;
  int steps = 0;
};

struct FlowLossResult {
  double objective = 0.0;  // to be maximized
  nn::GradSet grads;       // dJ/dtheta
  FlowLossStats stats;
};

// For every windowed step: recompute v_theta at the stored state, form the
// transition mean, the raw log ratio against the stored log-prob, normalize
// it, and apply the clipped surrogate with the trajectory's advantage.
// Terms are averaged over windowed steps within a trajectory and over
// trajectories, then the weighted regularizer (same averaging) is
// subtracted. Trajectories rolled out with guidance are re-evaluated with the
// same guidance. `ref` may be null when reg is kNone.
FlowLossResult flow_surrogate(const nn::ParamSet& params, const FlowArch& arch,
                              std::span<const FlowTrajectory> trajectories,
                              std::span<const double> advantages, const FlowLossConfig& config,
                              const nn::ParamSet* ref);

}  // namespace unigrpo::flow
