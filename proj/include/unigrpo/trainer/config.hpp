// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "unigrpo/env/task.hpp"
#include "unigrpo/flow/flow_objective.hpp"
#include "unigrpo/flow/flow_policy.hpp"
#include "unigrpo/text/text_policy.hpp"

namespace unigrpo::trainer {

// Which experts receive gradient updates. Flow-only freezes the text policy
// and conditions on greedy traces; text-only freezes the flow policy.
enum class Component { kUnified, kFlowOnly, kTextOnly };

std::string_view component_name(Component c);
Component parse_component(std::string_view name);

struct PretrainSettings {
  uint64_t seed = 7;
  int pairs = 4000;
  int text_epochs = 30;
  double text_lr = 3e-3;
  int text_batch = 32;
  int flow_steps = 3000;
  double flow_lr = 3e-3;
  int flow_batch = 64;
  double p_uncond = 0.1;
};

struct TrainConfig {
  uint64_t seed = 1;
  int group_size = 8;
  int prompts_per_batch = 4;
  double clip_eps_text = 0.2;
  double clip_eps_flow = 1e-4;
  double beta_txt = 0.0;
  flow::RegMode reg = flow::RegMode::kVelocityMse;
  double mse_weight = 0.015;
  double beta_img = 1e-3;
  double lambda = 1.0;
  int ppo_epochs = 2;
  double lr_text = 1e-3;
  double lr_flow = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int train_timesteps = 10;
  int eval_timesteps = 20;
  double timestep_shift = 3.0;
  int sde_window_lo = 0;
  int sde_window_hi = 5;
  int sde_window_size = 3;
  double noise_level = 0.8;
  bool train_cfg = false;
  double train_cfg_scale = 1.5;
  double eval_cfg_scale = 1.0;
  double temperature = 1.0;
  int total_updates = 300;
  int eval_every = 25;
  int eval_prompts = 256;
  uint64_t eval_seed = 12345;
  Component component = Component::kUnified;
  double adv_eps_std = 1e-8;
  int checkpoint_every = 50;
  bool log_rollouts = false;
  std::string pretrain_dir = "pretrained";
  std::vector<uint64_t> ablation_seeds = {1, 2, 3};

  env::TaskConfig task;
  PretrainSettings pretrain;
  text::TextArch text_arch;
  flow::FlowArch flow_arch;

  double reg_weight() const;
};

// Flat `key = value` lines; `#` starts a comment. Unknown keys, malformed
// values and violated constraints throw ConfigError naming the key.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);
// Overrides a single key as if it appeared in the file.
void set_config_value(TrainConfig& config, std::string_view key, std::string_view value);
// Every key with its resolved value, in a stable order, parseable by
// parse_config.
std::string render_config(const TrainConfig& config);
void validate(const TrainConfig& config);

}  // namespace unigrpo::trainer
