// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unigrpo/env/task.hpp"
#include "unigrpo/flow/flow_policy.hpp"
#include "unigrpo/nn/adam.hpp"
#include "unigrpo/nn/param_set.hpp"
#include "unigrpo/text/text_policy.hpp"
#include "unigrpo/trainer/config.hpp"

namespace unigrpo::trainer {

// (R - mean) / std with the population std. Groups whose std is below
// eps_std get all-zero advantages. Throws ConfigError for fewer than two
// rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double eps_std);
bool is_degenerate(std::span<const double> rewards, double eps_std);

struct Policies {
  nn::ParamSet text;
  nn::ParamSet flow;
};

struct GroupRollout {
  env::Prompt prompt;
  std::vector<text::ReasoningTrace> traces;
  std::vector<flow::FlowTrajectory> trajectories;  // trajectory i is conditioned on trace i
  std::vector<double> rewards;
  std::vector<double> advantages;
  bool degenerate = false;
  int reward_calls = 0;
  int non_finite = 0;
};

// Per-member streams come from (seed, "member", update, prompt_index,
// member), so results do not depend on scheduling.
GroupRollout rollout_group(const env::Prompt& prompt, int prompt_index, uint64_t update,
                           const Policies& old, const TrainConfig& config);

// Prompts of one update, drawn from (seed, "prompts", update).
std::vector<env::Prompt> batch_prompts(const TrainConfig& config, uint64_t update);

// Rolls out every prompt of the batch, in parallel when UNIGRPO_THREADS > 1.
std::vector<GroupRollout> rollout_batch(std::span<const env::Prompt> prompts, uint64_t update,
                                        const Policies& old, const TrainConfig& config);

struct Optimizers {
  nn::AdamState text;
  nn::AdamState flow;
};

Optimizers make_optimizers(const Policies& policies, const TrainConfig& config);

struct UpdateStats {
  double j_text = 0.0;  // last PPO epoch, at the parameters it was evaluated at
  double j_flow = 0.0;
  double clip_frac_text = 0.0;
  double clip_frac_flow = 0.0;
  double train_drift = 0.0;
  int included_groups = 0;
  bool skipped = false;
  std::string skip_reason;
};

// PPO epochs of simultaneous ascent on J_text + lambda J_flow over the
// non-degenerate groups, with one Adam state per expert. The step is
// computed on copies and committed only when every epoch stays finite.
UpdateStats unified_update(std::span<const GroupRollout> batch, Policies& policies,
                           Optimizers& optimizers, const Policies& ref, const TrainConfig& config);

// J_text + lambda J_flow and its parts at the given parameters, for
// inspection; no parameters change.
struct Objective {
  double j_text = 0.0;
  double j_flow = 0.0;
  double j = 0.0;
};
Objective evaluate_objective(std::span<const GroupRollout> batch, const Policies& policies,
                             const Policies& ref, const TrainConfig& config);

struct EvalResult {
  double reward = 0.0;
  double text_accuracy = 0.0;
  // Mean |v_theta - v_ref|^2 over every visited eval state.
  double velocity_drift = 0.0;
  int non_finite = 0;
  int64_t velocity_evals = 0;
};

// Greedy text decode plus deterministic ODE sampling at eval timesteps, with
// guidance when eval_cfg_scale != 1, on a fixed prompt set from eval_seed.
EvalResult evaluate(const Policies& policies, const Policies& ref, const TrainConfig& config);

struct MetricsRow {
  int update = 0;
  double train_reward = 0.0;
  std::optional<double> eval_reward;
  double j_text = 0.0;
  double j_flow = 0.0;
  double clip_frac_text = 0.0;
  double clip_frac_flow = 0.0;
  std::optional<double> velocity_drift;
  std::optional<double> text_accuracy;
  double velocity_evals_per_step = 0.0;
  bool skipped = false;
  int non_finite = 0;
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

// Pretraining of both experts from synthetic data.
struct PretrainResult {
  Policies policies;
  env::PretrainData data;
  double text_accuracy = 0.0;
  std::vector<double> text_losses;
  bool text_loss_monotone = true;
  double flow_min_quadrant_accuracy = 0.0;
  std::array<double, env::kAttributeTuples> flow_quadrant_accuracy{};
  std::vector<double> flow_losses;
};

PretrainResult pretrain(const TrainConfig& config);
// Writes text.ckpt, flow.ckpt, pretrain_data.jsonl and report.json.
void save_pretrained(const std::filesystem::path& dir, const PretrainResult& result,
                     const TrainConfig& config);
// Throws CheckpointError when checkpoints are missing or do not match the
// configured architecture.
Policies load_pretrained(const std::filesystem::path& dir, const TrainConfig& config);
// Current policies stored in a run's state.ckpt.
Policies load_run_policies(const std::filesystem::path& state, const TrainConfig& config);

struct TrainOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  // Stop (as if interrupted) after this update, having written its checkpoint.
  std::optional<int> stop_after;
  std::string config_text;  // verbatim config file contents, for the manifest
  std::string command;
  // Pretrained policies to use instead of loading config.pretrain_dir.
  const Policies* pretrained = nullptr;
  std::function<void(const MetricsRow&)> on_row;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  Policies final_policies;
  bool completed = false;
};

// Output directory layout: manifest.json (written once, before training),
// metrics.csv, timing.csv, groups.jsonl, rollouts.jsonl (optional),
// state.ckpt (latest), status.json (end of run).
TrainResult train(const TrainConfig& config, const TrainOptions& options);

int thread_count();

}  // namespace unigrpo::trainer
