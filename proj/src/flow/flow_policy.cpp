// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/flow/flow_policy.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "unigrpo/nn/adam.hpp"

namespace unigrpo::flow {
namespace {

constexpr const char* kCondEmb = "flow.cond_emb";
constexpr const char* kNullCond = "flow.null_cond";

constexpr std::array<double, kTimeFeatures / 2> kFrequencies = {
    0.5 * std::numbers::pi, std::numbers::pi, 2.0 * std::numbers::pi, 4.0 * std::numbers::pi};

}  // namespace

nn::MlpSpec flow_mlp_spec(const FlowArch& arch) {
  return {"flow.mlp", {arch.input_size(), arch.hidden, arch.hidden, 2}, nn::Activation::kTanh};
}

std::shared_ptr<const nn::Layout> flow_layout(const FlowArch& arch) {
  nn::Layout::Builder builder;
  builder.add(kCondEmb, env::kReasonVocab, arch.cond_dim).add(kNullCond, 1, arch.cond_dim);
  nn::add_mlp_blocks(builder, flow_mlp_spec(arch));
  return std::move(builder).build();
}

nn::ParamSet init_flow_params(const FlowArch& arch, Rng& rng) {
  nn::ParamSet params(flow_layout(arch));
  for (const char* name : {kCondEmb, kNullCond}) {
    for (double& v : params.block(name)) v = 0.5 * rng.normal();
  }
  nn::init_mlp(params, flow_mlp_spec(arch), rng, /*zero_output_layer=*/true);
  return params;
}

std::array<double, kTimeFeatures> time_features(double t) {
  std::array<double, kTimeFeatures> f{};
  for (std::size_t j = 0; j < kFrequencies.size(); ++j) {
    f[2 * j] = std::sin(kFrequencies[j] * t);
    f[2 * j + 1] = std::cos(kFrequencies[j] * t);
  }
  return f;
}

nn::NodeId record_velocity(nn::Tape& tape, const FlowArch& arch, const Vec2& x, double t,
                           std::span<const int> condition) {
  const auto& layout = tape.params().layout();
  const auto tf = time_features(t);
  nn::NodeId cond;
  if (condition.empty()) {
    cond = tape.embedding(layout.index(kNullCond), 0);
  } else {
    const int table = layout.index(kCondEmb);
    std::vector<nn::NodeId> rows;
    rows.reserve(condition.size());
    for (int token : condition) rows.push_back(tape.embedding(table, token));
    cond = rows.size() == 1 ? rows[0] : tape.mean(rows);
  }
  const nn::NodeId parts[] = {tape.input(x), tape.input(tf), cond};
  return nn::record_mlp(tape, flow_mlp_spec(arch), tape.concat(parts));
}

Vec2 velocity(const nn::ParamSet& params, const FlowArch& arch, const Vec2& x, double t,
              std::span<const int> condition) {
  nn::Tape tape(params);
  const auto v = tape.value(record_velocity(tape, arch, x, t, condition));
  return {v[0], v[1]};
}

PolicyField::PolicyField(const nn::ParamSet& params, const FlowArch& arch,
                         std::vector<int> condition, std::optional<double> guidance)
    : params_(params), arch_(arch), condition_(std::move(condition)), guidance_(guidance) {}

Vec2 PolicyField::operator()(const Vec2& x, double t) {
  const Vec2 v_cond = velocity(params_, arch_, x, t, condition_);
  ++evaluations_;
  if (!guidance_) return v_cond;
  const Vec2 v_uncond = velocity(params_, arch_, x, t, {});
  ++evaluations_;
  return cfg_velocity(v_cond, v_uncond, *guidance_);
}

Vec2 analytic_gaussian_velocity(const Vec2& mean, double std, const Vec2& x, double t) {
  const double s2 = std * std;
  const double a2 = (1.0 - t) * (1.0 - t) * s2 + t * t;
  const double gain = (t - (1.0 - t) * s2) / a2;
  return {-mean[0] + gain * (x[0] - (1.0 - t) * mean[0]),
          -mean[1] + gain * (x[1] - (1.0 - t) * mean[1])};
}

Vec2 GaussianField::operator()(const Vec2& x, double t) {
  ++evaluations_;
  return analytic_gaussian_velocity(mean_, std_, x, t);
}

void validate_window(const Schedule& schedule, SdeWindow window) {
  if (window.size < 0 || window.start < 0 || window.start + window.size > schedule.steps()) {
    throw ConfigError("SDE window [" + std::to_string(window.start) + ", " +
                      std::to_string(window.start + window.size) + ") does not fit a " +
                      std::to_string(schedule.steps()) + "-step schedule");
  }
  for (int k = window.start; k < window.start + window.size; ++k) {
    if (!(schedule.t(k) > 0.0)) throw ConfigError("SDE window reaches t = 0");
  }
}

int sample_window_start(Rng& rng, int range_lo, int range_hi, int size) {
  const int starts = range_hi - range_lo + 2 - size;
  if (range_lo < 0 || starts < 1) {
    throw ConfigError("SDE window of size " + std::to_string(size) + " does not fit in [" +
                      std::to_string(range_lo) + ", " + std::to_string(range_hi) + "]");
  }
  return range_lo + static_cast<int>(rng.below(static_cast<uint64_t>(starts)));
}

FlowTrajectory hybrid_rollout(VelocityField& field, const Schedule& schedule, SdeWindow window,
                              double sigma_level, Rng& rng) {
  validate_window(schedule, window);
  FlowTrajectory traj;
  traj.schedule = schedule;
  traj.window = window;
  traj.sigma_level = sigma_level;
  const int64_t evals_before = field.evaluations();
  traj.x1 = {rng.normal(), rng.normal()};
  Vec2 x = traj.x1;
  for (int k = 0; k < schedule.steps(); ++k) {
    const double t = schedule.t(k);
    const double dt = schedule.dt(k);
    const Vec2 v = field(x, t);
    if (k >= window.start && k < window.start + window.size) {
      FlowStep st = sde_step(x, v, t, dt, noise_sigma(sigma_level, t), rng);
      st.index = k;
      x = st.x_next;
      traj.steps.push_back(st);
    } else {
      x = ode_step(x, v, dt);
    }
  }
  traj.x0 = x;
  traj.velocity_evals = field.evaluations() - evals_before;
  return traj;
}

Vec2 ode_sample(VelocityField& field, const Schedule& schedule, const Vec2& x1) {
  Vec2 x = x1;
  for (int k = 0; k < schedule.steps(); ++k) x = ode_step(x, field(x, schedule.t(k)), schedule.dt(k));
  return x;
}

FmLoss fm_loss(const nn::ParamSet& params, const FlowArch& arch, std::span<const FmSample> batch) {
  FmLoss out{0.0, nn::GradSet(params.layout_ptr())};
  if (batch.empty()) throw ConfigError("flow-matching loss needs a nonempty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const Vec2 xt = (1.0 - s.t) * s.x0 + s.t * s.x1;
    const Vec2 target = s.x1 - s.x0;
    nn::Tape tape(params);
    const nn::NodeId v = record_velocity(tape, arch, xt, s.t, s.condition);
    const auto vv = tape.value(v);
    const Vec2 diff{vv[0] - target[0], vv[1] - target[1]};
    out.loss += scale * squared_norm(diff);
    const double seed[2] = {2.0 * scale * diff[0], 2.0 * scale * diff[1]};
    const nn::Seed seeds[] = {{v, seed}};
    tape.backward(seeds, out.grads);
  }
  return out;
}

double quadrant_accuracy(const nn::ParamSet& params, const FlowArch& arch,
                         const env::Attributes& attributes, const Schedule& schedule,
                         int samples, Rng& rng) {
  const env::TaskConfig geometry;
  const Vec2 center = env::target_spec(attributes, geometry).mean;
  PolicyField field(params, arch, env::canonical_trace(attributes));
  int hits = 0;
  for (int i = 0; i < samples; ++i) {
    const Vec2 x0 = ode_sample(field, schedule, {rng.normal(), rng.normal()});
    hits += x0[0] * center[0] > 0.0 && x0[1] * center[1] > 0.0;
  }
  return static_cast<double>(hits) / samples;
}

FlowPretrainReport pretrain_flow(std::span<const env::FlowPair> data, const FlowArch& arch,
                                 const FlowPretrainConfig& config, Rng& rng) {
  if (data.empty()) throw ConfigError("flow pretraining needs a nonempty dataset");
  FlowPretrainReport report{init_flow_params(arch, rng), {}, {}, 0.0};
  nn::AdamState adam(report.params.layout_ptr(), nn::AdamConfig{config.lr});
  std::vector<FmSample> batch(config.batch_size);
  double block_loss = 0.0;
  int block_count = 0;
  for (int step = 0; step < config.steps; ++step) {
    for (auto& s : batch) {
      const auto& pair = data[rng.below(data.size())];
      s.x0 = pair.x0;
      if (rng.uniform() < config.p_uncond) {
        s.condition.clear();
      } else {
        s.condition = pair.condition;
      }
      s.t = rng.uniform_open();
      s.x1 = {rng.normal(), rng.normal()};
    }
    const double progress = static_cast<double>(step) / config.steps;
    adam.config.lr = config.lr * (config.lr_floor + (1.0 - config.lr_floor) * 0.5 *
                                                        (1.0 + std::cos(std::numbers::pi * progress)));
    auto loss = fm_loss(report.params, arch, batch);
    nn::adam_step(report.params, loss.grads, adam);
    block_loss += loss.loss;
    if (++block_count == 100 || step + 1 == config.steps) {
      report.loss_curve.push_back(block_loss / block_count);
      block_loss = 0.0;
      block_count = 0;
    }
  }

  const Schedule schedule = timestep_schedule(config.eval_steps, config.eval_shift);
  report.min_quadrant_accuracy = 1.0;
  for (int i = 0; i < env::kAttributeTuples; ++i) {
    auto eval_rng = Rng::stream(0, "flow-quadrant-eval", {static_cast<uint64_t>(i)});
    const double acc = quadrant_accuracy(report.params, arch, env::Attributes::from_index(i),
                                         schedule, config.eval_samples, eval_rng);
    report.quadrant_accuracy[i] = acc;
    report.min_quadrant_accuracy = std::min(report.min_quadrant_accuracy, acc);
  }
  return report;
}

}  // namespace unigrpo::flow
