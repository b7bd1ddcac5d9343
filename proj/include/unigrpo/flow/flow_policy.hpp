// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "unigrpo/env/task.hpp"
#include "unigrpo/flow/sde.hpp"
#include "unigrpo/nn/mlp.hpp"
#include "unigrpo/nn/param_set.hpp"
#include "unigrpo/nn/tape.hpp"
#include "unigrpo/rng.hpp"

namespace unigrpo::flow {

inline constexpr int kTimeFeatures = 8;

// Velocity network over [x, sinusoidal time features, condition]. The
// condition is the mean of learned embeddings of the reasoning tokens; an
// empty token list selects a learned null condition (used for guidance).
struct FlowArch {
  int cond_dim = 8;
  int hidden = 64;

  int input_size() const { return 2 + kTimeFeatures + cond_dim; }
};

nn::MlpSpec flow_mlp_spec(const FlowArch& arch);
std::shared_ptr<const nn::Layout> flow_layout(const FlowArch& arch);
// Condition embeddings ~ N(0, 0.5^2); the output layer starts at zero.
nn::ParamSet init_flow_params(const FlowArch& arch, Rng& rng);

std::array<double, kTimeFeatures> time_features(double t);

// Records v_theta(x, t, condition) on `tape`; returns the 2-vector node.
nn::NodeId record_velocity(nn::Tape& tape, const FlowArch& arch, const Vec2& x, double t,
                           std::span<const int> condition);
Vec2 velocity(const nn::ParamSet& params, const FlowArch& arch, const Vec2& x, double t,
              std::span<const int> condition);

// A velocity field that counts its network evaluations.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual Vec2 operator()(const Vec2& x, double t) = 0;
  int64_t evaluations() const { return evaluations_; }

 protected:
  int64_t evaluations_ = 0;
};

// The policy under a fixed condition. With a guidance scale every call costs
// two network evaluations (conditional and null), combined by cfg_velocity.
class PolicyField : public VelocityField {
 public:
  PolicyField(const nn::ParamSet& params, const FlowArch& arch, std::vector<int> condition,
              std::optional<double> guidance = std::nullopt);
  Vec2 operator()(const Vec2& x, double t) override;

 private:
  const nn::ParamSet& params_;
  FlowArch arch_;
  std::vector<int> condition_;
  std::optional<double> guidance_;
};

// Exact marginal velocity for data N(mean, std^2 I) and noise N(0, I):
//   v*(x, t) = -m + (t - (1-t) s^2) / ((1-t)^2 s^2 + t^2) * (x - (1-t) m).
Vec2 analytic_gaussian_velocity(const Vec2& mean, double std, const Vec2& x, double t);

class GaussianField : public VelocityField {
 public:
  GaussianField(Vec2 mean, double std) : mean_(mean), std_(std) {}
  Vec2 operator()(const Vec2& x, double t) override;

 private:
  Vec2 mean_;
  double std_;
};

struct SdeWindow {
  int start = 0;
  int size = 0;
};

struct FlowTrajectory {
  std::vector<int> condition;
  std::optional<double> guidance;  // set when the rollout used guidance
  Schedule schedule;
  SdeWindow window;
  double sigma_level = 0.0;
  Vec2 x1{};
  // Only the windowed (stochastic) steps, in order.
  std::vector<FlowStep> steps;
  Vec2 x0{};
  int64_t velocity_evals = 0;
};

// Throws ConfigError unless the window lies inside the schedule and
// avoids t = 0.
void validate_window(const Schedule& schedule, SdeWindow window);
// Uniform start among the positions where a window of `size` fits inside
// indices [range_lo, range_hi].
int sample_window_start(Rng& rng, int range_lo, int range_hi, int size);

// Steps inside the window use sde_step with sigma_t = sigma_level sqrt(t);
// all others are Euler ODE steps. x1 is drawn from rng first.
FlowTrajectory hybrid_rollout(VelocityField& field, const Schedule& schedule, SdeWindow window,
                              double sigma_level, Rng& rng);
// Deterministic Euler integration from x1.
Vec2 ode_sample(VelocityField& field, const Schedule& schedule, const Vec2& x1);

struct FmSample {
  Vec2 x0{};
  std::vector<int> condition;  // empty for the null condition
  double t = 1.0;
  Vec2 x1{};
};

struct FmLoss {
  double loss = 0.0;
  nn::GradSet grads;  // d loss / d theta
};

// Mean over the batch of |v_theta(x_t, t, c) - (x1 - x0)|^2 with
// x_t = (1 - t) x0 + t x1.
FmLoss fm_loss(const nn::ParamSet& params, const FlowArch& arch, std::span<const FmSample> batch);

struct FlowPretrainConfig {
  int steps = 3000;
  int batch_size = 64;
  double lr = 3e-3;
  // Final learning rate as a fraction of lr (cosine decay).
  double lr_floor = 0.05;
  // Probability of training on the null condition, for guidance.
  double p_uncond = 0.1;
  int eval_steps = 20;
  double eval_shift = 3.0;
  int eval_samples = 200;
};

struct FlowPretrainReport {
  nn::ParamSet params;
  // Mean loss over consecutive blocks of 100 steps.
  std::vector<double> loss_curve;
  // Fraction of ODE samples landing in the correct quadrant, per attribute tuple.
  std::array<double, env::kAttributeTuples> quadrant_accuracy{};
  double min_quadrant_accuracy = 0.0;
};

FlowPretrainReport pretrain_flow(std::span<const env::FlowPair> data, const FlowArch& arch,
                                 const FlowPretrainConfig& config, Rng& rng);

double quadrant_accuracy(const nn::ParamSet& params, const FlowArch& arch,
                         const env::Attributes& attributes, const Schedule& schedule,
                         int samples, Rng& rng);

}  // namespace unigrpo::flow
