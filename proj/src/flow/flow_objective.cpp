// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/flow/flow_objective.hpp"

#include <cmath>
#include <string>

#include "unigrpo/ppo.hpp"

namespace unigrpo::flow {
namespace {

struct VelocityNodes {
  nn::NodeId cond = -1;
  nn::NodeId uncond = -1;  // only with guidance
  Vec2 v{};
};

VelocityNodes record_policy_velocity(nn::Tape& tape, const FlowArch& arch,
                                     const FlowTrajectory& traj, const FlowStep& st) {
  VelocityNodes out;
  out.cond = record_velocity(tape, arch, st.x, st.t, traj.condition);
  const auto vc = tape.value(out.cond);
  out.v = {vc[0], vc[1]};
  if (traj.guidance) {
    out.uncond = record_velocity(tape, arch, st.x, st.t, {});
    const auto vu = tape.value(out.uncond);
    out.v = cfg_velocity(out.v, {vu[0], vu[1]}, *traj.guidance);
  }
  return out;
}

Vec2 reference_velocity(const nn::ParamSet& ref, const FlowArch& arch, const FlowTrajectory& traj,
                        const FlowStep& st) {
  const Vec2 vc = velocity(ref, arch, st.x, st.t, traj.condition);
  if (!traj.guidance) return vc;
  return cfg_velocity(vc, velocity(ref, arch, st.x, st.t, {}), *traj.guidance);
}

}  // namespace

std::string_view reg_mode_name(RegMode mode) {
  switch (mode) {
    case RegMode::kNone:
      return "none";
    case RegMode::kLatentKl:
      return "latent-kl";
    case RegMode::kVelocityMse:
      return "velocity-mse";
  }
  return "none";
}

RegMode parse_reg_mode(std::string_view name) {
  for (RegMode m : {RegMode::kNone, RegMode::kLatentKl, RegMode::kVelocityMse}) {
    if (reg_mode_name(m) == name) return m;
  }
  throw ConfigError("unknown regularizer '" + std::string(name) +
                    "' (expected none, latent-kl or velocity-mse)");
}

FlowLossResult flow_surrogate(const nn::ParamSet& params, const FlowArch& arch,
                              std::span<const FlowTrajectory> trajectories,
                              std::span<const double> advantages, const FlowLossConfig& config,
                              const nn::ParamSet* ref) {
  if (trajectories.size() != advantages.size()) {
    throw ConfigError("flow surrogate: " + std::to_string(trajectories.size()) +
                      " trajectories but " + std::to_string(advantages.size()) + " advantages");
  }
  if (config.reg != RegMode::kNone && ref == nullptr) {
    throw ConfigError("flow surrogate: regularizer set without a reference policy");
  }
  if (config.reg_weight < 0.0) throw ConfigError("regularizer weight must be >= 0");
  FlowLossResult out{0.0, nn::GradSet(params.layout_ptr()), {}};
  if (trajectories.empty()) return out;
  for (const auto& traj : trajectories) {
    if (!(traj.schedule == trajectories.front().schedule)) {
      throw ConfigError("flow surrogate: trajectories use different timestep schedules");
    }
  }

  const double inv_n = 1.0 / static_cast<double>(trajectories.size());
  double ratio_sum = 0.0;
  double reg_sum = 0.0;
  double drift_sum = 0.0;
  double reg_objective = 0.0;
  int clipped = 0;
  std::vector<std::array<double, 2>> seed_cond;
  std::vector<std::array<double, 2>> seed_uncond;
  std::vector<nn::Seed> seeds;

  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& traj = trajectories[i];
    if (traj.steps.empty()) continue;
    const double w = inv_n / static_cast<double>(traj.steps.size());
    nn::Tape tape(params);
    seed_cond.assign(traj.steps.size(), {0.0, 0.0});
    seed_uncond.assign(traj.steps.size(), {0.0, 0.0});
    seeds.clear();

    for (std::size_t j = 0; j < traj.steps.size(); ++j) {
      const FlowStep& st = traj.steps[j];
      const VelocityNodes nodes = record_policy_velocity(tape, arch, traj, st);
      const Vec2 mu = sde_mean(st.x, nodes.v, st.t, st.dt, st.sigma);
      const double log_r = transition_logprob(mu, st.s, st.x_next) - st.logprob;
      const double log_rn = ratio_norm_log(log_r, st.mu - mu, st.sigma, st.dt);
      if (!std::isfinite(log_rn)) {
        throw NumericError("non-finite flow ratio at trajectory " + std::to_string(i) +
                           ", step " + std::to_string(st.index));
      }
      const auto term = clipped_term(log_rn, advantages[i], config.clip_eps);
      out.stats.surrogate += w * term.value;
      const double r = std::exp(log_rn);
      ratio_sum += r;
      out.stats.max_ratio = std::max(out.stats.max_ratio, r);
      clipped += term.clipped;

      // d log r~ / d mu_theta = (x' - mu_old) / s, and d mu / d v = -dt c I.
      const double dmu_dv = -st.dt * mean_velocity_coeff(st.t, st.sigma);
      Vec2 g{0.0, 0.0};
      for (int d = 0; d < 2; ++d) {
        g[d] = w * term.dlogr * (st.x_next[d] - st.mu[d]) / st.s * dmu_dv;
      }

      if (ref != nullptr) {
        const Vec2 v_ref = reference_velocity(*ref, arch, traj, st);
        drift_sum += velocity_mse(nodes.v, v_ref);
        double reg = 0.0;
        if (config.reg == RegMode::kLatentKl) {
          const Vec2 mu_ref = sde_mean(st.x, v_ref, st.t, st.dt, st.sigma);
          reg = latent_kl(mu, mu_ref, st.sigma, st.dt);
          for (int d = 0; d < 2; ++d) {
            g[d] -= config.reg_weight * w * (mu[d] - mu_ref[d]) / (st.s * st.s) * dmu_dv;
          }
        } else if (config.reg == RegMode::kVelocityMse) {
          reg = velocity_mse(nodes.v, v_ref);
          for (int d = 0; d < 2; ++d) {
            g[d] -= config.reg_weight * w * 2.0 * (nodes.v[d] - v_ref[d]);
          }
        }
        reg_sum += reg;
        reg_objective += w * reg;
      }

      if (traj.guidance) {
        const double scale = *traj.guidance;
        seed_cond[j] = {scale * g[0], scale * g[1]};
        seed_uncond[j] = {(1.0 - scale) * g[0], (1.0 - scale) * g[1]};
        seeds.push_back({nodes.cond, seed_cond[j]});
        seeds.push_back({nodes.uncond, seed_uncond[j]});
      } else {
        seed_cond[j] = {g[0], g[1]};
        seeds.push_back({nodes.cond, seed_cond[j]});
      }
      ++out.stats.steps;
    }
    tape.backward(seeds, out.grads);
    out.grads.note_accumulation();
  }

  out.objective = out.stats.surrogate - config.reg_weight * reg_objective;
  if (out.stats.steps > 0) {
    out.stats.mean_ratio = ratio_sum / out.stats.steps;
    out.stats.clip_fraction = static_cast<double>(clipped) / out.stats.steps;
    out.stats.regularizer = reg_sum / out.stats.steps;
    out.stats.velocity_drift = drift_sum / out.stats.steps;
  }
  return out;
}

}  // namespace unigrpo::flow
