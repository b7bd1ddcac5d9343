// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "unigrpo/common.hpp"
#include "unigrpo/rng.hpp"

namespace unigrpo::flow {

// Time runs from t = 1 (pure noise) to t = 0 (data) along the linear path
// x_t = (1 - t) x_0 + t x_1; the network predicts d x_t / d t = x_1 - x_0, so
// a denoising step moves against the velocity.

struct Schedule {
  // times[k] is the start of step k; times.back() == 0.
  std::vector<double> times;
  double shift = 1.0;

  int steps() const { return static_cast<int>(times.size()) - 1; }
  double t(int k) const { return times[k]; }
  double dt(int k) const { return times[k] - times[k + 1]; }
  bool operator==(const Schedule&) const = default;
};

// u runs uniformly from 1 to 0 and is mapped by t = shift u / (1 + (shift-1) u).
Schedule timestep_schedule(int n_steps, double shift);

// sigma_t = level * sqrt(t).
double noise_sigma(double level, double t);

// Drift coefficient on v inside the SDE mean: d mu / d v = -dt * c.
double mean_velocity_coeff(double t, double sigma);

// Transition mean for one denoising step from time t to t - dt:
//   mu = x - dt * [v + sigma^2 / (2 t) (x + (1 - t) v)].
// With sigma == 0 this is exactly ode_step. Throws NumericError at t <= 0
// when sigma > 0 (the score term is singular).
Vec2 sde_mean(const Vec2& x, const Vec2& v, double t, double dt, double sigma);
Vec2 ode_step(const Vec2& x, const Vec2& v, double dt);

struct FlowStep {
  int index = 0;
  double t = 0.0;
  double dt = 0.0;
  double sigma = 0.0;
  Vec2 x{};       // latent at t
  Vec2 x_next{};  // latent at t - dt
  Vec2 mu{};
  double s = 0.0;  // transition std sigma * sqrt(dt); 0 for ODE steps
  Vec2 v{};
  double logprob = 0.0;  // log density of x_next under N(mu, s^2 I); 0 when s == 0
  bool sde = false;
};

// One stochastic step. Draws two normals from rng even when sigma == 0 so
// the noise stream does not depend on the noise level.
FlowStep sde_step(const Vec2& x, const Vec2& v, double t, double dt, double sigma, Rng& rng);

// Isotropic Gaussian log density of x_next under N(mu, s^2 I), in two
// dimensions and in one. Throws ConfigError for s <= 0.
double transition_logprob(const Vec2& mu, double s, const Vec2& x_next);
double transition_logprob_1d(double mu, double s, double x_next);

// log r~ = s * (log r + |d_mu|^2 / (2 s^2)), s = sigma sqrt(dt).
double ratio_norm_log(double log_r, const Vec2& delta_mu, double sigma, double dt);
double ratio_norm(double log_r, const Vec2& delta_mu, double sigma, double dt);

// |mu_theta - mu_ref|^2 / (2 sigma^2 dt).
double latent_kl(const Vec2& mu_theta, const Vec2& mu_ref, double sigma, double dt);
double velocity_mse(const Vec2& v_theta, const Vec2& v_ref);
Vec2 cfg_velocity(const Vec2& v_cond, const Vec2& v_uncond, double scale);

}  // namespace unigrpo::flow
