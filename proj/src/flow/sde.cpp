// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/flow/sde.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace unigrpo::flow {

Schedule timestep_schedule(int n_steps, double shift) {
  if (n_steps < 1) throw ConfigError("timestep schedule needs at least one step");
  if (!(shift >= 1.0)) throw ConfigError("timestep shift must be >= 1");
  Schedule s;
  s.shift = shift;
  s.times.resize(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k) {
    const double u = 1.0 - static_cast<double>(k) / n_steps;
    s.times[k] = shift * u / (1.0 + (shift - 1.0) * u);
  }
  s.times.front() = 1.0;
  s.times.back() = 0.0;
  return s;
}

double noise_sigma(double level, double t) { return level * std::sqrt(t); }

double mean_velocity_coeff(double t, double sigma) {
  return 1.0 + sigma * sigma * (1.0 - t) / (2.0 * t);
}

Vec2 sde_mean(const Vec2& x, const Vec2& v, double t, double dt, double sigma) {
  if (sigma > 0.0 && !(t > 0.0)) {
    throw NumericError("SDE step requested at t = " + std::to_string(t) +
                       " where the score term is singular");
  }
  if (sigma == 0.0) return ode_step(x, v, dt);
  const double c = sigma * sigma / (2.0 * t);
  return {x[0] - dt * (v[0] + c * (x[0] + (1.0 - t) * v[0])),
          x[1] - dt * (v[1] + c * (x[1] + (1.0 - t) * v[1]))};
}

Vec2 ode_step(const Vec2& x, const Vec2& v, double dt) {
  return {x[0] - dt * v[0], x[1] - dt * v[1]};
}

FlowStep sde_step(const Vec2& x, const Vec2& v, double t, double dt, double sigma, Rng& rng) {
  if (!(t > 0.0)) throw NumericError("SDE step requested at t = 0");
  FlowStep st;
  st.t = t;
  st.dt = dt;
  st.sigma = sigma;
  st.x = x;
  st.v = v;
  st.sde = true;
  st.mu = sde_mean(x, v, t, dt, sigma);
  st.s = sigma * std::sqrt(dt);
  const double e0 = rng.normal();
  const double e1 = rng.normal();
  if (st.s > 0.0) {
    st.x_next = {st.mu[0] + st.s * e0, st.mu[1] + st.s * e1};
    st.logprob = transition_logprob(st.mu, st.s, st.x_next);
  } else {
    st.x_next = st.mu;
  }
  return st;
}

double transition_logprob(const Vec2& mu, double s, const Vec2& x_next) {
  if (!(s > 0.0)) throw ConfigError("transition std must be positive");
  return -std::log(2.0 * std::numbers::pi * s * s) - squared_norm(x_next - mu) / (2.0 * s * s);
}

double transition_logprob_1d(double mu, double s, double x_next) {
  if (!(s > 0.0)) throw ConfigError("transition std must be positive");
  const double d = x_next - mu;
  return -0.5 * std::log(2.0 * std::numbers::pi * s * s) - d * d / (2.0 * s * s);
}

double ratio_norm_log(double log_r, const Vec2& delta_mu, double sigma, double dt) {
  const double s = sigma * std::sqrt(dt);
  if (!(s > 0.0)) throw NumericError("ratio normalization needs sigma * sqrt(dt) > 0");
  return s * (log_r + squared_norm(delta_mu) / (2.0 * s * s));
}

double ratio_norm(double log_r, const Vec2& delta_mu, double sigma, double dt) {
  return std::exp(ratio_norm_log(log_r, delta_mu, sigma, dt));
}

double latent_kl(const Vec2& mu_theta, const Vec2& mu_ref, double sigma, double dt) {
  const double var = sigma * sigma * dt;
  if (!(var > 0.0)) throw NumericError("latent KL needs a positive transition variance");
  return squared_norm(mu_theta - mu_ref) / (2.0 * var);
}

double velocity_mse(const Vec2& v_theta, const Vec2& v_ref) {
  return squared_norm(v_theta - v_ref);
}

Vec2 cfg_velocity(const Vec2& v_cond, const Vec2& v_uncond, double scale) {
  return {v_uncond[0] + scale * (v_cond[0] - v_uncond[0]),
          v_uncond[1] + scale * (v_cond[1] - v_uncond[1])};
}

}  // namespace unigrpo::flow
