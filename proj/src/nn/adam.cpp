// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/nn/adam.hpp"

#include <cmath>

#include "unigrpo/common.hpp"

namespace unigrpo::nn {

AdamState::AdamState(std::shared_ptr<const Layout> layout, AdamConfig cfg)
    : config(cfg), first_moment(layout), second_moment(layout) {}

void adam_step(ParamSet& params, const GradSet& grads, AdamState& state) {
  require_congruent(params.layout(), grads.layout(), "adam_step");
  require_congruent(params.layout(), state.first_moment.layout(), "adam_step state");
  if (auto bad = grads.first_non_finite_block()) {
    throw NumericError("adam_step rejected: non-finite gradient in block '" + *bad + "'");
  }

  const auto& c = state.config;
  const int64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));

  auto p = params.values();
  auto g = grads.values();
  auto m = state.first_moment.values();
  auto v = state.second_moment.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
  state.step = t;
}

}  // namespace unigrpo::nn
