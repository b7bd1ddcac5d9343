// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>

#include "unigrpo/nn/param_set.hpp"

namespace unigrpo::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  explicit AdamState(std::shared_ptr<const Layout> layout, AdamConfig config = {});

  AdamConfig config;
  BlockVector first_moment;
  BlockVector second_moment;
  int64_t step = 0;
};

// Bias-corrected Adam descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
// A non-finite gradient rejects the step (params and state untouched) and
// throws NumericError naming the block.
void adam_step(ParamSet& params, const GradSet& grads, AdamState& state);

}  // namespace unigrpo::nn
