// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "unigrpo/nn/param_set.hpp"
#include "unigrpo/rng.hpp"

namespace unigrpo::nn {

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  int probes = 0;
  std::vector<std::string> failing_blocks;
  // Set when two evaluations at identical params disagreed.
  bool aborted = false;
  double tolerance = 0.0;

  bool passed() const { return !aborted && failing_blocks.empty() && probes > 0; }
};

using ScalarFn = std::function<double(const ParamSet&)>;

// Compares `analytic` against central differences at `probes` coordinates
// drawn uniformly from the whole parameter vector. Relative error uses the
// denominator max(|analytic|, |numeric|, 1e-8).
FiniteDiffReport finite_diff_check(const ScalarFn& loss, const ParamSet& params,
                                   const GradSet& analytic, int probes, double tol, Rng& rng,
                                   double step = 1e-5);

}  // namespace unigrpo::nn
