// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/nn/grad_check.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace unigrpo::nn {

FiniteDiffReport finite_diff_check(const ScalarFn& loss, const ParamSet& params,
                                   const GradSet& analytic, int probes, double tol, Rng& rng,
                                   double step) {
  require_congruent(params.layout(), analytic.layout(), "finite_diff_check");
  FiniteDiffReport report;
  report.tolerance = tol;

  const double f0 = loss(params);
  const double f1 = loss(params);
  if (std::bit_cast<uint64_t>(f0) != std::bit_cast<uint64_t>(f1)) {
    report.aborted = true;
    return report;
  }

  const auto& blocks = params.layout().blocks();
  ParamSet probe = params;
  auto values = probe.values();
  auto grad = analytic.values();
  for (int p = 0; p < probes; ++p) {
    const std::size_t i = rng.below(values.size());
    const double x = values[i];
    values[i] = x + step;
    const double up = loss(probe);
    values[i] = x - step;
    const double down = loss(probe);
    values[i] = x;

    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(grad[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(grad[i] - numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.probes;
    if (!(rel <= tol)) {
      auto it = std::upper_bound(blocks.begin(), blocks.end(), i,
                                 [](std::size_t idx, const BlockInfo& b) { return idx < b.offset; });
      const std::string& name = std::prev(it)->name;
      if (std::find(report.failing_blocks.begin(), report.failing_blocks.end(), name) ==
          report.failing_blocks.end()) {
        report.failing_blocks.push_back(name);
      }
    }
  }
  return report;
}

}  // namespace unigrpo::nn
