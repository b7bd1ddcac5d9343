// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>

namespace unigrpo {

// min(r A, clip(r, 1-eps, 1+eps) A) and its derivative with respect to log r.
struct ClippedTerm {
  double value = 0.0;
  double dlogr = 0.0;
  bool clipped = false;  // r outside [1-eps, 1+eps]
};

inline ClippedTerm clipped_term(double log_ratio, double advantage, double eps) {
  const double r = std::exp(log_ratio);
  const double unclipped = r * advantage;
  const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps) * advantage;
  ClippedTerm t;
  t.clipped = r < 1.0 - eps || r > 1.0 + eps;
  if (unclipped <= clipped) {
    t.value = unclipped;
    t.dlogr = unclipped;
  } else {
    t.value = clipped;
  }
  return t;
}

}  // namespace unigrpo
