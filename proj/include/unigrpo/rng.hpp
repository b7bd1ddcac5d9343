// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace unigrpo {

// Philox4x32-10 counter-based generator.
//
// A stream is identified by a 64-bit key derived from (seed, tag, indices),
// so a rollout worker can rebuild exactly the stream it needs from the
// coordinates of its work item, independent of scheduling order.
class Rng {
 public:
  explicit Rng(uint64_t key = 0);

  static Rng stream(uint64_t seed, std::string_view tag,
                    std::initializer_list<uint64_t> indices = {});

  uint32_t next_u32();
  uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1).
  double uniform_open();
  // Standard normal (Box-Muller, one draw per call).
  double normal();
  // Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n);

  // Raw block function, exposed for known-answer tests.
  static std::array<uint32_t, 4> philox(std::array<uint32_t, 4> counter,
                                        std::array<uint32_t, 2> key);

 private:
  void refill();

  std::array<uint32_t, 2> key_{};
  std::array<uint32_t, 4> counter_{};
  std::array<uint32_t, 4> block_{};
  int index_ = 4;
};

// splitmix64 finalizer, used for stream-key derivation and hashing.
uint64_t mix64(uint64_t x);

}  // namespace unigrpo
