// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "unigrpo/nn/param_set.hpp"
#include "unigrpo/nn/tape.hpp"
#include "unigrpo/rng.hpp"

namespace unigrpo::nn {

enum class Activation { kTanh, kSilu };

// Dense stack: sizes = {in, hidden..., out}. Hidden layers use `activation`,
// the output layer is linear. Blocks are named "<prefix>.l<i>.w" / ".b".
struct MlpSpec {
  std::string prefix;
  std::vector<int> sizes;
  Activation activation = Activation::kTanh;

  int inputs() const { return sizes.front(); }
  int outputs() const { return sizes.back(); }
  std::string weight_name(int layer) const;
  std::string bias_name(int layer) const;
};

void add_mlp_blocks(Layout::Builder& builder, const MlpSpec& spec);

// Scaled-uniform (Glorot) weights, zero biases. With zero_output_layer the
// last layer starts at exactly zero.
void init_mlp(ParamSet& params, const MlpSpec& spec, Rng& rng, bool zero_output_layer);

// Records the stack on an existing tape; returns the output node.
NodeId record_mlp(Tape& tape, const MlpSpec& spec, NodeId input);

struct MlpForward {
  std::vector<double> output;
  Tape tape;
  NodeId input = -1;
  NodeId output_node = -1;
};

MlpForward forward_mlp(const ParamSet& params, std::span<const double> input,
                       const MlpSpec& spec);

}  // namespace unigrpo::nn
