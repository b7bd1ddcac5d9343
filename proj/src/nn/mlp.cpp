// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/nn/mlp.hpp"

#include <cmath>

#include "unigrpo/common.hpp"

namespace unigrpo::nn {

std::string MlpSpec::weight_name(int layer) const {
  return prefix + ".l" + std::to_string(layer) + ".w";
}

std::string MlpSpec::bias_name(int layer) const {
  return prefix + ".l" + std::to_string(layer) + ".b";
}

void add_mlp_blocks(Layout::Builder& builder, const MlpSpec& spec) {
  if (spec.sizes.size() < 2) throw ConfigError("mlp '" + spec.prefix + "' needs >= 2 sizes");
  for (std::size_t l = 0; l + 1 < spec.sizes.size(); ++l) {
    const int layer = static_cast<int>(l);
    builder.add(spec.weight_name(layer), spec.sizes[l + 1], spec.sizes[l]);
    builder.add(spec.bias_name(layer), spec.sizes[l + 1], 1);
  }
}

void init_mlp(ParamSet& params, const MlpSpec& spec, Rng& rng, bool zero_output_layer) {
  const int layers = static_cast<int>(spec.sizes.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    auto w = params.block(spec.weight_name(l));
    auto b = params.block(spec.bias_name(l));
    for (double& v : b) v = 0.0;
    if (zero_output_layer && l == layers - 1) {
      for (double& v : w) v = 0.0;
      continue;
    }
    const double limit = std::sqrt(6.0 / (spec.sizes[l] + spec.sizes[l + 1]));
    for (double& v : w) v = limit * (2.0 * rng.uniform() - 1.0);
  }
}

NodeId record_mlp(Tape& tape, const MlpSpec& spec, NodeId input) {
  const auto& layout = tape.params().layout();
  const int layers = static_cast<int>(spec.sizes.size()) - 1;
  NodeId h = input;
  for (int l = 0; l < layers; ++l) {
    h = tape.affine(h, layout.index(spec.weight_name(l)), layout.index(spec.bias_name(l)));
    if (l + 1 < layers) {
      h = spec.activation == Activation::kTanh ? tape.tanh(h) : tape.silu(h);
    }
  }
  return h;
}

MlpForward forward_mlp(const ParamSet& params, std::span<const double> input,
                       const MlpSpec& spec) {
  if (static_cast<int>(input.size()) != spec.inputs()) {
    throw ConfigError("block '" + spec.weight_name(0) + "' expects input width " +
                      std::to_string(spec.inputs()) + ", got " + std::to_string(input.size()));
  }
  MlpForward f{.output = {}, .tape = Tape(params)};
  f.input = f.tape.input(input);
  f.output_node = record_mlp(f.tape, spec, f.input);
  auto out = f.tape.value(f.output_node);
  f.output.assign(out.begin(), out.end());
  return f;
}

}  // namespace unigrpo::nn
