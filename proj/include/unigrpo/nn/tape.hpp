// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "unigrpo/nn/param_set.hpp"

namespace unigrpo::nn {

using NodeId = int;

struct Seed {
  NodeId node;
  std::span<const double> grad;
};

// Wengert list over vector-valued nodes for the fixed feed-forward shapes
// used by the policies. Every node caches its forward value; backward()
// replays the list in reverse and accumulates parameter gradients into a
// GradSet congruent with the ParamSet the tape was recorded against.
//
// The ParamSet must outlive the tape.
class Tape {
 public:
  explicit Tape(const ParamSet& params);

  // Leaf holding caller-provided values. Its adjoint is readable after
  // backward(), which gives gradients with respect to inputs.
  NodeId input(std::span<const double> values);
  // Row `row` of a (rows x cols) table block.
  NodeId embedding(int table_block, int row);
  // W x + b, with W a (out x in) block and b an (out x 1) block.
  NodeId affine(NodeId x, int weight_block, int bias_block);
  NodeId tanh(NodeId x);
  NodeId silu(NodeId x);
  NodeId softmax(NodeId x);
  NodeId log_softmax(NodeId x);
  NodeId log(NodeId x);
  NodeId square(NodeId x);
  NodeId sum(NodeId x);
  NodeId concat(std::span<const NodeId> parts);
  // Element-wise mean of equally sized nodes.
  NodeId mean(std::span<const NodeId> parts);

  std::span<const double> value(NodeId node) const;
  std::size_t node_count() const { return nodes_.size(); }
  const ParamSet& params() const { return *params_; }

  // Seeds are summed into node adjoints, then the list is swept once in
  // reverse. Parameter gradients are added into `grads`.
  void backward(std::span<const Seed> seeds, GradSet& grads);
  GradSet backward(NodeId output, std::span<const double> seed);

  // Gradient with respect to a node's value from the most recent backward().
  std::span<const double> adjoint(NodeId node) const;

 private:
  enum class Op : uint8_t {
    kInput,
    kEmbedding,
    kAffine,
    kTanh,
    kSilu,
    kSoftmax,
    kLogSoftmax,
    kLog,
    kSquare,
    kSum,
    kConcat,
    kMean,
  };

  struct Node {
    Op op;
    NodeId arg = -1;
    int block = -1;
    int block2 = -1;
    int row = 0;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::size_t args_begin = 0;
    std::size_t args_count = 0;
  };

  NodeId push(Node node);
  std::span<double> mutable_value(NodeId node);
  void check(NodeId node) const;

  const ParamSet* params_;
  std::vector<Node> nodes_;
  std::vector<NodeId> args_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
};

}  // namespace unigrpo::nn
