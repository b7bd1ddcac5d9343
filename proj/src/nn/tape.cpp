// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unigrpo/common.hpp"

namespace unigrpo::nn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tape::Tape(const ParamSet& params) : params_(&params) {}

NodeId Tape::push(Node node) {
  node.offset = values_.size();
  values_.resize(values_.size() + node.size, 0.0);
  nodes_.push_back(node);
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check(NodeId node) const {
  if (node < 0 || static_cast<std::size_t>(node) >= nodes_.size()) {
    throw ConfigError("tape: invalid node id " + std::to_string(node));
  }
}

std::span<const double> Tape::value(NodeId node) const {
  check(node);
  const auto& n = nodes_[node];
  return std::span<const double>(values_).subspan(n.offset, n.size);
}

std::span<double> Tape::mutable_value(NodeId node) {
  const auto& n = nodes_[node];
  return std::span<double>(values_).subspan(n.offset, n.size);
}

std::span<const double> Tape::adjoint(NodeId node) const {
  check(node);
  const auto& n = nodes_[node];
  if (adjoints_.size() != values_.size()) return {};
  return std::span<const double>(adjoints_).subspan(n.offset, n.size);
}

NodeId Tape::input(std::span<const double> values) {
  NodeId id = push(Node{.op = Op::kInput, .size = values.size()});
  std::copy(values.begin(), values.end(), mutable_value(id).begin());
  return id;
}

NodeId Tape::embedding(int table_block, int row) {
  const auto& info = params_->layout().blocks().at(table_block);
  if (row < 0 || row >= info.rows) {
    throw ConfigError("embedding row " + std::to_string(row) + " out of range for block '" +
                      info.name + "'");
  }
  NodeId id = push(Node{.op = Op::kEmbedding,
                        .block = table_block,
                        .row = row,
                        .size = static_cast<std::size_t>(info.cols)});
  auto table = params_->block(table_block);
  auto src = table.subspan(static_cast<std::size_t>(row) * info.cols, info.cols);
  std::copy(src.begin(), src.end(), mutable_value(id).begin());
  return id;
}

NodeId Tape::affine(NodeId x, int weight_block, int bias_block) {
  check(x);
  const auto& w = params_->layout().blocks().at(weight_block);
  const auto& b = params_->layout().blocks().at(bias_block);
  const std::size_t in = nodes_[x].size;
  if (static_cast<std::size_t>(w.cols) != in) {
    throw ConfigError("block '" + w.name + "' expects input width " + std::to_string(w.cols) +
                      ", got " + std::to_string(in));
  }
  if (b.rows != w.rows || b.cols != 1) {
    throw ConfigError("block '" + b.name + "' does not match rows of '" + w.name + "'");
  }
  NodeId id = push(Node{.op = Op::kAffine,
                        .arg = x,
                        .block = weight_block,
                        .block2 = bias_block,
                        .size = static_cast<std::size_t>(w.rows)});
  auto W = params_->block(weight_block);
  auto bias = params_->block(bias_block);
  auto xin = value(x);
  auto out = mutable_value(id);
  for (int r = 0; r < w.rows; ++r) {
    double acc = bias[r];
    const double* row = W.data() + static_cast<std::size_t>(r) * in;
    for (std::size_t c = 0; c < in; ++c) acc += row[c] * xin[c];
    out[r] = acc;
  }
  return id;
}

NodeId Tape::tanh(NodeId x) {
  check(x);
  NodeId id = push(Node{.op = Op::kTanh, .arg = x, .size = nodes_[x].size});
  auto in = value(x);
  auto out = mutable_value(id);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
  return id;
}

NodeId Tape::silu(NodeId x) {
  check(x);
  NodeId id = push(Node{.op = Op::kSilu, .arg = x, .size = nodes_[x].size});
  auto in = value(x);
  auto out = mutable_value(id);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * sigmoid(in[i]);
  return id;
}

NodeId Tape::softmax(NodeId x) {
  check(x);
  NodeId id = push(Node{.op = Op::kSoftmax, .arg = x, .size = nodes_[x].size});
  auto in = value(x);
  auto out = mutable_value(id);
  const double m = *std::max_element(in.begin(), in.end());
  double z = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) z += (out[i] = std::exp(in[i] - m));
  for (double& v : out) v /= z;
  return id;
}

NodeId Tape::log_softmax(NodeId x) {
  check(x);
  NodeId id = push(Node{.op = Op::kLogSoftmax, .arg = x, .size = nodes_[x].size});
  auto in = value(x);
  auto out = mutable_value(id);
  const double m = *std::max_element(in.begin(), in.end());
  double z = 0.0;
  for (double v : in) z += std::exp(v - m);
  const double lse = m + std::log(z);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] - lse;
  return id;
}

NodeId Tape::log(NodeId x) {
  check(x);
  NodeId id = push(Node{.op = Op::kLog, .arg = x, .size = nodes_[x].size});
  auto in = value(x);
  auto out = mutable_value(id);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::log(in[i]);
  return id;
}

NodeId Tape::square(NodeId x) {
  check(x);
  NodeId id = push(Node{.op = Op::kSquare, .arg = x, .size = nodes_[x].size});
  auto in = value(x);
  auto out = mutable_value(id);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * in[i];
  return id;
}

NodeId Tape::sum(NodeId x) {
  check(x);
  NodeId id = push(Node{.op = Op::kSum, .arg = x, .size = 1});
  double acc = 0.0;
  for (double v : value(x)) acc += v;
  mutable_value(id)[0] = acc;
  return id;
}

NodeId Tape::concat(std::span<const NodeId> parts) {
  std::size_t total = 0;
  for (NodeId p : parts) {
    check(p);
    total += nodes_[p].size;
  }
  Node node{.op = Op::kConcat, .size = total};
  node.args_begin = args_.size();
  node.args_count = parts.size();
  args_.insert(args_.end(), parts.begin(), parts.end());
  NodeId id = push(node);
  auto out = mutable_value(id);
  std::size_t at = 0;
  for (NodeId p : parts) {
    auto v = value(p);
    std::copy(v.begin(), v.end(), out.begin() + at);
    at += v.size();
  }
  return id;
}

NodeId Tape::mean(std::span<const NodeId> parts) {
  if (parts.empty()) throw ConfigError("tape: mean of zero nodes");
  const std::size_t width = nodes_.at(parts[0]).size;
  for (NodeId p : parts) {
    check(p);
    if (nodes_[p].size != width) throw ConfigError("tape: mean over unequal widths");
  }
  Node node{.op = Op::kMean, .size = width};
  node.args_begin = args_.size();
  node.args_count = parts.size();
  args_.insert(args_.end(), parts.begin(), parts.end());
  NodeId id = push(node);
  auto out = mutable_value(id);
  for (NodeId p : parts) {
    auto v = value(p);
    for (std::size_t i = 0; i < width; ++i) out[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (double& v : out) v *= inv;
  return id;
}

GradSet Tape::backward(NodeId output, std::span<const double> seed) {
  GradSet grads(params_->layout_ptr());
  const Seed s{output, seed};
  backward(std::span<const Seed>(&s, 1), grads);
  return grads;
}

void Tape::backward(std::span<const Seed> seeds, GradSet& grads) {
  require_congruent(params_->layout(), grads.layout(), "Tape::backward");
  adjoints_.assign(values_.size(), 0.0);
  NodeId last = -1;
  for (const auto& s : seeds) {
    check(s.node);
    const auto& n = nodes_[s.node];
    if (s.grad.size() != n.size) {
      throw ConfigError("backward seed has " + std::to_string(s.grad.size()) +
                        " entries, node has " + std::to_string(n.size));
    }
    for (std::size_t i = 0; i < n.size; ++i) adjoints_[n.offset + i] += s.grad[i];
    last = std::max(last, s.node);
  }

  for (NodeId id = last; id >= 0; --id) {
    const Node& n = nodes_[id];
    const double* g = adjoints_.data() + n.offset;
    const double* y = values_.data() + n.offset;
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kEmbedding: {
        const auto& info = params_->layout().blocks()[n.block];
        auto dst = grads.block(n.block).subspan(static_cast<std::size_t>(n.row) * info.cols,
                                                info.cols);
        for (std::size_t i = 0; i < n.size; ++i) dst[i] += g[i];
        break;
      }
      case Op::kAffine: {
        const Node& xn = nodes_[n.arg];
        const std::size_t in = xn.size;
        const double* x = values_.data() + xn.offset;
        double* gx = adjoints_.data() + xn.offset;
        auto W = params_->block(n.block);
        auto gW = grads.block(n.block);
        auto gb = grads.block(n.block2);
        for (std::size_t r = 0; r < n.size; ++r) {
          const double gr = g[r];
          gb[r] += gr;
          if (gr == 0.0) continue;
          const double* wrow = W.data() + r * in;
          double* gwrow = gW.data() + r * in;
          for (std::size_t c = 0; c < in; ++c) {
            gwrow[c] += gr * x[c];
            gx[c] += gr * wrow[c];
          }
        }
        break;
      }
      case Op::kTanh: {
        double* gx = adjoints_.data() + nodes_[n.arg].offset;
        for (std::size_t i = 0; i < n.size; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::kSilu: {
        const double* x = values_.data() + nodes_[n.arg].offset;
        double* gx = adjoints_.data() + nodes_[n.arg].offset;
        for (std::size_t i = 0; i < n.size; ++i) {
          const double s = sigmoid(x[i]);
          gx[i] += g[i] * (s + x[i] * s * (1.0 - s));
        }
        break;
      }
      case Op::kSoftmax: {
        double* gx = adjoints_.data() + nodes_[n.arg].offset;
        double gy = 0.0;
        for (std::size_t i = 0; i < n.size; ++i) gy += g[i] * y[i];
        for (std::size_t i = 0; i < n.size; ++i) gx[i] += y[i] * (g[i] - gy);
        break;
      }
      case Op::kLogSoftmax: {
        double* gx = adjoints_.data() + nodes_[n.arg].offset;
        double gsum = 0.0;
        for (std::size_t i = 0; i < n.size; ++i) gsum += g[i];
        for (std::size_t i = 0; i < n.size; ++i) gx[i] += g[i] - std::exp(y[i]) * gsum;
        break;
      }
      case Op::kLog: {
        const double* x = values_.data() + nodes_[n.arg].offset;
        double* gx = adjoints_.data() + nodes_[n.arg].offset;
        for (std::size_t i = 0; i < n.size; ++i) gx[i] += g[i] / x[i];
        break;
      }
      case Op::kSquare: {
        const double* x = values_.data() + nodes_[n.arg].offset;
        double* gx = adjoints_.data() + nodes_[n.arg].offset;
        for (std::size_t i = 0; i < n.size; ++i) gx[i] += 2.0 * x[i] * g[i];
        break;
      }
      case Op::kSum: {
        const Node& xn = nodes_[n.arg];
        double* gx = adjoints_.data() + xn.offset;
        for (std::size_t i = 0; i < xn.size; ++i) gx[i] += g[0];
        break;
      }
      case Op::kConcat: {
        std::size_t at = 0;
        for (std::size_t a = 0; a < n.args_count; ++a) {
          const Node& p = nodes_[args_[n.args_begin + a]];
          double* gp = adjoints_.data() + p.offset;
          for (std::size_t i = 0; i < p.size; ++i) gp[i] += g[at + i];
          at += p.size;
        }
        break;
      }
      case Op::kMean: {
        const double inv = 1.0 / static_cast<double>(n.args_count);
        for (std::size_t a = 0; a < n.args_count; ++a) {
          const Node& p = nodes_[args_[n.args_begin + a]];
          double* gp = adjoints_.data() + p.offset;
          for (std::size_t i = 0; i < p.size; ++i) gp[i] += g[i] * inv;
        }
        break;
      }
    }
  }
  grads.note_accumulation();
}

}  // namespace unigrpo::nn
