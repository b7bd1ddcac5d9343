// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/nn/param_set.hpp"

#include <algorithm>
#include <cmath>

#include "unigrpo/common.hpp"
#include "unigrpo/rng.hpp"

namespace unigrpo::nn {

Layout::Builder& Layout::Builder::add(std::string name, int rows, int cols) {
  if (rows <= 0 || cols <= 0) {
    throw ConfigError("block '" + name + "' has non-positive shape");
  }
  for (const auto& b : blocks_) {
    if (b.name == name) throw ConfigError("duplicate block '" + name + "'");
  }
  blocks_.push_back(BlockInfo{std::move(name), rows, cols, 0});
  return *this;
}

std::shared_ptr<const Layout> Layout::Builder::build() && {
  auto layout = std::make_shared<Layout>();
  std::size_t offset = 0;
  for (auto& b : blocks_) {
    b.offset = offset;
    offset += b.size();
  }
  layout->blocks_ = std::move(blocks_);
  layout->total_ = offset;
  return layout;
}

std::optional<int> Layout::find(std::string_view name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

int Layout::index(std::string_view name) const {
  auto i = find(name);
  if (!i) throw ConfigError("missing parameter block '" + std::string(name) + "'");
  return *i;
}

uint64_t Layout::hash() const {
  uint64_t h = 0x84222325cbf29ce4ull;
  for (const auto& b : blocks_) {
    for (char c : b.name) h = mix64(h ^ static_cast<unsigned char>(c));
    h = mix64(h ^ static_cast<uint64_t>(b.rows));
    h = mix64(h ^ (static_cast<uint64_t>(b.cols) << 32));
  }
  return h;
}

bool Layout::congruent(const Layout& other) const {
  if (this == &other) return true;
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& a = blocks_[i];
    const auto& b = other.blocks_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

void require_congruent(const Layout& a, const Layout& b, std::string_view what) {
  if (a.congruent(b)) return;
  const std::size_t n = std::min(a.blocks().size(), b.blocks().size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& x = a.blocks()[i];
    const auto& y = b.blocks()[i];
    if (x.name != y.name || x.rows != y.rows || x.cols != y.cols) {
      throw ConfigError(std::string(what) + ": block '" + x.name +
                        "' does not match '" + y.name + "'");
    }
  }
  throw ConfigError(std::string(what) + ": block count differs");
}

BlockVector::BlockVector(std::shared_ptr<const Layout> layout)
    : layout_(std::move(layout)), values_(layout_->total(), 0.0) {}

std::span<double> BlockVector::block(int index) {
  const auto& b = layout_->blocks().at(index);
  return std::span<double>(values_).subspan(b.offset, b.size());
}

std::span<const double> BlockVector::block(int index) const {
  const auto& b = layout_->blocks().at(index);
  return std::span<const double>(values_).subspan(b.offset, b.size());
}

bool BlockVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void BlockVector::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

void GradSet::zero() {
  fill(0.0);
  accumulations_ = 0;
}

void GradSet::add(const GradSet& other, double weight) {
  require_congruent(*layout_, other.layout(), "GradSet::add");
  auto src = other.values();
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += weight * src[i];
  accumulations_ += other.accumulations_;
}

void GradSet::scale(double factor) {
  for (double& v : values_) v *= factor;
}

std::optional<std::string> GradSet::first_non_finite_block() const {
  for (std::size_t i = 0; i < layout_->blocks().size(); ++i) {
    for (double v : block(static_cast<int>(i))) {
      if (!std::isfinite(v)) return layout_->blocks()[i].name;
    }
  }
  return std::nullopt;
}

}  // namespace unigrpo::nn
