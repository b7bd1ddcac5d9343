// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace unigrpo::nn {

struct BlockInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Names and shapes of a parameter collection. Immutable once built and
// shared between a ParamSet and every GradSet / optimizer state derived
// from it.
class Layout {
 public:
  class Builder {
   public:
    Builder& add(std::string name, int rows, int cols = 1);
    std::shared_ptr<const Layout> build() &&;

   private:
    std::vector<BlockInfo> blocks_;
  };

  const std::vector<BlockInfo>& blocks() const { return blocks_; }
  std::size_t total() const { return total_; }
  std::optional<int> find(std::string_view name) const;
  // Throws ConfigError naming the missing block.
  int index(std::string_view name) const;
  // FNV-style digest of names and shapes; identifies an architecture.
  uint64_t hash() const;
  bool congruent(const Layout& other) const;

 private:
  std::vector<BlockInfo> blocks_;
  std::size_t total_ = 0;
};

// Flat f64 storage addressed through a Layout.
class BlockVector {
 public:
  explicit BlockVector(std::shared_ptr<const Layout> layout);

  const Layout& layout() const { return *layout_; }
  const std::shared_ptr<const Layout>& layout_ptr() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> block(int index);
  std::span<const double> block(int index) const;
  std::span<double> block(std::string_view name) { return block(layout_->index(name)); }
  std::span<const double> block(std::string_view name) const {
    return block(layout_->index(name));
  }

  bool all_finite() const;
  void fill(double value);

 protected:
  std::shared_ptr<const Layout> layout_;
  std::vector<double> values_;
};

class ParamSet : public BlockVector {
 public:
  using BlockVector::BlockVector;
};

class GradSet : public BlockVector {
 public:
  using BlockVector::BlockVector;

  void zero();
  void add(const GradSet& other, double weight = 1.0);
  void scale(double factor);
  // Name of the first block holding a NaN/Inf, if any.
  std::optional<std::string> first_non_finite_block() const;

  int accumulations() const { return accumulations_; }
  void note_accumulation() { ++accumulations_; }

 private:
  int accumulations_ = 0;
};

// Throws ConfigError unless both collections share names and shapes.
void require_congruent(const Layout& a, const Layout& b, std::string_view what);

}  // namespace unigrpo::nn
