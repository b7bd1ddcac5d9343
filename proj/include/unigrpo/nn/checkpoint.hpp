// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "unigrpo/nn/param_set.hpp"

namespace unigrpo::nn {

// On-disk layout (all integers little-endian):
//   "UGRP" | u32 version | u32 record count |
//   per record: u32 name length | UTF-8 name | u32 rank | u32 dims[rank] |
//               f64 payload[prod(dims)]
inline constexpr uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<double> data;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_checkpoint(const std::filesystem::path& path);

// Appends every block as "<prefix><block name>" with dims {rows, cols}.
void append_blocks(std::vector<TensorRecord>& records, const BlockVector& blocks,
                   std::string_view prefix);
// Fills `blocks` from records named "<prefix><block name>". Throws
// CheckpointError on a missing record or a shape mismatch.
void load_blocks(const std::vector<TensorRecord>& records, BlockVector& blocks,
                 std::string_view prefix);

void append_scalar(std::vector<TensorRecord>& records, std::string name, double value);
double find_scalar(const std::vector<TensorRecord>& records, std::string_view name);

}  // namespace unigrpo::nn
