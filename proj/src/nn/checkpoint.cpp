// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "unigrpo/common.hpp"

namespace unigrpo::nn {
namespace {

constexpr char kMagic[4] = {'U', 'G', 'R', 'P'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  const uint64_t v = std::bit_cast<uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  unsigned char byte(std::size_t i) const { return static_cast<unsigned char>(bytes_[i]); }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError("truncated checkpoint '" + path_.string() + "'");
    }
  }

  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<TensorRecord>& records) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(records.size()));
  for (const auto& r : records) {
    std::size_t count = 1;
    for (uint32_t d : r.dims) count *= d;
    if (count != r.data.size()) {
      throw CheckpointError("record '" + r.name + "' dims do not match payload");
    }
    put_u32(out, static_cast<uint32_t>(r.name.size()));
    out += r.name;
    put_u32(out, static_cast<uint32_t>(r.dims.size()));
    for (uint32_t d : r.dims) put_u32(out, d);
    for (double v : r.data) put_f64(out, v);
  }

  // Write-then-rename so a crash never leaves a half-written checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("short write to '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::vector<TensorRecord> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader in(bytes, path);
  if (in.str(4) != std::string(kMagic, 4)) {
    throw CheckpointError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const uint32_t count = in.u32();
  std::vector<TensorRecord> records;
  records.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    r.name = in.str(in.u32());
    const uint32_t rank = in.u32();
    std::size_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      r.dims.push_back(in.u32());
      n *= r.dims.back();
    }
    r.data.resize(n);
    for (double& v : r.data) v = in.f64();
    records.push_back(std::move(r));
  }
  if (!in.done()) throw CheckpointError("trailing bytes in '" + path.string() + "'");
  return records;
}

void append_blocks(std::vector<TensorRecord>& records, const BlockVector& blocks,
                   std::string_view prefix) {
  const auto& infos = blocks.layout().blocks();
  for (std::size_t i = 0; i < infos.size(); ++i) {
    auto data = blocks.block(static_cast<int>(i));
    records.push_back(TensorRecord{
        std::string(prefix) + infos[i].name,
        {static_cast<uint32_t>(infos[i].rows), static_cast<uint32_t>(infos[i].cols)},
        std::vector<double>(data.begin(), data.end())});
  }
}

void load_blocks(const std::vector<TensorRecord>& records, BlockVector& blocks,
                 std::string_view prefix) {
  const auto& infos = blocks.layout().blocks();
  for (std::size_t i = 0; i < infos.size(); ++i) {
    const std::string name = std::string(prefix) + infos[i].name;
    const TensorRecord* found = nullptr;
    for (const auto& r : records) {
      if (r.name == name) {
        found = &r;
        break;
      }
    }
    if (!found) throw CheckpointError("checkpoint lacks block '" + name + "'");
    const std::vector<uint32_t> want{static_cast<uint32_t>(infos[i].rows),
                                     static_cast<uint32_t>(infos[i].cols)};
    if (found->dims != want) {
      throw CheckpointError("architecture mismatch: block '" + name +
                            "' has a different shape in the checkpoint");
    }
    auto dst = blocks.block(static_cast<int>(i));
    std::copy(found->data.begin(), found->data.end(), dst.begin());
  }
}

void append_scalar(std::vector<TensorRecord>& records, std::string name, double value) {
  records.push_back(TensorRecord{std::move(name), {1}, {value}});
}

double find_scalar(const std::vector<TensorRecord>& records, std::string_view name) {
  for (const auto& r : records) {
    if (r.name == name) {
      if (r.data.size() != 1) throw CheckpointError("'" + r.name + "' is not a scalar");
      return r.data[0];
    }
  }
  throw CheckpointError("checkpoint lacks scalar '" + std::string(name) + "'");
}

}  // namespace unigrpo::nn
