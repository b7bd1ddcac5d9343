// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "unigrpo/common.hpp"
#include "unigrpo/rng.hpp"

namespace unigrpo::env {

// A prompt names three attributes, each through one of three surface
// synonyms. The "reasoning" vocabulary holds one canonical token per
// attribute value plus EOS; the flow generator only ever sees reasoning
// tokens, never the prompt itself.

inline constexpr int kQuadrants = 4;
inline constexpr int kBands = 2;
inline constexpr int kSpreads = 2;
inline constexpr int kSynonyms = 3;
inline constexpr int kPromptLength = 3;
inline constexpr int kAttributeTuples = kQuadrants * kBands * kSpreads;
inline constexpr int kSurfaceVocab = (kQuadrants + kBands + kSpreads) * kSynonyms;
inline constexpr int kDistinctPrompts = kAttributeTuples * kSynonyms * kSynonyms * kSynonyms;
inline constexpr int kCanonicalTraceLength = 4;

// Synonym index whose quadrant forms are confusable with the neighbouring
// quadrant (used by the pretraining corruption model).
inline constexpr int kConfusableSynonym = 2;

enum ReasonToken : int {
  kQ1 = 0,
  kQ2,
  kQ3,
  kQ4,
  kNear,
  kFar,
  kTight,
  kWide,
  kEos,
  kReasonVocab,
};

struct Attributes {
  int quadrant = 0;  // 0..3, counter-clockwise from the upper-right
  int band = 0;      // 0 near, 1 far
  int spread = 0;    // 0 tight, 1 wide

  int index() const { return (quadrant * kBands + band) * kSpreads + spread; }
  static Attributes from_index(int index);
  auto operator<=>(const Attributes&) const = default;
};

struct Prompt {
  uint32_t id = 0;
  std::array<int, kPromptLength> surface{};
  Attributes truth;
};

enum class RewardMode { kSmooth, kBinary };

struct TaskConfig {
  double radius_near = 1.0;
  double radius_far = 2.0;
  double tau_tight = 0.15;
  double tau_wide = 0.3;
  double tau_reward = 0.5;
  double p_noise = 0.25;
  RewardMode reward_mode = RewardMode::kSmooth;
};

struct TargetSpec {
  Vec2 mean{};
  double std = 0.0;
  double tau_reward = 0.0;
};

struct RewardRecord {
  Vec2 x0{};
  uint32_t prompt_id = 0;
  double reward = 0.0;
  bool non_finite = false;
};

std::string_view surface_name(int token);
std::string_view reason_name(int token);

Prompt make_prompt(const Attributes& truth, const std::array<int, kPromptLength>& synonyms);
Prompt prompt_from_id(uint32_t id);
// Surface tokens decode to exactly one attribute tuple.
Attributes decode_surface(const std::array<int, kPromptLength>& surface);
// Uniform over attribute tuples, then uniform over synonyms per slot.
Prompt sample_prompt(Rng& rng);
// Every distinct prompt, ordered by id.
std::vector<Prompt> all_prompts();
bool is_confusable(const Prompt& prompt);

std::vector<int> canonical_trace(const Attributes& truth);
inline std::vector<int> canonical_trace(const Prompt& prompt) {
  return canonical_trace(prompt.truth);
}
// Inverse of canonical_trace; nullopt for anything that is not a canonical trace.
std::optional<Attributes> decode_trace(std::span<const int> trace);

TargetSpec target_spec(const Attributes& truth, const TaskConfig& config);
RewardRecord reward(const Vec2& x0, const Prompt& prompt, const TaskConfig& config);
// Closed-form E[R] for samples drawn exactly from the prompt's own target
// under the smooth reward.
double exact_target_expected_reward(const TaskConfig& config, const Attributes& truth);

struct TextPair {
  Prompt prompt;
  std::vector<int> trace;
  bool corrupted = false;
};

struct FlowPair {
  std::vector<int> condition;
  Attributes attributes;
  Vec2 x0{};
};

struct PretrainData {
  std::vector<TextPair> text;
  std::vector<FlowPair> flow;
};

// Text traces are corrupted with overall probability p_noise. Corruption is
// concentrated on prompts using a confusable quadrant synonym (the quadrant
// token is swapped for the neighbouring quadrant), which makes the errors
// systematic enough to survive greedy decoding. Flow pairs are exact
// samples from each canonical condition's target.
PretrainData make_pretrain_data(Rng& rng, int n, const TaskConfig& config);

void write_pretrain_data(const std::filesystem::path& path, const PretrainData& data);
PretrainData read_pretrain_data(const std::filesystem::path& path);

}  // namespace unigrpo::env
