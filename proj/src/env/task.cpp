// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/env/task.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"

namespace unigrpo::env {
namespace {

constexpr int kQuadrantBase = 0;
constexpr int kBandBase = kQuadrants * kSynonyms;
constexpr int kSpreadBase = kBandBase + kBands * kSynonyms;

constexpr std::array<std::string_view, kSurfaceVocab> kSurfaceNames = {
    "NE",    "upper-right", "northeast-ish", "NW",      "upper-left", "northwest-ish",
    "SW",    "lower-left",  "southwest-ish", "SE",      "lower-right", "southeast-ish",
    "near",  "close",       "inner",         "far",     "distant",    "outer",
    "tight", "compact",     "narrow",        "wide",    "diffuse",    "loose",
};

constexpr std::array<std::string_view, kReasonVocab> kReasonNames = {
    "Q1", "Q2", "Q3", "Q4", "NEAR", "FAR", "TIGHT", "WIDE", "EOS",
};

constexpr std::array<Vec2, kQuadrants> kQuadrantSigns = {
    Vec2{1.0, 1.0}, Vec2{-1.0, 1.0}, Vec2{-1.0, -1.0}, Vec2{1.0, -1.0}};

int wrong_value(Rng& rng, int value, int count) {
  const int shift = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(count - 1)));
  return (value + shift) % count;
}

}  // namespace

Attributes Attributes::from_index(int index) {
  Attributes a;
  a.spread = index % kSpreads;
  a.band = (index / kSpreads) % kBands;
  a.quadrant = index / (kSpreads * kBands);
  return a;
}

std::string_view surface_name(int token) { return kSurfaceNames.at(token); }
std::string_view reason_name(int token) { return kReasonNames.at(token); }

Prompt make_prompt(const Attributes& truth, const std::array<int, kPromptLength>& synonyms) {
  Prompt p;
  p.truth = truth;
  p.surface = {kQuadrantBase + truth.quadrant * kSynonyms + synonyms[0],
               kBandBase + truth.band * kSynonyms + synonyms[1],
               kSpreadBase + truth.spread * kSynonyms + synonyms[2]};
  p.id = static_cast<uint32_t>(truth.index() * kSynonyms * kSynonyms * kSynonyms +
                               (synonyms[0] * kSynonyms + synonyms[1]) * kSynonyms +
                               synonyms[2]);
  return p;
}

Prompt prompt_from_id(uint32_t id) {
  const int syn = static_cast<int>(id % (kSynonyms * kSynonyms * kSynonyms));
  const int tuple = static_cast<int>(id / (kSynonyms * kSynonyms * kSynonyms));
  return make_prompt(Attributes::from_index(tuple),
                     {syn / (kSynonyms * kSynonyms), (syn / kSynonyms) % kSynonyms,
                      syn % kSynonyms});
}

Attributes decode_surface(const std::array<int, kPromptLength>& surface) {
  Attributes a;
  a.quadrant = (surface[0] - kQuadrantBase) / kSynonyms;
  a.band = (surface[1] - kBandBase) / kSynonyms;
  a.spread = (surface[2] - kSpreadBase) / kSynonyms;
  return a;
}

Prompt sample_prompt(Rng& rng) {
  const auto truth = Attributes::from_index(static_cast<int>(rng.below(kAttributeTuples)));
  std::array<int, kPromptLength> syn{};
  for (int& s : syn) s = static_cast<int>(rng.below(kSynonyms));
  return make_prompt(truth, syn);
}

std::vector<Prompt> all_prompts() {
  std::vector<Prompt> out;
  out.reserve(kDistinctPrompts);
  for (uint32_t id = 0; id < kDistinctPrompts; ++id) out.push_back(prompt_from_id(id));
  return out;
}

bool is_confusable(const Prompt& prompt) {
  return (prompt.surface[0] - kQuadrantBase) % kSynonyms == kConfusableSynonym;
}

std::vector<int> canonical_trace(const Attributes& truth) {
  return {kQ1 + truth.quadrant, kNear + truth.band, kTight + truth.spread, kEos};
}

std::optional<Attributes> decode_trace(std::span<const int> trace) {
  if (trace.size() != kCanonicalTraceLength || trace[3] != kEos) return std::nullopt;
  if (trace[0] < kQ1 || trace[0] > kQ4) return std::nullopt;
  if (trace[1] != kNear && trace[1] != kFar) return std::nullopt;
  if (trace[2] != kTight && trace[2] != kWide) return std::nullopt;
  return Attributes{trace[0] - kQ1, trace[1] - kNear, trace[2] - kTight};
}

TargetSpec target_spec(const Attributes& truth, const TaskConfig& config) {
  const double radius = truth.band == 0 ? config.radius_near : config.radius_far;
  const double s = radius / std::sqrt(2.0);
  const Vec2& sign = kQuadrantSigns.at(truth.quadrant);
  return TargetSpec{{sign[0] * s, sign[1] * s},
                    truth.spread == 0 ? config.tau_tight : config.tau_wide,
                    config.tau_reward};
}

RewardRecord reward(const Vec2& x0, const Prompt& prompt, const TaskConfig& config) {
  RewardRecord r{x0, prompt.id, 0.0, false};
  if (!is_finite(x0)) {
    r.non_finite = true;
    return r;
  }
  const TargetSpec target = target_spec(prompt.truth, config);
  if (config.reward_mode == RewardMode::kSmooth) {
    const double d2 = squared_norm(x0 - target.mean);
    r.reward = std::exp(-d2 / (2.0 * target.tau_reward * target.tau_reward));
    return r;
  }
  const Vec2& sign = kQuadrantSigns[prompt.truth.quadrant];
  const bool quadrant_ok = x0[0] * sign[0] > 0.0 && x0[1] * sign[1] > 0.0;
  const double boundary = 0.5 * (config.radius_near + config.radius_far);
  const bool near = std::sqrt(squared_norm(x0)) < boundary;
  const bool band_ok = near == (prompt.truth.band == 0);
  r.reward = (quadrant_ok && band_ok) ? 1.0 : 0.0;
  return r;
}

double exact_target_expected_reward(const TaskConfig& config, const Attributes& truth) {
  const TargetSpec t = target_spec(truth, config);
  const double r2 = t.tau_reward * t.tau_reward;
  // Per-dimension factor sqrt(r2 / (r2 + s2)); two dimensions.
  return r2 / (r2 + t.std * t.std);
}

PretrainData make_pretrain_data(Rng& rng, int n, const TaskConfig& config) {
  PretrainData data;
  data.text.reserve(n);
  data.flow.reserve(n);
  constexpr double kConfusableShare = 1.0 / kSynonyms;
  const double p = config.p_noise;
  const double p_confusable = std::min(1.0, p / kConfusableShare);
  const double p_other = p > kConfusableShare ? (p - kConfusableShare) / (1.0 - kConfusableShare)
                                              : 0.0;

  for (int i = 0; i < n; ++i) {
    TextPair pair;
    pair.prompt = sample_prompt(rng);
    pair.trace = canonical_trace(pair.prompt);
    const bool confusable = is_confusable(pair.prompt);
    if (confusable && rng.uniform() < p_confusable) {
      pair.trace[0] = kQ1 + (pair.prompt.truth.quadrant + 1) % kQuadrants;
      pair.corrupted = true;
    } else if (!confusable && p_other > 0.0 && rng.uniform() < p_other) {
      const int slot = static_cast<int>(rng.below(3));
      if (slot == 0) {
        pair.trace[0] = kQ1 + wrong_value(rng, pair.prompt.truth.quadrant, kQuadrants);
      } else if (slot == 1) {
        pair.trace[1] = kNear + wrong_value(rng, pair.prompt.truth.band, kBands);
      } else {
        pair.trace[2] = kTight + wrong_value(rng, pair.prompt.truth.spread, kSpreads);
      }
      pair.corrupted = true;
    }
    data.text.push_back(std::move(pair));
  }

  for (int i = 0; i < n; ++i) {
    const auto attrs = Attributes::from_index(static_cast<int>(rng.below(kAttributeTuples)));
    const TargetSpec t = target_spec(attrs, config);
    const double z0 = rng.normal();
    const double z1 = rng.normal();
    data.flow.push_back(FlowPair{canonical_trace(attrs), attrs,
                                 {t.mean[0] + t.std * z0, t.mean[1] + t.std * z1}});
  }
  return data;
}

void write_pretrain_data(const std::filesystem::path& path, const PretrainData& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset '" + path.string() + "'");
  for (const auto& t : data.text) {
    nlohmann::json j{{"kind", "text"},
                     {"prompt_id", t.prompt.id},
                     {"trace", t.trace},
                     {"corrupted", t.corrupted}};
    out << j.dump() << '\n';
  }
  for (const auto& f : data.flow) {
    nlohmann::json j{{"kind", "flow"},
                     {"condition", f.condition},
                     {"attributes", f.attributes.index()},
                     {"x0", {f.x0[0], f.x0[1]}}};
    out << j.dump() << '\n';
  }
}

PretrainData read_pretrain_data(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read dataset '" + path.string() + "'");
  PretrainData data;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.at("kind") == "text") {
      data.text.push_back(TextPair{prompt_from_id(j.at("prompt_id").get<uint32_t>()),
                                   j.at("trace").get<std::vector<int>>(),
                                   j.at("corrupted").get<bool>()});
    } else {
      const auto x = j.at("x0");
      data.flow.push_back(FlowPair{j.at("condition").get<std::vector<int>>(),
                                   Attributes::from_index(j.at("attributes").get<int>()),
                                   {x[0].get<double>(), x[1].get<double>()}});
    }
  }
  return data;
}

}  // namespace unigrpo::env
