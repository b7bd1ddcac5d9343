// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "unigrpo/trainer/trainer.hpp"

namespace unigrpo::trainer {

enum class AblationMode { kCfgOnVsOff, kRegSweep, kComponentSweep };

std::string_view ablation_mode_name(AblationMode mode);
// Throws ConfigError listing the valid modes.
AblationMode parse_ablation_mode(std::string_view name);

struct AblationVariant {
  std::string name;
  TrainConfig config;
};

// The paired configurations of a mode, derived from `base` (seed not set).
std::vector<AblationVariant> ablation_variants(AblationMode mode, const TrainConfig& base);

struct AblationRun {
  std::string variant;
  uint64_t seed = 0;
  std::filesystem::path dir;
  std::vector<MetricsRow> rows;
  bool reused = false;

  double baseline_eval() const;
  double final_eval() const;
  double peak_eval() const;
  double final_drift() const;
  double evals_per_step() const;  // mean over updates
};

enum class VerdictStatus { kPass, kFail, kWarn };

struct Verdict {
  std::string name;
  VerdictStatus status = VerdictStatus::kFail;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

// "VERDICT <name> PASS|FAIL|WARN measured=<x> threshold=<y> <detail>"
std::string format_verdict(const Verdict& v);

struct AblationReport {
  AblationMode mode{};
  std::vector<AblationRun> runs;
  std::vector<Verdict> verdicts;
  bool passed() const;  // no FAIL verdicts; WARN does not fail
};

struct AblationOptions {
  std::filesystem::path out_dir;
  const Policies* pretrained = nullptr;
  std::function<void(const std::string&)> log;
};

// Trains every variant for every seed in base.ablation_seeds. Run directories
// live under out_dir/runs/<config hash>; a completed run with the same
// resolved config is reused. Writes comparison.csv (update x per-run curves),
// summary.csv and verdicts.txt into out_dir/<mode>/.
AblationReport run_ablation(AblationMode mode, const TrainConfig& base,
                            const AblationOptions& options);

std::string config_hash(const TrainConfig& config);

}  // namespace unigrpo::trainer
