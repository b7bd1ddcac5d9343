// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run: one line per criterion, nonzero exit on any
// FAIL. Usage: acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "unigrpo/nn/checkpoint.hpp"
#include "unigrpo/ops/oracles.hpp"
#include "unigrpo/trainer/ablation.hpp"
#include "unigrpo/trainer/trainer.hpp"

using namespace unigrpo;
namespace fs = std::filesystem;

namespace {

enum class Status { kPass, kFail, kWarn };

struct Line {
  int id;
  Status status;
  std::string detail;
};

std::vector<Line> g_lines;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int id, Status status, const std::string& detail) {
  const char* s = status == Status::kPass ? "PASS" : status == Status::kWarn ? "WARN" : "FAIL";
  std::cout << "CRITERION " << id << " " << s << " " << detail << std::endl;
  g_lines.push_back({id, status, detail});
}

// Runs oracle groups, requiring every result to pass and the wall clock to
// stay under `budget` seconds.
void oracle_criterion(int id, const std::string& what,
                      const std::vector<std::function<std::vector<ops::OracleResult>(
                          const ops::VerifyOptions&)>>& groups,
                      double budget) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<ops::OracleResult> results;
  for (const auto& g : groups) {
    auto part = g(ops::VerifyOptions{});
    results.insert(results.end(), part.begin(), part.end());
  }
  const double secs = since(t0);
  int passed = 0;
  std::string worst;
  for (const auto& r : results) {
    passed += r.passed;
    if (!r.passed && worst.empty()) worst = " first failure: " + ops::format_oracle(r);
  }
  const bool ok = passed == static_cast<int>(results.size()) && secs < budget;
  std::ostringstream d;
  d << what << ": " << passed << "/" << results.size() << " oracles pass";
  for (const auto& r : results) d << "; " << r.name << "=" << num(r.measured);
  d << "; runtime " << num(secs) << " s (budget " << budget << " s)" << worst;
  report(id, ok ? Status::kPass : Status::kFail, d.str());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Status from_verdicts(const trainer::AblationReport& r) {
  bool warn = false;
  for (const auto& v : r.verdicts) {
    if (v.status == trainer::VerdictStatus::kFail) return Status::kFail;
    warn = warn || v.status == trainer::VerdictStatus::kWarn;
  }
  return warn ? Status::kWarn : Status::kPass;
}

std::string verdict_text(const trainer::AblationReport& r) {
  std::string s;
  for (const auto& v : r.verdicts) s += (s.empty() ? "" : "; ") + trainer::format_verdict(v);
  return s;
}

bool same_values(const nn::BlockVector& a, const nn::BlockVector& b) {
  return std::equal(a.values().begin(), a.values().end(), b.values().begin(), b.values().end());
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work =
      argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "unigrpo_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  oracle_criterion(1, "finite-difference gradient checks", {ops::gradient_oracles}, 60.0);
  oracle_criterion(2, "group advantages", {ops::advantage_oracles}, 60.0);
  oracle_criterion(3, "ratio normalization centering", {ops::ratio_norm_oracles}, 120.0);
  oracle_criterion(4, "latent KL identity", {ops::latent_kl_oracles}, 120.0);
  oracle_criterion(5, "SDE construction", {ops::sde_oracles}, 120.0);
  oracle_criterion(6, "rollout evaluation budget", {ops::rollout_budget_oracles}, 60.0);

  // Default desk configuration, pretrained once and shared by every run.
  trainer::TrainConfig config;
  config.pretrain_dir = (work / "pretrained").string();
  auto t0 = std::chrono::steady_clock::now();
  const auto pre = trainer::pretrain(config);
  trainer::save_pretrained(config.pretrain_dir, pre, config);
  const double pretrain_secs = since(t0);
  std::cout << "pretraining: text greedy accuracy " << num(pre.text_accuracy)
            << ", flow min quadrant accuracy " << num(pre.flow_min_quadrant_accuracy) << ", "
            << num(pretrain_secs) << " s" << std::endl;

  trainer::AblationOptions ab;
  ab.out_dir = work / "ablations";
  ab.pretrained = &pre.policies;
  ab.log = [](const std::string& s) { std::cout << "  " << s << std::endl; };

  t0 = std::chrono::steady_clock::now();
  const auto comp = trainer::run_ablation(trainer::AblationMode::kComponentSweep, config, ab);
  double secs = since(t0);
  report(7, secs < 1800.0 ? from_verdicts(comp) : Status::kFail,
         verdict_text(comp) + "; runtime " + num(secs) + " s (budget 1800 s)");

  t0 = std::chrono::steady_clock::now();
  const auto reg = trainer::run_ablation(trainer::AblationMode::kRegSweep, config, ab);
  secs = since(t0);
  report(8, secs < 2700.0 ? from_verdicts(reg) : Status::kFail,
         verdict_text(reg) + "; runtime " + num(secs) + " s (budget 2700 s)");

  t0 = std::chrono::steady_clock::now();
  const auto cfg = trainer::run_ablation(trainer::AblationMode::kCfgOnVsOff, config, ab);
  secs = since(t0);
  report(9, from_verdicts(cfg), verdict_text(cfg) + "; runtime " + num(secs) + " s");

  {  // Determinism and persistence.
    std::vector<std::string> failures;
    trainer::TrainConfig c = config;
    c.seed = config.ablation_seeds.front();
    const fs::path reference = ab.out_dir / "runs" / trainer::config_hash(c);

    trainer::TrainOptions o;
    o.pretrained = &pre.policies;
    o.out_dir = work / "rerun";
    const auto rerun = trainer::train(c, o);
    if (slurp(o.out_dir / "metrics.csv") != slurp(reference / "metrics.csv")) {
      failures.push_back("re-run metrics differ");
    }

    const fs::path resumed = work / "resumed";
    o.out_dir = resumed;
    o.stop_after = 137;
    trainer::train(c, o);
    o.stop_after.reset();
    o.resume = true;
    const auto finished = trainer::train(c, o);
    if (slurp(resumed / "metrics.csv") != slurp(reference / "metrics.csv")) {
      failures.push_back("resumed metrics differ");
    }
    if (!same_values(finished.final_policies.text, rerun.final_policies.text) ||
        !same_values(finished.final_policies.flow, rerun.final_policies.flow)) {
      failures.push_back("resumed parameters differ");
    }

    const auto state = nn::read_checkpoint(resumed / "state.ckpt");
    nn::write_checkpoint(work / "copy.ckpt", state);
    if (slurp(work / "copy.ckpt") != slurp(resumed / "state.ckpt")) {
      failures.push_back("checkpoint rewrite is not byte-identical");
    }
    const auto loaded = trainer::load_run_policies(resumed / "state.ckpt", c);
    if (!same_values(loaded.text, finished.final_policies.text) ||
        !same_values(loaded.flow, finished.final_policies.flow)) {
      failures.push_back("checkpoint reload differs from in-memory parameters");
    }
    const auto pre_back = trainer::load_pretrained(config.pretrain_dir, config);
    if (!same_values(pre_back.text, pre.policies.text) ||
        !same_values(pre_back.flow, pre.policies.flow)) {
      failures.push_back("pretrained checkpoint reload differs");
    }

    std::string detail = "re-run, resume (interrupted after update 137) and checkpoint round trips";
    detail += failures.empty() ? " are bit-identical" : ": ";
    for (std::size_t i = 0; i < failures.size(); ++i) detail += (i ? ", " : "") + failures[i];
    report(10, failures.empty() ? Status::kPass : Status::kFail, detail);
  }

  const int failed = static_cast<int>(std::count_if(
      g_lines.begin(), g_lines.end(), [](const Line& l) { return l.status == Status::kFail; }));
  std::cout << "acceptance: " << g_lines.size() - failed << "/" << g_lines.size()
            << " criteria without FAIL" << std::endl;
  return failed == 0 ? 0 : 1;
}
