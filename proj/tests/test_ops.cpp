// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "unigrpo/ops/cli.hpp"
#include "unigrpo/ops/oracles.hpp"
#include "unigrpo/trainer/trainer.hpp"

using namespace unigrpo;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = ops::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

// A workspace with a small config and pretrained checkpoints, shared by the
// cases below.
struct Workspace {
  fs::path root;
  fs::path config;

  Workspace() {
    root = fs::temp_directory_path() / "unigrpo_test_ops";
    fs::remove_all(root);
    fs::create_directories(root);
    config = root / "small.conf";
    std::ofstream(config) << "# small run for tests\n"
                          << "pretrain_dir = " << (root / "pretrained").string() << "\n"
                          << "pretrain.pairs = 600\n"
                          << "pretrain.text_epochs = 5\n"
                          << "pretrain.flow_steps = 300\n"
                          << "total_updates = 4\n"
                          << "eval_every = 2\n"
                          << "eval_prompts = 24\n"
                          << "checkpoint_every = 1\n"
                          << "ablation_seeds = 3\n";
    const auto r = cli({"pretrain", "--config", config.string()});
    REQUIRE(r.code == 0);
  }
};

const Workspace& workspace() {
  static const Workspace w;
  return w;
}

}  // namespace

TEST_CASE("verify passes on a fresh build and fails with a corrupted gradient") {
  const auto ok = cli({"verify"});
  CHECK(ok.code == ops::kExitOk);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  CHECK(ok.out.find("ORACLE gradient/text-surrogate PASS") != std::string::npos);

  const auto bad = cli({"verify", "--corrupt-gradient"});
  CHECK(bad.code == ops::kExitVerification);
  CHECK(bad.out.find("ORACLE gradient/text-surrogate FAIL") != std::string::npos);
  CHECK(bad.out.find("ORACLE gradient/flow-surrogate FAIL") != std::string::npos);
  CHECK(bad.out.find("ORACLE advantage/hand-values PASS") != std::string::npos);
}

TEST_CASE("oracle lines are machine-parseable") {
  ops::VerifyOptions o;
  const std::regex line(R"(ORACLE [a-z-]+/[a-z0-9-]+ (PASS|FAIL) measured=\S+ tolerance<=\S+.*)");
  for (const auto& r : ops::advantage_oracles(o)) CHECK(std::regex_match(ops::format_oracle(r), line));
}

TEST_CASE("usage and config errors map to distinct exit codes") {
  CHECK(cli({}).code == ops::kExitConfig);
  CHECK(cli({"frobnicate"}).code == ops::kExitConfig);

  const fs::path dir = fs::temp_directory_path() / "unigrpo_test_ops_errors";
  fs::create_directories(dir);
  std::ofstream(dir / "typo.conf") << "seed = 1\ngroup_sise = 8\n";
  const auto typo = cli({"train", "--config", (dir / "typo.conf").string()});
  CHECK(typo.code == ops::kExitConfig);
  CHECK(typo.err.find("group_sise") != std::string::npos);

  const auto missing = cli({"train", "--config", (dir / "nope.conf").string()});
  CHECK(missing.code == ops::kExitConfig);

  const auto mode = cli({"ablate", "--mode", "everything"});
  CHECK(mode.code == ops::kExitConfig);
  CHECK(mode.err.find("reg-sweep") != std::string::npos);
  CHECK(mode.err.find("component-sweep") != std::string::npos);
  CHECK(mode.err.find("cfg-on-vs-off") != std::string::npos);

  std::ofstream(dir / "nopre.conf") << "pretrain_dir = " << (dir / "absent").string() << "\n";
  const auto nopre =
      cli({"train", "--config", (dir / "nopre.conf").string(), "--out", (dir / "run").string()});
  CHECK(nopre.code == ops::kExitCheckpoint);
  fs::remove_all(dir);
}

TEST_CASE("pretrain writes reloadable checkpoints and an accuracy report") {
  const auto& w = workspace();
  const fs::path pre = w.root / "pretrained";
  CHECK(fs::exists(pre / "text.ckpt"));
  CHECK(fs::exists(pre / "flow.ckpt"));
  const auto report = nlohmann::json::parse(slurp(pre / "report.json"));
  CHECK(report.contains("text_greedy_accuracy"));
  CHECK(report.contains("flow_quadrant_accuracy"));
  CHECK(report["flow_quadrant_accuracy"].size() == env::kAttributeTuples);

  const auto config = trainer::load_config(w.config);
  const auto a = trainer::load_pretrained(pre, config);
  const auto again = trainer::pretrain(config).policies;
  CHECK(std::equal(a.text.values().begin(), a.text.values().end(), again.text.values().begin()));
  CHECK(std::equal(a.flow.values().begin(), a.flow.values().end(), again.flow.values().begin()));

  // Architecture mismatch against the stored checkpoint.
  const fs::path other = w.root / "other.conf";
  std::ofstream(other) << slurp(w.config) << "arch.flow_hidden = 32\n";
  const auto r = cli({"train", "--config", other.string(), "--out", (w.root / "mismatch").string()});
  CHECK(r.code == ops::kExitCheckpoint);
}

TEST_CASE("train writes a manifest and resumes to the same metrics") {
  const auto& w = workspace();
  const std::string cfg = w.config.string();
  const fs::path full = w.root / "full";
  const fs::path split = w.root / "split";
  REQUIRE(cli({"train", "--config", cfg, "--out", full.string()}).code == 0);

  const auto manifest = nlohmann::json::parse(slurp(full / "manifest.json"));
  CHECK(manifest["config_text"].get<std::string>() == slurp(w.config));
  CHECK(manifest.contains("build_id"));
  CHECK(manifest.contains("start_time"));
  CHECK(count_lines(slurp(full / "metrics.csv")) == 1 + 5);

  REQUIRE(cli({"train", "--config", cfg, "--out", split.string(), "--stop-after", "2"}).code == 0);
  CHECK(count_lines(slurp(split / "metrics.csv")) == 1 + 3);
  REQUIRE(cli({"train", "--config", cfg, "--out", split.string(), "--resume"}).code == 0);
  CHECK(slurp(split / "metrics.csv") == slurp(full / "metrics.csv"));
  CHECK(slurp(split / "groups.jsonl") == slurp(full / "groups.jsonl"));

  // Resuming with a different config is refused.
  const fs::path other = w.root / "seed9.conf";
  std::ofstream(other) << slurp(w.config) << "seed = 9\n";
  CHECK(cli({"train", "--config", other.string(), "--out", split.string(), "--resume"}).code ==
        ops::kExitConfig);

  const auto ev = cli({"eval", "--config", cfg, "--run", full.string()});
  REQUIRE(ev.code == 0);
  const auto j = nlohmann::json::parse(ev.out);
  CHECK(j["eval_reward"].get<double>() ==
        trainer::read_metrics(full / "metrics.csv").back().eval_reward.value());
}

TEST_CASE("reg-sweep emits three runs sharing seeds, with parseable verdicts") {
  const auto& w = workspace();
  const fs::path out = w.root / "ablate";
  const auto r = cli({"ablate", "--config", w.config.string(), "--mode", "reg-sweep", "--out",
                      out.string()});
  CHECK((r.code == ops::kExitOk || r.code == ops::kExitVerification));
  const std::string summary = slurp(out / "reg-sweep" / "summary.csv");
  CHECK(count_lines(summary) == 1 + 3);
  CHECK(summary.find("\nnone,3,") != std::string::npos);
  CHECK(summary.find("\nlatent-kl,3,") != std::string::npos);
  CHECK(summary.find("\nvelocity-mse,3,") != std::string::npos);
  const std::regex verdict(R"(VERDICT [a-z-]+ (PASS|FAIL|WARN) measured=\S+ threshold=\S+ .*)");
  int verdicts = 0;
  std::istringstream lines(r.out);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("VERDICT", 0) != 0) continue;
    CHECK(std::regex_match(line, verdict));
    ++verdicts;
  }
  CHECK(verdicts == 2);
  const std::string header = slurp(out / "reg-sweep" / "comparison.csv").substr(0, 200);
  CHECK(header.find("none.s3.eval_reward") != std::string::npos);

  // A second invocation reuses the completed runs.
  const auto again = cli({"ablate", "--config", w.config.string(), "--mode", "reg-sweep",
                          "--out", out.string()});
  CHECK(again.out.find("(reused)") != std::string::npos);
}

TEST_CASE("cfg-on-vs-off reports one and two velocity evaluations per step") {
  const auto& w = workspace();
  const fs::path out = w.root / "ablate_cfg";
  const auto r = cli({"ablate", "--config", w.config.string(), "--mode", "cfg-on-vs-off",
                      "--out", out.string()});
  CHECK(r.out.find("VERDICT rollout-budget PASS") != std::string::npos);
  const std::string summary = slurp(out / "cfg-on-vs-off" / "summary.csv");
  CHECK(summary.find("cfg-free,3,") != std::string::npos);
  std::istringstream lines(summary);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    CHECK(std::stod(f[6]) == (f[0] == "cfg" ? 2.0 : 1.0));
  }
}
