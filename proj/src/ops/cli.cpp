// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/ops/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "unigrpo/ops/oracles.hpp"
#include "unigrpo/trainer/ablation.hpp"
#include "unigrpo/trainer/trainer.hpp"
#include "unigrpo/version.hpp"

namespace unigrpo::ops {
namespace {

namespace fs = std::filesystem;
using trainer::TrainConfig;

struct Args {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out;
  bool resume = false;
  std::string mode;
  bool train_cfg = false;
  std::optional<int> stop_after;
  std::string run_dir;
  bool corrupt_gradient = false;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Config from --config (or defaults), plus its verbatim text.
std::pair<TrainConfig, std::string> load(const Args& a) {
  if (a.config_path.empty()) return {TrainConfig{}, std::string()};
  std::string text = read_text(a.config_path);
  return {trainer::parse_config(text), text};
}

std::string command_line(const std::vector<std::string>& args) {
  std::string s = "unigrpo";
  for (const auto& a : args) s += " " + a;
  return s;
}

int cmd_pretrain(const Args& a, std::ostream& out) {
  auto [config, text] = load(a);
  if (a.seed) config.pretrain.seed = *a.seed;
  const fs::path dir = a.out.empty() ? fs::path(config.pretrain_dir) : fs::path(a.out);
  trainer::validate(config);
  const auto result = trainer::pretrain(config);
  trainer::save_pretrained(dir, result, config);
  out << "text greedy accuracy " << num(result.text_accuracy) << "\n";
  out << "flow min quadrant accuracy " << num(result.flow_min_quadrant_accuracy) << "\n";
  for (int i = 0; i < env::kAttributeTuples; ++i) {
    out << "  tuple " << i << " quadrant accuracy " << num(result.flow_quadrant_accuracy[i])
        << "\n";
  }
  out << "wrote " << (dir / "text.ckpt").string() << ", " << (dir / "flow.ckpt").string()
      << ", " << (dir / "report.json").string() << "\n";
  return kExitOk;
}

int cmd_train(const Args& a, const std::vector<std::string>& argv, std::ostream& out) {
  auto [config, text] = load(a);
  if (a.seed) config.seed = *a.seed;
  trainer::validate(config);
  const fs::path dir =
      a.out.empty() ? fs::path("runs") / ("seed" + std::to_string(config.seed)) : fs::path(a.out);
  if (a.resume && fs::exists(dir / "manifest.json")) {
    std::ifstream in(dir / "manifest.json");
    const auto manifest = nlohmann::json::parse(in);
    if (manifest.at("resolved_config").get<std::string>() != trainer::render_config(config)) {
      throw ConfigError("config differs from the run being resumed in " + dir.string());
    }
  }
  trainer::TrainOptions opts;
  opts.out_dir = dir;
  opts.resume = a.resume;
  opts.stop_after = a.stop_after;
  opts.config_text = text;
  opts.command = command_line(argv);
  opts.on_row = [&](const trainer::MetricsRow& r) {
    if (!r.eval_reward) return;
    out << "update " << r.update << " eval_reward " << num(*r.eval_reward) << " text_accuracy "
        << num(r.text_accuracy.value_or(0.0)) << " velocity_drift "
        << num(r.velocity_drift.value_or(0.0)) << "\n";
    out.flush();
  };
  const auto result = trainer::train(config, opts);
  out << (result.completed ? "completed " : "stopped after update ")
      << result.rows.back().update << " updates; metrics in " << (dir / "metrics.csv").string()
      << "\n";
  return kExitOk;
}

int cmd_ablate(const Args& a, std::ostream& out) {
  auto [config, text] = load(a);
  const auto mode = trainer::parse_ablation_mode(a.mode);
  if (a.seed) config.ablation_seeds = {*a.seed};
  // The paired CFG comparison sets train_cfg per variant itself.
  if (a.train_cfg && mode != trainer::AblationMode::kCfgOnVsOff) config.train_cfg = true;
  trainer::AblationOptions opts;
  opts.out_dir = a.out.empty() ? fs::path("ablations") : fs::path(a.out);
  opts.log = [&](const std::string& line) {
    out << line << "\n";
    out.flush();
  };
  const auto report = trainer::run_ablation(mode, config, opts);
  for (const auto& v : report.verdicts) out << trainer::format_verdict(v) << "\n";
  out << "report in " << (opts.out_dir / std::string(trainer::ablation_mode_name(mode))).string()
      << "\n";
  return report.passed() ? kExitOk : kExitVerification;
}

int cmd_verify(const Args& a, std::ostream& out) {
  VerifyOptions opts;
  if (a.seed) opts.seed = *a.seed;
  opts.corrupt_gradient = a.corrupt_gradient;
  const auto results = run_all_oracles(opts);
  int passed = 0;
  for (const auto& r : results) {
    out << format_oracle(r) << "\n";
    passed += r.passed;
  }
  out << "verify: " << passed << "/" << results.size() << " oracles passed\n";
  return all_passed(results) ? kExitOk : kExitVerification;
}

int cmd_eval(const Args& a, std::ostream& out) {
  auto [config, text] = load(a);
  if (a.seed) config.eval_seed = *a.seed;
  trainer::validate(config);
  const auto ref = trainer::load_pretrained(config.pretrain_dir, config);
  const auto policies = a.run_dir.empty()
                            ? ref
                            : trainer::load_run_policies(fs::path(a.run_dir) / "state.ckpt", config);
  const auto r = trainer::evaluate(policies, ref, config);
  const nlohmann::json j{{"eval_reward", r.reward},
                         {"text_accuracy", r.text_accuracy},
                         {"velocity_drift", r.velocity_drift},
                         {"non_finite", r.non_finite},
                         {"velocity_evals", r.velocity_evals},
                         {"prompts", config.eval_prompts},
                         {"source", a.run_dir.empty() ? config.pretrain_dir : a.run_dir}};
  out << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint RL fine-tuning of a reasoning policy and a flow-matching sampler on a "
               "synthetic 2D task",
               "unigrpo"};
  app.set_version_flag("--version", std::string(build_id()));
  app.require_subcommand(1, 1);
  Args a;
  uint64_t seed = 0;

  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", a.config_path, "Config file (key = value lines)");
  };
  auto add_seed = [&](CLI::App* c, const std::string& help) {
    c->add_option("--seed", seed, help);
  };

  auto* pre = app.add_subcommand("pretrain", "Pretrain both policies on synthetic data");
  add_config(pre);
  add_seed(pre, "Overrides pretrain.seed");
  pre->add_option("--out", a.out, "Output directory (default: pretrain_dir)");

  auto* tr = app.add_subcommand("train", "Run joint RL training from pretrained checkpoints");
  add_config(tr);
  add_seed(tr, "Overrides seed");
  tr->add_option("--out", a.out, "Run directory (default: runs/seed<N>)");
  tr->add_flag("--resume", a.resume, "Continue from the run directory's latest checkpoint");
  tr->add_option("--stop-after", a.stop_after)->group("");

  auto* ab = app.add_subcommand("ablate", "Run paired ablation configurations");
  add_config(ab);
  add_seed(ab, "Single seed instead of ablation_seeds");
  ab->add_option("--out", a.out, "Output directory (default: ablations)");
  ab->add_option("--mode", a.mode, "cfg-on-vs-off | reg-sweep | component-sweep")->required();
  ab->add_flag("--train-cfg", a.train_cfg, "Use guided rollouts in reg/component sweeps");

  auto* ve = app.add_subcommand("verify", "Run the analytic and Monte-Carlo self-checks");
  add_seed(ve, "Seed for oracle randomness");
  ve->add_flag("--corrupt-gradient", a.corrupt_gradient)->group("");

  auto* ev = app.add_subcommand("eval", "Evaluate pretrained or trained policies");
  add_config(ev);
  add_seed(ev, "Overrides eval_seed");
  ev->add_option("--run", a.run_dir, "Run directory whose state.ckpt to evaluate");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (app.get_subcommands().front()->count("--seed")) a.seed = seed;

  try {
    if (pre->parsed()) return cmd_pretrain(a, out);
    if (tr->parsed()) return cmd_train(a, args, out);
    if (ab->parsed()) return cmd_ablate(a, out);
    if (ve->parsed()) return cmd_verify(a, out);
    return cmd_eval(a, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace unigrpo::ops
