// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/trainer/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace unigrpo::trainer {
namespace {

namespace fs = std::filesystem;

struct ModeName {
  AblationMode mode;
  std::string_view name;
};

constexpr ModeName kModes[] = {
    {AblationMode::kCfgOnVsOff, "cfg-on-vs-off"},
    {AblationMode::kRegSweep, "reg-sweep"},
    {AblationMode::kComponentSweep, "component-sweep"},
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A completed run whose manifest records the same resolved config.
bool reusable(const fs::path& dir, const TrainConfig& config) {
  if (!fs::exists(dir / "status.json") || !fs::exists(dir / "manifest.json")) return false;
  try {
    const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    const auto status = nlohmann::json::parse(read_file(dir / "status.json"));
    return status.value("completed", false) &&
           manifest.at("resolved_config").get<std::string>() == render_config(config);
  } catch (const std::exception&) {
    return false;
  }
}

double mean_of(const std::vector<const AblationRun*>& runs, double (AblationRun::*fn)() const) {
  double s = 0.0;
  for (const auto* r : runs) s += (r->*fn)();
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

Verdict at_least(std::string name, double measured, double threshold, std::string detail,
                 VerdictStatus on_miss = VerdictStatus::kFail) {
  return {std::move(name), measured >= threshold ? VerdictStatus::kPass : on_miss, measured,
          threshold, std::move(detail)};
}

std::string_view status_name(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::kPass:
      return "PASS";
    case VerdictStatus::kFail:
      return "FAIL";
    case VerdictStatus::kWarn:
      return "WARN";
  }
  return "FAIL";
}

std::vector<Verdict> verdicts_for(AblationMode mode, const std::vector<AblationRun>& runs) {
  std::map<std::string, std::vector<const AblationRun*>> by;
  for (const auto& r : runs) by[r.variant].push_back(&r);
  std::vector<Verdict> out;
  switch (mode) {
    case AblationMode::kComponentSweep: {
      const double uni = mean_of(by["unified"], &AblationRun::final_eval);
      const double base = mean_of(by["unified"], &AblationRun::baseline_eval);
      const double flow_only = mean_of(by["flow-only"], &AblationRun::final_eval);
      const double text_only = mean_of(by["text-only"], &AblationRun::final_eval);
      out.push_back(at_least("improvement", uni - base, 0.05,
                             "unified=" + short_fmt(uni) + " baseline=" + short_fmt(base)));
      out.push_back(at_least("unified-vs-flow-only", uni - flow_only, -0.01,
                             "unified=" + short_fmt(uni) + " flow-only=" + short_fmt(flow_only)));
      out.push_back(at_least("unified-vs-text-only", uni - text_only, -0.01,
                             "unified=" + short_fmt(uni) + " text-only=" + short_fmt(text_only)));
      break;
    }
    case AblationMode::kRegSweep: {
      const double none_drift = mean_of(by["none"], &AblationRun::final_drift);
      const double mse_drift = mean_of(by["velocity-mse"], &AblationRun::final_drift);
      const double none_peak = mean_of(by["none"], &AblationRun::peak_eval);
      const double mse_final = mean_of(by["velocity-mse"], &AblationRun::final_eval);
      const double ratio = mse_drift > 0.0 ? none_drift / mse_drift : 0.0;
      out.push_back(at_least("drift-suppression", ratio, 5.0,
                             "none_drift=" + short_fmt(none_drift) +
                                 " velocity_mse_drift=" + short_fmt(mse_drift)));
      out.push_back(at_least("reward-retained", mse_final - none_peak, -0.03,
                             "velocity_mse_final=" + short_fmt(mse_final) +
                                 " none_peak=" + short_fmt(none_peak)));
      break;
    }
    case AblationMode::kCfgOnVsOff: {
      const double off = mean_of(by["cfg-free"], &AblationRun::final_eval);
      const double on = mean_of(by["cfg"], &AblationRun::final_eval);
      const double off_evals = mean_of(by["cfg-free"], &AblationRun::evals_per_step);
      const double on_evals = mean_of(by["cfg"], &AblationRun::evals_per_step);
      out.push_back(at_least("cfg-free-reward", off - on, -0.03,
                             "cfg_free=" + short_fmt(off) + " cfg=" + short_fmt(on),
                             VerdictStatus::kWarn));
      Verdict budget{"rollout-budget", VerdictStatus::kFail,
                     off_evals > 0.0 ? on_evals / off_evals : 0.0, 2.0,
                     "evals_per_step cfg_free=" + short_fmt(off_evals) +
                         " cfg=" + short_fmt(on_evals)};
      if (off_evals == 1.0 && on_evals == 2.0) budget.status = VerdictStatus::kPass;
      out.push_back(budget);
      break;
    }
  }
  return out;
}

void write_reports(const fs::path& dir, const AblationReport& report) {
  fs::create_directories(dir);
  int max_update = 0;
  for (const auto& r : report.runs) {
    if (!r.rows.empty()) max_update = std::max(max_update, r.rows.back().update);
  }
  std::ofstream csv(dir / "comparison.csv");
  csv << "update";
  for (const auto& r : report.runs) {
    const std::string p = r.variant + ".s" + std::to_string(r.seed);
    csv << ',' << p << ".train_reward," << p << ".eval_reward," << p << ".velocity_drift";
  }
  csv << '\n';
  for (int u = 0; u <= max_update; ++u) {
    csv << u;
    for (const auto& r : report.runs) {
      const MetricsRow* row = nullptr;
      for (const auto& m : r.rows) {
        if (m.update == u) row = &m;
      }
      if (!row) {
        csv << ",,,";
        continue;
      }
      csv << ',' << (u == 0 ? std::string() : fmt(row->train_reward)) << ','
          << (row->eval_reward ? fmt(*row->eval_reward) : "") << ','
          << (row->velocity_drift ? fmt(*row->velocity_drift) : "");
    }
    csv << '\n';
  }

  std::ofstream summary(dir / "summary.csv");
  summary << "variant,seed,baseline_eval,final_eval,peak_eval,final_drift,evals_per_step,run_dir\n";
  for (const auto& r : report.runs) {
    summary << r.variant << ',' << r.seed << ',' << fmt(r.baseline_eval()) << ','
            << fmt(r.final_eval()) << ',' << fmt(r.peak_eval()) << ',' << fmt(r.final_drift())
            << ',' << fmt(r.evals_per_step()) << ',' << r.dir.string() << '\n';
  }

  std::ofstream verdicts(dir / "verdicts.txt");
  for (const auto& v : report.verdicts) verdicts << format_verdict(v) << '\n';
}

}  // namespace

std::string_view ablation_mode_name(AblationMode mode) {
  for (const auto& m : kModes) {
    if (m.mode == mode) return m.name;
  }
  return "unknown";
}

AblationMode parse_ablation_mode(std::string_view name) {
  std::string valid;
  for (const auto& m : kModes) {
    if (m.name == name) return m.mode;
    valid += (valid.empty() ? "" : ", ") + std::string(m.name);
  }
  throw ConfigError("unknown ablation mode '" + std::string(name) + "' (valid modes: " + valid +
                    ")");
}

std::vector<AblationVariant> ablation_variants(AblationMode mode, const TrainConfig& base) {
  std::vector<AblationVariant> out;
  switch (mode) {
    case AblationMode::kCfgOnVsOff: {
      TrainConfig off = base, on = base;
      off.train_cfg = false;
      on.train_cfg = true;
      out.push_back({"cfg-free", off});
      out.push_back({"cfg", on});
      break;
    }
    case AblationMode::kRegSweep:
      for (auto reg : {flow::RegMode::kNone, flow::RegMode::kLatentKl,
                       flow::RegMode::kVelocityMse}) {
        TrainConfig c = base;
        c.reg = reg;
        out.push_back({std::string(flow::reg_mode_name(reg)), c});
      }
      break;
    case AblationMode::kComponentSweep:
      for (auto comp : {Component::kUnified, Component::kFlowOnly, Component::kTextOnly}) {
        TrainConfig c = base;
        c.component = comp;
        out.push_back({std::string(component_name(comp)), c});
      }
      break;
  }
  return out;
}

double AblationRun::baseline_eval() const {
  return rows.empty() ? 0.0 : rows.front().eval_reward.value_or(0.0);
}

double AblationRun::final_eval() const {
  return rows.empty() ? 0.0 : rows.back().eval_reward.value_or(0.0);
}

double AblationRun::peak_eval() const {
  double best = 0.0;
  for (const auto& r : rows) {
    if (r.eval_reward) best = std::max(best, *r.eval_reward);
  }
  return best;
}

double AblationRun::final_drift() const {
  return rows.empty() ? 0.0 : rows.back().velocity_drift.value_or(0.0);
}

double AblationRun::evals_per_step() const {
  double s = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.update == 0) continue;
    s += r.velocity_evals_per_step;
    ++n;
  }
  return n ? s / n : 0.0;
}

std::string format_verdict(const Verdict& v) {
  return "VERDICT " + v.name + " " + std::string(status_name(v.status)) +
         " measured=" + short_fmt(v.measured) + " threshold=" + short_fmt(v.threshold) + " " +
         v.detail;
}

bool AblationReport::passed() const {
  return std::none_of(verdicts.begin(), verdicts.end(),
                      [](const Verdict& v) { return v.status == VerdictStatus::kFail; });
}

std::string config_hash(const TrainConfig& config) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char ch : render_config(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

AblationReport run_ablation(AblationMode mode, const TrainConfig& base,
                            const AblationOptions& options) {
  validate(base);
  if (base.ablation_seeds.empty()) throw ConfigError("ablation_seeds must not be empty");
  const Policies pretrained = options.pretrained
                                  ? *options.pretrained
                                  : load_pretrained(base.pretrain_dir, base);
  AblationReport report;
  report.mode = mode;
  for (const auto& variant : ablation_variants(mode, base)) {
    for (uint64_t seed : base.ablation_seeds) {
      TrainConfig c = variant.config;
      c.seed = seed;
      AblationRun run;
      run.variant = variant.name;
      run.seed = seed;
      run.dir = options.out_dir / "runs" / config_hash(c);
      if (reusable(run.dir, c)) {
        run.rows = read_metrics(run.dir / "metrics.csv");
        run.reused = true;
      } else {
        TrainOptions t;
        t.out_dir = run.dir;
        t.pretrained = &pretrained;
        t.config_text = render_config(c);
        t.command = "ablate --mode " + std::string(ablation_mode_name(mode)) + " (" +
                    variant.name + ", seed " + std::to_string(seed) + ")";
        run.rows = train(c, t).rows;
      }
      if (options.log) {
        options.log(variant.name + " seed " + std::to_string(seed) +
                    (run.reused ? " (reused)" : "") + ": baseline " +
                    short_fmt(run.baseline_eval()) + " final " + short_fmt(run.final_eval()) +
                    " drift " + short_fmt(run.final_drift()));
      }
      report.runs.push_back(std::move(run));
    }
  }
  report.verdicts = verdicts_for(mode, report.runs);
  write_reports(options.out_dir / std::string(ablation_mode_name(mode)), report);
  return report;
}

}  // namespace unigrpo::trainer
