// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/trainer/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "unigrpo/flow/flow_objective.hpp"
#include "unigrpo/nn/checkpoint.hpp"
#include "unigrpo/version.hpp"

namespace unigrpo::trainer {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int threads = std::min(thread_count(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

flow::Schedule train_schedule(const TrainConfig& c) {
  return flow::timestep_schedule(c.train_timesteps, c.timestep_shift);
}

bool trains_text(const TrainConfig& c) { return c.component != Component::kFlowOnly; }
bool trains_flow(const TrainConfig& c) {
  return c.component != Component::kTextOnly && c.lambda > 0.0;
}

struct Included {
  std::vector<text::ReasoningTrace> traces;
  std::vector<flow::FlowTrajectory> trajectories;
  std::vector<double> advantages;
  int groups = 0;
};

Included collect(std::span<const GroupRollout> batch) {
  Included in;
  for (const auto& g : batch) {
    if (g.degenerate) continue;
    ++in.groups;
    in.traces.insert(in.traces.end(), g.traces.begin(), g.traces.end());
    in.trajectories.insert(in.trajectories.end(), g.trajectories.begin(), g.trajectories.end());
    in.advantages.insert(in.advantages.end(), g.advantages.begin(), g.advantages.end());
  }
  return in;
}

text::TextLossConfig text_loss_config(const TrainConfig& c) {
  return {c.clip_eps_text, c.beta_txt};
}

flow::FlowLossConfig flow_loss_config(const TrainConfig& c) {
  return {c.clip_eps_flow, c.reg, c.reg_weight()};
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << line << '\n';
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

// Keeps lines for updates <= last (header lines always kept).
void truncate_csv(const fs::path& path, int last) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string line, kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    if (std::stoi(line.substr(0, line.find(','))) <= last) kept += line + "\n";
  }
  in.close();
  write_file(path, kept);
}

void truncate_jsonl(const fs::path& path, int last) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (json::parse(line).at("update").get<int>() <= last) kept += line + "\n";
  }
  in.close();
  write_file(path, kept);
}

void save_state(const fs::path& path, const Policies& p, const Optimizers& o, int update) {
  std::vector<nn::TensorRecord> records;
  nn::append_blocks(records, p.text, "text/");
  nn::append_blocks(records, p.flow, "flow/");
  nn::append_blocks(records, o.text.first_moment, "adam.text.m/");
  nn::append_blocks(records, o.text.second_moment, "adam.text.v/");
  nn::append_blocks(records, o.flow.first_moment, "adam.flow.m/");
  nn::append_blocks(records, o.flow.second_moment, "adam.flow.v/");
  nn::append_scalar(records, "adam.text.step", static_cast<double>(o.text.step));
  nn::append_scalar(records, "adam.flow.step", static_cast<double>(o.flow.step));
  nn::append_scalar(records, "update", update);
  nn::write_checkpoint(path, records);
}

int load_state(const fs::path& path, Policies& p, Optimizers& o) {
  const auto records = nn::read_checkpoint(path);
  nn::load_blocks(records, p.text, "text/");
  nn::load_blocks(records, p.flow, "flow/");
  nn::load_blocks(records, o.text.first_moment, "adam.text.m/");
  nn::load_blocks(records, o.text.second_moment, "adam.text.v/");
  nn::load_blocks(records, o.flow.first_moment, "adam.flow.m/");
  nn::load_blocks(records, o.flow.second_moment, "adam.flow.v/");
  o.text.step = static_cast<int64_t>(nn::find_scalar(records, "adam.text.step"));
  o.flow.step = static_cast<int64_t>(nn::find_scalar(records, "adam.flow.step"));
  return static_cast<int>(nn::find_scalar(records, "update"));
}

json group_record(int update, const GroupRollout& g) {
  json traces = json::array();
  for (const auto& t : g.traces) traces.push_back(t.tokens);
  return {{"update", update},         {"prompt_id", g.prompt.id},
          {"rewards", g.rewards},     {"advantages", g.advantages},
          {"degenerate", g.degenerate}, {"traces", traces}};
}

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

int thread_count() {
  if (const char* env = std::getenv("UNIGRPO_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

std::vector<double> group_advantages(std::span<const double> rewards, double eps_std) {
  if (rewards.size() < 2) throw ConfigError("group advantages need at least two rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (!(sd >= eps_std)) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

bool is_degenerate(std::span<const double> rewards, double eps_std) {
  const auto adv = group_advantages(rewards, eps_std);
  for (double a : adv) {
    if (a != 0.0) return false;
  }
  return true;
}

std::vector<env::Prompt> batch_prompts(const TrainConfig& config, uint64_t update) {
  auto rng = Rng::stream(config.seed, "prompts", {update});
  std::vector<env::Prompt> prompts;
  for (int i = 0; i < config.prompts_per_batch; ++i) prompts.push_back(env::sample_prompt(rng));
  return prompts;
}

GroupRollout rollout_group(const env::Prompt& prompt, int prompt_index, uint64_t update,
                           const Policies& old, const TrainConfig& config) {
  const auto schedule = train_schedule(config);
  const int g = config.group_size;
  GroupRollout out;
  out.prompt = prompt;
  out.traces.resize(g);
  out.trajectories.resize(g);
  out.rewards.resize(g);
  std::vector<bool> bad(g, false);
  parallel_for(g, [&](int m) {
    auto rng = Rng::stream(config.seed, "member",
                           {update, static_cast<uint64_t>(prompt_index), static_cast<uint64_t>(m)});
    text::ReasoningTrace trace =
        config.component == Component::kFlowOnly
            ? text::greedy_trace(old.text, config.text_arch, prompt)
            : text::sample_trace(old.text, config.text_arch, prompt, config.temperature, rng);
    const flow::SdeWindow window{
        flow::sample_window_start(rng, config.sde_window_lo, config.sde_window_hi,
                                  config.sde_window_size),
        config.sde_window_size};
    std::optional<double> guidance;
    if (config.train_cfg) guidance = config.train_cfg_scale;
    flow::PolicyField field(old.flow, config.flow_arch, trace.tokens, guidance);
    auto traj = flow::hybrid_rollout(field, schedule, window, config.noise_level, rng);
    traj.condition = trace.tokens;
    traj.guidance = guidance;
    const auto rec = env::reward(traj.x0, prompt, config.task);
    out.rewards[m] = rec.reward;
    bad[m] = rec.non_finite;
    out.traces[m] = std::move(trace);
    out.trajectories[m] = std::move(traj);
  });
  out.reward_calls = g;
  for (bool b : bad) out.non_finite += b;
  out.advantages = group_advantages(out.rewards, config.adv_eps_std);
  out.degenerate = is_degenerate(out.rewards, config.adv_eps_std);
  return out;
}

std::vector<GroupRollout> rollout_batch(std::span<const env::Prompt> prompts, uint64_t update,
                                        const Policies& old, const TrainConfig& config) {
  std::vector<GroupRollout> batch;
  batch.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    batch.push_back(rollout_group(prompts[i], static_cast<int>(i), update, old, config));
  }
  return batch;
}

Optimizers make_optimizers(const Policies& policies, const TrainConfig& config) {
  return {nn::AdamState(policies.text.layout_ptr(),
                        {config.lr_text, config.adam_beta1, config.adam_beta2, 1e-8}),
          nn::AdamState(policies.flow.layout_ptr(),
                        {config.lr_flow, config.adam_beta1, config.adam_beta2, 1e-8})};
}

Objective evaluate_objective(std::span<const GroupRollout> batch, const Policies& policies,
                             const Policies& ref, const TrainConfig& config) {
  const Included in = collect(batch);
  Objective o;
  if (in.groups == 0) return o;
  if (trains_text(config)) {
    o.j_text = text::text_surrogate(policies.text, config.text_arch, in.traces, in.advantages,
                                    text_loss_config(config), &ref.text)
                   .objective;
  }
  if (trains_flow(config)) {
    o.j_flow = flow::flow_surrogate(policies.flow, config.flow_arch, in.trajectories,
                                    in.advantages, flow_loss_config(config), &ref.flow)
                   .objective;
  }
  o.j = o.j_text + config.lambda * o.j_flow;
  return o;
}

UpdateStats unified_update(std::span<const GroupRollout> batch, Policies& policies,
                           Optimizers& optimizers, const Policies& ref, const TrainConfig& config) {
  UpdateStats stats;
  const Included in = collect(batch);
  stats.included_groups = in.groups;
  if (in.groups == 0) {
    stats.skipped = true;
    stats.skip_reason = "every group is degenerate";
    return stats;
  }

  Policies cand = policies;
  Optimizers opt = optimizers;
  try {
    for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
      if (trains_text(config)) {
        auto res = text::text_surrogate(cand.text, config.text_arch, in.traces, in.advantages,
                                        text_loss_config(config), &ref.text);
        if (!std::isfinite(res.objective)) throw NumericError("non-finite text objective");
        stats.j_text = res.objective;
        stats.clip_frac_text = res.stats.clip_fraction;
        res.grads.scale(-1.0);
        nn::adam_step(cand.text, res.grads, opt.text);
      }
      if (trains_flow(config)) {
        auto res = flow::flow_surrogate(cand.flow, config.flow_arch, in.trajectories,
                                        in.advantages, flow_loss_config(config), &ref.flow);
        if (!std::isfinite(res.objective)) throw NumericError("non-finite flow objective");
        stats.j_flow = res.objective;
        stats.clip_frac_flow = res.stats.clip_fraction;
        stats.train_drift = res.stats.velocity_drift;
        res.grads.scale(-config.lambda);
        nn::adam_step(cand.flow, res.grads, opt.flow);
      }
    }
    if (!cand.text.all_finite() || !cand.flow.all_finite()) {
      throw NumericError("non-finite parameters after update");
    }
  } catch (const NumericError& e) {
    stats.skipped = true;
    stats.skip_reason = e.what();
    return stats;
  }
  policies = std::move(cand);
  optimizers = std::move(opt);
  return stats;
}

EvalResult evaluate(const Policies& policies, const Policies& ref, const TrainConfig& config) {
  const auto schedule = flow::timestep_schedule(config.eval_timesteps, config.timestep_shift);
  std::optional<double> guidance;
  if (config.eval_cfg_scale != 1.0) guidance = config.eval_cfg_scale;
  const int n = config.eval_prompts;
  std::vector<double> rewards(n), drift(n);
  std::vector<int> correct(n), bad(n);
  std::vector<int64_t> evals(n);
  auto prompt_rng = Rng::stream(config.eval_seed, "eval-prompts");
  std::vector<env::Prompt> prompts;
  for (int i = 0; i < n; ++i) prompts.push_back(env::sample_prompt(prompt_rng));

  parallel_for(n, [&](int i) {
    const auto trace = text::greedy_trace(policies.text, config.text_arch, prompts[i]);
    correct[i] = trace.tokens == env::canonical_trace(prompts[i]);
    flow::PolicyField field(policies.flow, config.flow_arch, trace.tokens, guidance);
    flow::PolicyField ref_field(ref.flow, config.flow_arch, trace.tokens, guidance);
    auto rng = Rng::stream(config.eval_seed, "eval-noise", {static_cast<uint64_t>(i)});
    Vec2 x{rng.normal(), rng.normal()};
    double d = 0.0;
    for (int k = 0; k < schedule.steps(); ++k) {
      const Vec2 v = field(x, schedule.t(k));
      d += flow::velocity_mse(v, ref_field(x, schedule.t(k)));
      x = flow::ode_step(x, v, schedule.dt(k));
    }
    drift[i] = d / schedule.steps();
    const auto rec = env::reward(x, prompts[i], config.task);
    rewards[i] = rec.reward;
    bad[i] = rec.non_finite;
    evals[i] = field.evaluations();
  });

  EvalResult r;
  for (int i = 0; i < n; ++i) {
    r.reward += rewards[i];
    r.velocity_drift += drift[i];
    r.text_accuracy += correct[i];
    r.non_finite += bad[i];
    r.velocity_evals += evals[i];
  }
  r.reward /= n;
  r.velocity_drift /= n;
  r.text_accuracy /= n;
  return r;
}

std::string metrics_header() {
  return "update,train_reward,eval_reward,j_text,j_flow,clip_frac_text,clip_frac_flow,"
         "velocity_drift,text_accuracy,velocity_evals_per_step,skipped,non_finite";
}

std::string format_metrics_row(const MetricsRow& r) {
  std::ostringstream out;
  out << r.update << ',' << fmt(r.train_reward) << ',' << opt(r.eval_reward) << ','
      << fmt(r.j_text) << ',' << fmt(r.j_flow) << ',' << fmt(r.clip_frac_text) << ','
      << fmt(r.clip_frac_flow) << ',' << opt(r.velocity_drift) << ',' << opt(r.text_accuracy)
      << ',' << fmt(r.velocity_evals_per_step) << ',' << (r.skipped ? 1 : 0) << ','
      << r.non_finite;
  return out.str();
}

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read metrics '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != metrics_header()) throw ConfigError("unexpected metrics header in " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (f.size() != 12) throw ConfigError("malformed metrics row in " + path.string());
    MetricsRow r;
    r.update = std::stoi(f[0]);
    r.train_reward = std::stod(f[1]);
    r.eval_reward = parse_opt(f[2]);
    r.j_text = std::stod(f[3]);
    r.j_flow = std::stod(f[4]);
    r.clip_frac_text = std::stod(f[5]);
    r.clip_frac_flow = std::stod(f[6]);
    r.velocity_drift = parse_opt(f[7]);
    r.text_accuracy = parse_opt(f[8]);
    r.velocity_evals_per_step = std::stod(f[9]);
    r.skipped = f[10] == "1";
    r.non_finite = std::stoi(f[11]);
    rows.push_back(r);
  }
  return rows;
}

PretrainResult pretrain(const TrainConfig& config) {
  const auto& p = config.pretrain;
  PretrainResult out{{nn::ParamSet(text::text_layout(config.text_arch)),
                      nn::ParamSet(flow::flow_layout(config.flow_arch))},
                     {}, 0.0, {}, true, 0.0, {}, {}};
  auto data_rng = Rng::stream(p.seed, "pretrain-data");
  out.data = env::make_pretrain_data(data_rng, p.pairs, config.task);

  auto text_rng = Rng::stream(p.seed, "pretrain-text");
  auto text_report = text::pretrain_text(out.data.text, config.text_arch,
                                         {p.text_epochs, p.text_batch, p.text_lr}, text_rng);
  out.policies.text = std::move(text_report.params);
  out.text_accuracy = text_report.greedy_accuracy;
  out.text_losses = text_report.epoch_losses;
  out.text_loss_monotone = text_report.monotone;

  flow::FlowPretrainConfig fc;
  fc.steps = p.flow_steps;
  fc.batch_size = p.flow_batch;
  fc.lr = p.flow_lr;
  fc.p_uncond = p.p_uncond;
  fc.eval_steps = config.eval_timesteps;
  fc.eval_shift = config.timestep_shift;
  auto flow_rng = Rng::stream(p.seed, "pretrain-flow");
  auto flow_report = flow::pretrain_flow(out.data.flow, config.flow_arch, fc, flow_rng);
  out.policies.flow = std::move(flow_report.params);
  out.flow_min_quadrant_accuracy = flow_report.min_quadrant_accuracy;
  out.flow_quadrant_accuracy = flow_report.quadrant_accuracy;
  out.flow_losses = flow_report.loss_curve;
  return out;
}

void save_pretrained(const fs::path& dir, const PretrainResult& result,
                     const TrainConfig& config) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "'");
  std::vector<nn::TensorRecord> text, flow;
  nn::append_blocks(text, result.policies.text, "text/");
  nn::append_blocks(flow, result.policies.flow, "flow/");
  nn::write_checkpoint(dir / "text.ckpt", text);
  nn::write_checkpoint(dir / "flow.ckpt", flow);
  env::write_pretrain_data(dir / "pretrain_data.jsonl", result.data);
  json report{{"text_greedy_accuracy", result.text_accuracy},
              {"text_epoch_losses", result.text_losses},
              {"text_loss_monotone", result.text_loss_monotone},
              {"flow_min_quadrant_accuracy", result.flow_min_quadrant_accuracy},
              {"flow_quadrant_accuracy", result.flow_quadrant_accuracy},
              {"flow_loss_curve", result.flow_losses},
              {"config", render_config(config)},
              {"build_id", std::string(build_id())}};
  write_file(dir / "report.json", report.dump(2) + "\n");
}

Policies load_pretrained(const fs::path& dir, const TrainConfig& config) {
  Policies p{nn::ParamSet(text::text_layout(config.text_arch)),
             nn::ParamSet(flow::flow_layout(config.flow_arch))};
  for (const char* name : {"text.ckpt", "flow.ckpt"}) {
    if (!fs::exists(dir / name)) {
      throw CheckpointError("missing pretrained checkpoint '" + (dir / name).string() +
                            "' (run the pretrain command first)");
    }
  }
  nn::load_blocks(nn::read_checkpoint(dir / "text.ckpt"), p.text, "text/");
  nn::load_blocks(nn::read_checkpoint(dir / "flow.ckpt"), p.flow, "flow/");
  return p;
}

Policies load_run_policies(const fs::path& state, const TrainConfig& config) {
  if (!fs::exists(state)) throw CheckpointError("missing checkpoint '" + state.string() + "'");
  Policies p{nn::ParamSet(text::text_layout(config.text_arch)),
             nn::ParamSet(flow::flow_layout(config.flow_arch))};
  const auto records = nn::read_checkpoint(state);
  nn::load_blocks(records, p.text, "text/");
  nn::load_blocks(records, p.flow, "flow/");
  return p;
}

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  validate(config);
  const fs::path out = options.out_dir;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out.string() + "'");

  const Policies ref =
      options.pretrained ? *options.pretrained : load_pretrained(config.pretrain_dir, config);
  TrainResult result{{}, ref, false};
  Policies& cur = result.final_policies;
  Optimizers opt = make_optimizers(cur, config);

  const fs::path metrics = out / "metrics.csv";
  const fs::path timing = out / "timing.csv";
  const fs::path groups = out / "groups.jsonl";
  const fs::path rollouts = out / "rollouts.jsonl";
  const fs::path state = out / "state.ckpt";

  int start = 0;
  if (options.resume) {
    if (!fs::exists(state)) {
      throw CheckpointError("cannot resume: no checkpoint at '" + state.string() + "'");
    }
    start = load_state(state, cur, opt);
    truncate_csv(metrics, start);
    truncate_csv(timing, start);
    truncate_jsonl(groups, start);
    truncate_jsonl(rollouts, start);
    result.rows = read_metrics(metrics);
  } else {
    json manifest{{"config_text", options.config_text},
                  {"resolved_config", render_config(config)},
                  {"seed", config.seed},
                  {"build_id", std::string(build_id())},
                  {"start_time", timestamp()},
                  {"command", options.command},
                  {"outputs",
                   {{"metrics", metrics.string()},
                    {"timing", timing.string()},
                    {"groups", groups.string()},
                    {"state", state.string()}}}};
    write_file(out / "manifest.json", manifest.dump(2) + "\n");
    write_file(out / "config.conf", options.config_text.empty() ? render_config(config)
                                                                : options.config_text);
    write_file(metrics, metrics_header() + "\n");
    write_file(timing, "update,seconds\n");
    write_file(groups, "");
    if (config.log_rollouts) write_file(rollouts, "");
    fs::remove(out / "status.json", ec);

    const EvalResult base = evaluate(cur, ref, config);
    MetricsRow row;
    row.update = 0;
    row.eval_reward = base.reward;
    row.velocity_drift = base.velocity_drift;
    row.text_accuracy = base.text_accuracy;
    row.non_finite = base.non_finite;
    append_line(metrics, format_metrics_row(row));
    append_line(timing, "0,0");
    result.rows.push_back(row);
    if (options.on_row) options.on_row(row);
  }

  for (int u = start + 1; u <= config.total_updates; ++u) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto prompts = batch_prompts(config, static_cast<uint64_t>(u));
    const auto batch = rollout_batch(prompts, static_cast<uint64_t>(u), cur, config);
    const UpdateStats stats = unified_update(batch, cur, opt, ref, config);

    MetricsRow row;
    row.update = u;
    double reward_sum = 0.0;
    int64_t evals = 0;
    int trajectories = 0;
    for (const auto& g : batch) {
      for (double r : g.rewards) reward_sum += r;
      for (const auto& t : g.trajectories) evals += t.velocity_evals;
      trajectories += static_cast<int>(g.trajectories.size());
      row.non_finite += g.non_finite;
    }
    row.train_reward = reward_sum / trajectories;
    row.velocity_evals_per_step =
        static_cast<double>(evals) / (static_cast<double>(trajectories) * config.train_timesteps);
    row.j_text = stats.j_text;
    row.j_flow = stats.j_flow;
    row.clip_frac_text = stats.clip_frac_text;
    row.clip_frac_flow = stats.clip_frac_flow;
    row.skipped = stats.skipped;
    if (u % config.eval_every == 0 || u == config.total_updates) {
      const EvalResult ev = evaluate(cur, ref, config);
      row.eval_reward = ev.reward;
      row.velocity_drift = ev.velocity_drift;
      row.text_accuracy = ev.text_accuracy;
      row.non_finite += ev.non_finite;
    }
    append_line(metrics, format_metrics_row(row));
    for (const auto& g : batch) append_line(groups, group_record(u, g).dump());
    if (config.log_rollouts) {
      for (const auto& g : batch) {
        for (std::size_t m = 0; m < g.trajectories.size(); ++m) {
          const auto& t = g.trajectories[m];
          json rec{{"update", u},
                   {"prompt_id", g.prompt.id},
                   {"member", m},
                   {"condition", t.condition},
                   {"window", {t.window.start, t.window.size}},
                   {"x0", {t.x0[0], t.x0[1]}},
                   {"reward", g.rewards[m]}};
          append_line(rollouts, rec.dump());
        }
      }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    append_line(timing, std::to_string(u) + "," + fmt(secs));
    result.rows.push_back(row);
    if (options.on_row) options.on_row(row);

    const bool stopping = options.stop_after && u == *options.stop_after;
    if (u % config.checkpoint_every == 0 || u == config.total_updates || stopping) {
      save_state(state, cur, opt, u);
    }
    if (stopping) return result;
  }

  if (start == 0 && config.total_updates == 0) save_state(state, cur, opt, 0);
  json status{{"completed", true},
              {"updates", config.total_updates},
              {"end_time", timestamp()},
              {"final_eval_reward", result.rows.back().eval_reward.value_or(0.0)}};
  write_file(out / "status.json", status.dump(2) + "\n");
  result.completed = true;
  return result;
}

}  // namespace unigrpo::trainer
