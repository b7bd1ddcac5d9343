// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/trainer/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace unigrpo::trainer {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("config key '" + std::string(key) + "': cannot parse '" +
                    std::string(value) + "' as " + std::string(want));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v) {
  Int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Field {
  std::string key;
  std::function<void(TrainConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field number(std::string key, T TrainConfig::*member) {
  return {key,
          [member](TrainConfig& c, std::string_view k, std::string_view v) {
            if constexpr (std::is_floating_point_v<T>) {
              c.*member = to_double(k, v);
            } else {
              c.*member = to_int<T>(k, v);
            }
          },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

// Nested members (task.*, pretrain.*, ...) through an accessor.
template <typename T, typename Access>
Field nested(std::string key, Access access) {
  return {key,
          [access](TrainConfig& c, std::string_view k, std::string_view v) {
            if constexpr (std::is_floating_point_v<T>) {
              access(c) = to_double(k, v);
            } else {
              access(c) = to_int<T>(k, v);
            }
          },
          [access](const TrainConfig& c) {
            auto& m = access(const_cast<TrainConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) {
              return fmt(m);
            } else {
              return std::to_string(m);
            }
          }};
}

Field boolean(std::string key, bool TrainConfig::*member) {
  return {key,
          [member](TrainConfig& c, std::string_view k, std::string_view v) {
            c.*member = to_bool(k, v);
          },
          [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(number("seed", &TrainConfig::seed));
    f.push_back(number("group_size", &TrainConfig::group_size));
    f.push_back(number("prompts_per_batch", &TrainConfig::prompts_per_batch));
    f.push_back(number("clip_eps_text", &TrainConfig::clip_eps_text));
    f.push_back(number("clip_eps_flow", &TrainConfig::clip_eps_flow));
    f.push_back(number("beta_txt", &TrainConfig::beta_txt));
    f.push_back({"reg",
                 [](TrainConfig& c, std::string_view, std::string_view v) {
                   c.reg = flow::parse_reg_mode(v);
                 },
                 [](const TrainConfig& c) { return std::string(flow::reg_mode_name(c.reg)); }});
    f.push_back(number("mse_weight", &TrainConfig::mse_weight));
    f.push_back(number("beta_img", &TrainConfig::beta_img));
    f.push_back(number("lambda", &TrainConfig::lambda));
    f.push_back(number("ppo_epochs", &TrainConfig::ppo_epochs));
    f.push_back(number("lr_text", &TrainConfig::lr_text));
    f.push_back(number("lr_flow", &TrainConfig::lr_flow));
    f.push_back(number("adam_beta1", &TrainConfig::adam_beta1));
    f.push_back(number("adam_beta2", &TrainConfig::adam_beta2));
    f.push_back(number("train_timesteps", &TrainConfig::train_timesteps));
    f.push_back(number("eval_timesteps", &TrainConfig::eval_timesteps));
    f.push_back(number("timestep_shift", &TrainConfig::timestep_shift));
    f.push_back(number("sde_window_lo", &TrainConfig::sde_window_lo));
    f.push_back(number("sde_window_hi", &TrainConfig::sde_window_hi));
    f.push_back(number("sde_window_size", &TrainConfig::sde_window_size));
    f.push_back(number("noise_level", &TrainConfig::noise_level));
    f.push_back(boolean("train_cfg", &TrainConfig::train_cfg));
    f.push_back(number("train_cfg_scale", &TrainConfig::train_cfg_scale));
    f.push_back(number("eval_cfg_scale", &TrainConfig::eval_cfg_scale));
    f.push_back(number("temperature", &TrainConfig::temperature));
    f.push_back(number("total_updates", &TrainConfig::total_updates));
    f.push_back(number("eval_every", &TrainConfig::eval_every));
    f.push_back(number("eval_prompts", &TrainConfig::eval_prompts));
    f.push_back(number("eval_seed", &TrainConfig::eval_seed));
    f.push_back({"component",
                 [](TrainConfig& c, std::string_view, std::string_view v) {
                   c.component = parse_component(v);
                 },
                 [](const TrainConfig& c) { return std::string(component_name(c.component)); }});
    f.push_back(number("adv_eps_std", &TrainConfig::adv_eps_std));
    f.push_back(number("checkpoint_every", &TrainConfig::checkpoint_every));
    f.push_back(boolean("log_rollouts", &TrainConfig::log_rollouts));
    f.push_back({"pretrain_dir",
                 [](TrainConfig& c, std::string_view, std::string_view v) {
                   c.pretrain_dir = std::string(v);
                 },
                 [](const TrainConfig& c) { return c.pretrain_dir; }});
    f.push_back({"ablation_seeds",
                 [](TrainConfig& c, std::string_view k, std::string_view v) {
                   c.ablation_seeds.clear();
                   std::size_t pos = 0;
                   while (pos <= v.size()) {
                     const auto comma = std::min(v.find(',', pos), v.size());
                     const std::string item = trim(v.substr(pos, comma - pos));
                     if (item.empty()) bad_value(k, v, "a comma-separated seed list");
                     c.ablation_seeds.push_back(to_int<uint64_t>(k, item));
                     pos = comma + 1;
                   }
                 },
                 [](const TrainConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.ablation_seeds.size(); ++i) {
                     if (i) out += ",";
                     out += std::to_string(c.ablation_seeds[i]);
                   }
                   return out;
                 }});

    f.push_back(nested<double>("task.radius_near",
                               [](TrainConfig& c) -> double& { return c.task.radius_near; }));
    f.push_back(nested<double>("task.radius_far",
                               [](TrainConfig& c) -> double& { return c.task.radius_far; }));
    f.push_back(nested<double>("task.tau_tight",
                               [](TrainConfig& c) -> double& { return c.task.tau_tight; }));
    f.push_back(nested<double>("task.tau_wide",
                               [](TrainConfig& c) -> double& { return c.task.tau_wide; }));
    f.push_back(nested<double>("task.tau_reward",
                               [](TrainConfig& c) -> double& { return c.task.tau_reward; }));
    f.push_back(nested<double>("task.p_noise",
                               [](TrainConfig& c) -> double& { return c.task.p_noise; }));
    f.push_back({"task.reward",
                 [](TrainConfig& c, std::string_view k, std::string_view v) {
                   if (v == "smooth") {
                     c.task.reward_mode = env::RewardMode::kSmooth;
                   } else if (v == "binary") {
                     c.task.reward_mode = env::RewardMode::kBinary;
                   } else {
                     bad_value(k, v, "smooth or binary");
                   }
                 },
                 [](const TrainConfig& c) {
                   return std::string(c.task.reward_mode == env::RewardMode::kSmooth ? "smooth"
                                                                                     : "binary");
                 }});

    f.push_back(nested<uint64_t>("pretrain.seed",
                                 [](TrainConfig& c) -> uint64_t& { return c.pretrain.seed; }));
    f.push_back(nested<int>("pretrain.pairs",
                            [](TrainConfig& c) -> int& { return c.pretrain.pairs; }));
    f.push_back(nested<int>("pretrain.text_epochs",
                            [](TrainConfig& c) -> int& { return c.pretrain.text_epochs; }));
    f.push_back(nested<double>("pretrain.text_lr",
                               [](TrainConfig& c) -> double& { return c.pretrain.text_lr; }));
    f.push_back(nested<int>("pretrain.text_batch",
                            [](TrainConfig& c) -> int& { return c.pretrain.text_batch; }));
    f.push_back(nested<int>("pretrain.flow_steps",
                            [](TrainConfig& c) -> int& { return c.pretrain.flow_steps; }));
    f.push_back(nested<double>("pretrain.flow_lr",
                               [](TrainConfig& c) -> double& { return c.pretrain.flow_lr; }));
    f.push_back(nested<int>("pretrain.flow_batch",
                            [](TrainConfig& c) -> int& { return c.pretrain.flow_batch; }));
    f.push_back(nested<double>("pretrain.p_uncond",
                               [](TrainConfig& c) -> double& { return c.pretrain.p_uncond; }));

    f.push_back(nested<int>("arch.text_embed",
                            [](TrainConfig& c) -> int& { return c.text_arch.embed_dim; }));
    f.push_back(nested<int>("arch.text_hidden",
                            [](TrainConfig& c) -> int& { return c.text_arch.hidden; }));
    f.push_back(nested<int>("arch.text_max_len",
                            [](TrainConfig& c) -> int& { return c.text_arch.max_len; }));
    f.push_back(nested<int>("arch.flow_cond",
                            [](TrainConfig& c) -> int& { return c.flow_arch.cond_dim; }));
    f.push_back(nested<int>("arch.flow_hidden",
                            [](TrainConfig& c) -> int& { return c.flow_arch.hidden; }));
    return f;
  }();
  return table;
}

void require(bool ok, std::string_view key, std::string_view what) {
  if (!ok) throw ConfigError("config key '" + std::string(key) + "': " + std::string(what));
}

}  // namespace

std::string_view component_name(Component c) {
  switch (c) {
    case Component::kUnified:
      return "unified";
    case Component::kFlowOnly:
      return "flow-only";
    case Component::kTextOnly:
      return "text-only";
  }
  return "unified";
}

Component parse_component(std::string_view name) {
  for (Component c : {Component::kUnified, Component::kFlowOnly, Component::kTextOnly}) {
    if (component_name(c) == name) return c;
  }
  throw ConfigError("unknown component '" + std::string(name) +
                    "' (expected unified, flow-only or text-only)");
}

double TrainConfig::reg_weight() const {
  switch (reg) {
    case flow::RegMode::kNone:
      return 0.0;
    case flow::RegMode::kLatentKl:
      return beta_img;
    case flow::RegMode::kVelocityMse:
      return mse_weight;
  }
  return 0.0;
}

void set_config_value(TrainConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void validate(const TrainConfig& c) {
  require(c.group_size >= 2, "group_size", "must be >= 2");
  require(c.prompts_per_batch >= 1, "prompts_per_batch", "must be >= 1");
  require(c.ppo_epochs >= 1, "ppo_epochs", "must be >= 1");
  require(c.lambda >= 0.0, "lambda", "must be >= 0");
  require(c.mse_weight >= 0.0, "mse_weight", "must be >= 0");
  require(c.beta_img >= 0.0, "beta_img", "must be >= 0");
  require(c.beta_txt >= 0.0, "beta_txt", "must be >= 0");
  require(c.clip_eps_text > 0.0, "clip_eps_text", "must be > 0");
  require(c.clip_eps_flow > 0.0, "clip_eps_flow", "must be > 0");
  require(c.lr_text >= 0.0, "lr_text", "must be >= 0");
  require(c.lr_flow >= 0.0, "lr_flow", "must be >= 0");
  require(c.train_timesteps >= 1, "train_timesteps", "must be >= 1");
  require(c.eval_timesteps >= 1, "eval_timesteps", "must be >= 1");
  require(c.timestep_shift >= 1.0, "timestep_shift", "must be >= 1");
  require(c.noise_level > 0.0, "noise_level", "must be > 0");
  require(c.temperature > 0.0, "temperature", "must be > 0");
  require(c.total_updates >= 0, "total_updates", "must be >= 0");
  require(c.eval_every >= 1, "eval_every", "must be >= 1");
  require(c.eval_prompts >= 1, "eval_prompts", "must be >= 1");
  require(c.checkpoint_every >= 1, "checkpoint_every", "must be >= 1");
  require(c.sde_window_size >= 1, "sde_window_size", "must be >= 1");
  require(c.sde_window_lo >= 0 && c.sde_window_hi >= c.sde_window_lo + c.sde_window_size - 1,
          "sde_window_hi", "window range cannot hold a window of sde_window_size");
  require(c.sde_window_hi < c.train_timesteps, "sde_window_hi",
          "must be below train_timesteps (no stochastic step at t = 0)");
  require(!c.ablation_seeds.empty(), "ablation_seeds", "must list at least one seed");
  require(c.task.p_noise >= 0.0 && c.task.p_noise <= 1.0, "task.p_noise", "must be in [0, 1]");
  require(c.task.tau_tight > 0.0 && c.task.tau_wide > 0.0, "task.tau_tight",
          "target spreads must be > 0");
  require(c.task.tau_reward > 0.0, "task.tau_reward", "must be > 0");
  require(c.task.radius_near > 0.0 && c.task.radius_far > c.task.radius_near,
          "task.radius_far", "must exceed task.radius_near > 0");
  require(c.pretrain.pairs > 0, "pretrain.pairs", "must be > 0");
  require(c.text_arch.max_len >= env::kCanonicalTraceLength, "arch.text_max_len",
          "must fit a canonical trace");
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
  validate(config);
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const TrainConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace unigrpo::trainer
