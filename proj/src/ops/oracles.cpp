// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/ops/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "unigrpo/flow/flow_objective.hpp"
#include "unigrpo/flow/flow_policy.hpp"
#include "unigrpo/flow/sde.hpp"
#include "unigrpo/nn/grad_check.hpp"
#include "unigrpo/text/text_policy.hpp"
#include "unigrpo/trainer/trainer.hpp"

namespace unigrpo::ops {
namespace {

constexpr int kProbes = 120;
constexpr double kFdTol = 1e-4;
constexpr int kMcDraws = 100000;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

OracleResult at_most(std::string group, std::string name, double measured, double tol,
                     std::string detail = {}) {
  return {std::move(group), std::move(name), measured, tol, "<=", measured <= tol,
          std::move(detail)};
}

OracleResult exact(std::string group, std::string name, bool ok, std::string detail = {}) {
  return {std::move(group), std::move(name), ok ? 0.0 : 1.0, 0.0, "<=", ok, std::move(detail)};
}

nn::ParamSet random_text_params(const text::TextArch& arch, uint64_t seed) {
  auto rng = Rng::stream(seed, "verify-text-params");
  auto params = text::init_text_params(arch, rng);
  const auto mlp = text::text_mlp_spec(arch);
  const int last = static_cast<int>(mlp.sizes.size()) - 2;
  for (double& v : params.block(mlp.weight_name(last))) v = 0.3 * rng.normal();
  for (double& v : params.block(mlp.bias_name(last))) v = 0.3 * rng.normal();
  return params;
}

nn::ParamSet random_flow_params(const flow::FlowArch& arch, uint64_t seed) {
  auto rng = Rng::stream(seed, "verify-flow-params");
  auto params = flow::init_flow_params(arch, rng);
  const auto mlp = flow::flow_mlp_spec(arch);
  const int last = static_cast<int>(mlp.sizes.size()) - 2;
  for (double& v : params.block(mlp.weight_name(last))) v = 0.3 * rng.normal();
  for (double& v : params.block(mlp.bias_name(last))) v = 0.3 * rng.normal();
  return params;
}

void perturb(nn::BlockVector& values, uint64_t seed, std::string_view tag, double scale) {
  auto rng = Rng::stream(seed, tag);
  for (double& v : values.values()) v += scale * rng.normal();
}

OracleResult fd_oracle(const std::string& name, const nn::ScalarFn& fn,
                       const nn::ParamSet& params, nn::GradSet grads,
                       const VerifyOptions& options, uint64_t salt) {
  if (options.corrupt_gradient) grads.scale(1.01);
  auto rng = Rng::stream(options.seed, "verify-fd-probes", {salt});
  const auto report = nn::finite_diff_check(fn, params, grads, kProbes, kFdTol, rng);
  std::string detail = std::to_string(report.probes) + " coordinates";
  if (!report.failing_blocks.empty()) detail += ", failing block " + report.failing_blocks[0];
  if (report.aborted) detail += ", non-deterministic loss";
  OracleResult r = at_most("gradient", name, report.max_rel_error, kFdTol, detail);
  r.passed = report.passed();
  return r;
}

struct Moments {
  Vec2 mean{};
  double cxx = 0.0, cxy = 0.0, cyy = 0.0;
};

Moments moments(const std::vector<Vec2>& xs) {
  Moments m;
  for (const auto& x : xs) m.mean = m.mean + x;
  m.mean = (1.0 / static_cast<double>(xs.size())) * m.mean;
  for (const auto& x : xs) {
    const Vec2 d = x - m.mean;
    m.cxx += d[0] * d[0];
    m.cxy += d[0] * d[1];
    m.cyy += d[1] * d[1];
  }
  const double n1 = static_cast<double>(xs.size() - 1);
  m.cxx /= n1;
  m.cxy /= n1;
  m.cyy /= n1;
  return m;
}

}  // namespace

std::vector<OracleResult> gradient_oracles(const VerifyOptions& options) {
  std::vector<OracleResult> out;
  const uint64_t seed = options.seed;
  const std::vector<double> adv{1.2, -0.3, 0.8, -1.5, 0.4, -0.2, 1.0, -1.4};
  const std::vector<double> zero_adv(adv.size(), 0.0);

  {  // Text surrogate with clipping and the exact KL term.
    const text::TextArch arch;
    const auto old = random_text_params(arch, seed);
    auto ref = random_text_params(arch, seed + 1);
    auto params = old;
    perturb(params, seed, "verify-text-perturb", 0.02);
    std::vector<text::ReasoningTrace> group;
    for (int i = 0; i < static_cast<int>(adv.size()); ++i) {
      auto rng = Rng::stream(seed, "verify-text-traces", {static_cast<uint64_t>(i)});
      group.push_back(text::sample_trace(old, arch, env::sample_prompt(rng), 1.0, rng));
    }
    const text::TextLossConfig cfg{0.2, 0.1};
    const auto res = text::text_surrogate(params, arch, group, adv, cfg, &ref);
    out.push_back(fd_oracle(
        "text-surrogate",
        [&](const nn::ParamSet& p) {
          return text::text_surrogate(p, arch, group, adv, cfg, &ref).objective;
        },
        params, res.grads, options, 1));

    std::vector<env::TextPair> batch;
    for (const auto& t : group) batch.push_back({t.prompt, env::canonical_trace(t.prompt), false});
    const auto ce = text::text_ce_loss(params, arch, batch);
    out.push_back(fd_oracle(
        "text-pretrain-loss",
        [&](const nn::ParamSet& p) { return text::text_ce_loss(p, arch, batch).loss; }, params,
        ce.grads, options, 2));
  }

  {  // Flow surrogate and regularizers on frozen rollouts.
    const flow::FlowArch arch;
    const auto old = random_flow_params(arch, seed);
    auto ref = old;
    perturb(ref, seed, "verify-flow-ref", 0.02);
    auto params = old;
    perturb(params, seed, "verify-flow-perturb", 0.003);
    const auto schedule = flow::timestep_schedule(10, 3.0);
    auto rollouts = [&](std::optional<double> guidance) {
      std::vector<flow::FlowTrajectory> group;
      for (int i = 0; i < static_cast<int>(adv.size()); ++i) {
        auto rng = Rng::stream(seed, "verify-flow-rollouts", {static_cast<uint64_t>(i)});
        const auto prompt = env::sample_prompt(rng);
        const auto cond = env::canonical_trace(prompt);
        flow::PolicyField field(old, arch, cond, guidance);
        const flow::SdeWindow window{flow::sample_window_start(rng, 0, 5, 3), 3};
        auto traj = flow::hybrid_rollout(field, schedule, window, 0.8, rng);
        traj.condition = cond;
        traj.guidance = guidance;
        group.push_back(std::move(traj));
      }
      return group;
    };
    struct Case {
      const char* name;
      flow::FlowLossConfig cfg;
      bool zero_advantages;
      std::optional<double> guidance;
    };
    const Case cases[] = {
        {"flow-surrogate", {0.5, flow::RegMode::kNone, 0.0}, false, {}},
        {"flow-surrogate-tight-clip", {1e-4, flow::RegMode::kNone, 0.0}, false, {}},
        {"flow-surrogate-guided", {0.5, flow::RegMode::kNone, 0.0}, false, 1.5},
        {"latent-kl-regularizer", {0.5, flow::RegMode::kLatentKl, 0.05}, true, {}},
        {"velocity-mse-regularizer", {0.5, flow::RegMode::kVelocityMse, 0.3}, true, {}},
    };
    uint64_t salt = 10;
    for (const auto& c : cases) {
      const auto group = rollouts(c.guidance);
      const auto& a = c.zero_advantages ? zero_adv : adv;
      const auto res = flow::flow_surrogate(params, arch, group, a, c.cfg, &ref);
      out.push_back(fd_oracle(
          c.name,
          [&](const nn::ParamSet& p) {
            return flow::flow_surrogate(p, arch, group, a, c.cfg, &ref).objective;
          },
          params, res.grads, options, salt++));
    }

    std::vector<flow::FmSample> batch;
    auto rng = Rng::stream(seed, "verify-fm-batch");
    for (int i = 0; i < 16; ++i) {
      flow::FmSample s;
      s.x0 = {rng.normal(), rng.normal()};
      s.x1 = {rng.normal(), rng.normal()};
      s.t = rng.uniform_open();
      if (i % 4 != 0) s.condition = env::canonical_trace(env::sample_prompt(rng));
      batch.push_back(std::move(s));
    }
    const auto fm = flow::fm_loss(params, arch, batch);
    out.push_back(fd_oracle(
        "flow-pretrain-loss",
        [&](const nn::ParamSet& p) { return flow::fm_loss(p, arch, batch).loss; }, params,
        fm.grads, options, 20));
  }
  return out;
}

std::vector<OracleResult> advantage_oracles(const VerifyOptions& options) {
  std::vector<OracleResult> out;
  const std::vector<double> r{1.0, 2.0, 3.0};
  const auto a = trainer::group_advantages(r, 1e-8);
  const double hand[] = {-1.224744871391589, 0.0, 1.224744871391589};
  double err = 0.0;
  for (int i = 0; i < 3; ++i) err = std::max(err, std::abs(a[i] - hand[i]));
  out.push_back(at_most("advantage", "hand-values", err, 1e-9, "[1,2,3] -> [-1.224745, 0, 1.224745]"));

  auto rng = Rng::stream(options.seed, "verify-advantages");
  double worst_mean = 0.0, worst_std = 0.0, worst_affine = 0.0;
  int argmax_miss = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int g = 2 + static_cast<int>(rng.below(23));
    std::vector<double> rw(g);
    for (double& x : rw) x = rng.normal();
    const auto adv = trainer::group_advantages(rw, 1e-8);
    const double m = std::accumulate(adv.begin(), adv.end(), 0.0) / g;
    double v = 0.0;
    for (double x : adv) v += (x - m) * (x - m);
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_std = std::max(worst_std, std::abs(std::sqrt(v / g) - 1.0));
    argmax_miss += (std::max_element(adv.begin(), adv.end()) - adv.begin()) !=
                   (std::max_element(rw.begin(), rw.end()) - rw.begin());
    const double scale = 0.1 + 10.0 * rng.uniform();
    const double shift = 20.0 * rng.uniform() - 10.0;
    std::vector<double> r2(g);
    for (int i = 0; i < g; ++i) r2[i] = scale * rw[i] + shift;
    const auto adv2 = trainer::group_advantages(r2, 1e-8);
    for (int i = 0; i < g; ++i) worst_affine = std::max(worst_affine, std::abs(adv2[i] - adv[i]));
  }
  out.push_back(at_most("advantage", "zero-mean", worst_mean, 1e-10, "1000 random groups"));
  out.push_back(at_most("advantage", "unit-std", worst_std, 1e-10, "1000 random groups"));
  out.push_back(exact("advantage", "argmax-preserved", argmax_miss == 0,
                      std::to_string(argmax_miss) + " mismatches"));
  out.push_back(at_most("advantage", "affine-invariance", worst_affine, 1e-10));
  const std::vector<double> flat(6, 0.4);
  const auto z = trainer::group_advantages(flat, 1e-8);
  out.push_back(exact("advantage", "degenerate-group-zero",
                      std::all_of(z.begin(), z.end(), [](double x) { return x == 0.0; })));
  return out;
}

std::vector<OracleResult> ratio_norm_oracles(const VerifyOptions& options) {
  std::vector<OracleResult> out;
  auto rng = Rng::stream(options.seed, "verify-ratio-norm");
  double worst_z = 0.0;
  for (int cfg = 0; cfg < 10; ++cfg) {
    const double sigma = 0.2 + rng.uniform();
    const double dt = 0.02 + 0.2 * rng.uniform();
    const double s = sigma * std::sqrt(dt);
    const Vec2 mu_old{rng.normal(), rng.normal()};
    const Vec2 d_mu{0.5 * s * rng.normal(), 0.5 * s * rng.normal()};
    const Vec2 mu_new = mu_old - d_mu;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < kMcDraws; ++i) {
      const Vec2 x{mu_old[0] + s * rng.normal(), mu_old[1] + s * rng.normal()};
      const double log_r =
          flow::transition_logprob(mu_new, s, x) - flow::transition_logprob(mu_old, s, x);
      const double b = log_r + squared_norm(d_mu) / (2.0 * s * s);
      sum += b;
      sum2 += b * b;
    }
    const double mean = sum / kMcDraws;
    const double se = std::sqrt((sum2 / kMcDraws - mean * mean) / kMcDraws);
    worst_z = std::max(worst_z, std::abs(mean) / se);
  }
  out.push_back(at_most("ratio-norm", "centered-under-old-policy", worst_z, 3.0,
                        "max |mean|/SE over 10 configs, 100k draws each"));

  // Through the flow surrogate: every stored step re-evaluated at the
  // sampling parameters gives r = 1 exactly.
  const flow::FlowArch arch;
  const auto params = random_flow_params(arch, options.seed);
  const auto schedule = flow::timestep_schedule(10, 3.0);
  std::vector<flow::FlowTrajectory> group;
  for (int i = 0; i < 8; ++i) {
    auto r = Rng::stream(options.seed, "verify-on-policy", {static_cast<uint64_t>(i)});
    const auto cond = env::canonical_trace(env::sample_prompt(r));
    flow::PolicyField field(params, arch, cond);
    auto traj = flow::hybrid_rollout(field, schedule, {0, 5}, 0.8, r);
    traj.condition = cond;
    group.push_back(std::move(traj));
  }
  const std::vector<double> adv{1.0, -1.0, 0.5, -0.5, 2.0, -2.0, 0.1, -0.1};
  const auto res =
      flow::flow_surrogate(params, arch, group, adv, {1e-4, flow::RegMode::kNone, 0.0}, nullptr);
  const double dev = std::max(std::abs(res.stats.max_ratio - 1.0),
                              std::abs(res.stats.mean_ratio - 1.0));
  out.push_back(at_most("ratio-norm", "unit-on-policy", dev, 0.0,
                        std::to_string(res.stats.steps) + " steps at theta = theta_old"));
  return out;
}

std::vector<OracleResult> latent_kl_oracles(const VerifyOptions& options) {
  std::vector<OracleResult> out;
  const double spot = flow::latent_kl({0.1, 0.1}, {0.0, 0.0}, 1.0, 0.04);
  out.push_back(at_most("latent-kl", "closed-form-spot", std::abs(spot - 0.25), 1e-15,
                        "|d_mu|^2 = 0.02, sigma^2 dt = 0.04 -> 0.25"));
  auto rng = Rng::stream(options.seed, "verify-latent-kl");
  double worst_z = 0.0;
  for (int cfg = 0; cfg < 10; ++cfg) {
    const double sigma = 0.2 + rng.uniform();
    const double dt = 0.02 + 0.2 * rng.uniform();
    const double s = sigma * std::sqrt(dt);
    const Vec2 mu_ref{rng.normal(), rng.normal()};
    const Vec2 mu_th{mu_ref[0] + s * rng.normal(), mu_ref[1] + s * rng.normal()};
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < kMcDraws; ++i) {
      const Vec2 x{mu_th[0] + s * rng.normal(), mu_th[1] + s * rng.normal()};
      const double l = flow::transition_logprob(mu_th, s, x) - flow::transition_logprob(mu_ref, s, x);
      sum += l;
      sum2 += l * l;
    }
    const double mean = sum / kMcDraws;
    const double se = std::sqrt((sum2 / kMcDraws - mean * mean) / kMcDraws);
    worst_z = std::max(worst_z, std::abs(mean - flow::latent_kl(mu_th, mu_ref, sigma, dt)) / se);
  }
  out.push_back(at_most("latent-kl", "monte-carlo", worst_z, 3.0,
                        "max |closed form - MC|/SE over 10 configs, 100k draws each"));
  return out;
}

std::vector<OracleResult> sde_oracles(const VerifyOptions& options) {
  std::vector<OracleResult> out;
  {
    const flow::FlowArch arch;
    const auto params = random_flow_params(arch, options.seed);
    const auto schedule = flow::timestep_schedule(10, 3.0);
    int mismatches = 0;
    for (int i = 0; i < 200; ++i) {
      auto rng = Rng::stream(options.seed, "verify-zero-noise", {static_cast<uint64_t>(i)});
      const auto cond = env::canonical_trace(env::sample_prompt(rng));
      const int size = 1 + static_cast<int>(rng.below(10));
      const int start = static_cast<int>(rng.below(static_cast<uint64_t>(11 - size)));
      flow::PolicyField field(params, arch, cond);
      const auto traj = flow::hybrid_rollout(field, schedule, {start, size}, 0.0, rng);
      mismatches += traj.x0 != flow::ode_sample(field, schedule, traj.x1);
    }
    out.push_back(exact("sde", "zero-noise-equals-ode", mismatches == 0,
                        std::to_string(mismatches) + " of 200 rollouts differ"));
  }
  {
    const Vec2 m{0.8, -0.5};
    const double s0 = 0.4;
    const auto schedule = flow::timestep_schedule(100, 1.0);
    constexpr int n = 10000;
    std::vector<Vec2> sde, ode;
    flow::GaussianField field(m, s0);
    for (int i = 0; i < n; ++i) {
      auto r1 = Rng::stream(options.seed, "verify-marginal-sde", {static_cast<uint64_t>(i)});
      sde.push_back(flow::hybrid_rollout(field, schedule, {0, 100}, 0.8, r1).x0);
      auto r2 = Rng::stream(options.seed, "verify-marginal-ode", {static_cast<uint64_t>(i)});
      ode.push_back(flow::ode_sample(field, schedule, {r2.normal(), r2.normal()}));
    }
    const Moments a = moments(sde), b = moments(ode);
    // Two independent samples: the difference of means has variance
    // va/n + vb/n; sample covariances have variance (c_xx c_yy + c_xy^2)/(n-1).
    auto mean_z = [&](int d, double va, double vb) {
      return std::abs(a.mean[d] - b.mean[d]) / std::sqrt((va + vb) / n);
    };
    auto cov_z = [&](double ca, double cb, double var_a, double var_b) {
      return std::abs(ca - cb) / std::sqrt((var_a + var_b) / (n - 1));
    };
    const double z = std::max(
        {mean_z(0, a.cxx, b.cxx), mean_z(1, a.cyy, b.cyy),
         cov_z(a.cxx, b.cxx, 2 * a.cxx * a.cxx, 2 * b.cxx * b.cxx),
         cov_z(a.cyy, b.cyy, 2 * a.cyy * a.cyy, 2 * b.cyy * b.cyy),
         cov_z(a.cxy, b.cxy, a.cxx * a.cyy + a.cxy * a.cxy, b.cxx * b.cyy + b.cxy * b.cxy)});
    out.push_back(at_most("sde", "terminal-moments-match-ode", z, 3.0,
                          "max z over mean and covariance entries, 10k trajectories each"));
  }
  return out;
}

std::vector<OracleResult> rollout_budget_oracles(const VerifyOptions& options) {
  std::vector<OracleResult> out;
  trainer::TrainConfig config;
  config.seed = options.seed;
  const trainer::Policies policies{random_text_params(config.text_arch, options.seed),
                                   random_flow_params(config.flow_arch, options.seed)};
  for (bool guided : {false, true}) {
    config.train_cfg = guided;
    const auto g = trainer::rollout_group(env::prompt_from_id(5), 0, 1, policies, config);
    const int64_t want = (guided ? 2 : 1) * config.train_timesteps;
    int bad = 0;
    for (const auto& t : g.trajectories) bad += t.velocity_evals != want;
    out.push_back(exact("rollout-budget", guided ? "guided-2n-evals" : "cfg-free-n-evals",
                        bad == 0 && g.reward_calls == config.group_size,
                        std::to_string(want) + " evaluations per trajectory expected, " +
                            std::to_string(g.reward_calls) + " reward calls"));
  }
  return out;
}

std::vector<OracleResult> run_all_oracles(const VerifyOptions& options) {
  std::vector<OracleResult> all;
  for (auto fn : {gradient_oracles, advantage_oracles, ratio_norm_oracles, latent_kl_oracles,
                  sde_oracles, rollout_budget_oracles}) {
    auto part = fn(options);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

std::string format_oracle(const OracleResult& r) {
  return "ORACLE " + r.group + "/" + r.name + " " + (r.passed ? "PASS" : "FAIL") +
         " measured=" + num(r.measured) + " tolerance" + r.relation + num(r.tolerance) +
         (r.detail.empty() ? "" : " " + r.detail);
}

bool all_passed(const std::vector<OracleResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const OracleResult& r) { return r.passed; });
}

}  // namespace unigrpo::ops
