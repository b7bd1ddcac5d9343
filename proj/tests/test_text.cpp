// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "unigrpo/nn/grad_check.hpp"
#include "unigrpo/text/text_policy.hpp"

using namespace unigrpo;
using namespace unigrpo::text;

namespace {

// Initial params with a non-zero head so the policy is not uniform.
nn::ParamSet random_params(const TextArch& arch, uint64_t seed, double head_scale = 0.5) {
  auto rng = Rng::stream(seed, "text-test-params");
  auto params = init_text_params(arch, rng);
  const auto mlp = text_mlp_spec(arch);
  for (double& v : params.block(mlp.weight_name(2))) v = head_scale * rng.normal();
  for (double& v : params.block(mlp.bias_name(2))) v = head_scale * rng.normal();
  return params;
}

void perturb(nn::ParamSet& params, uint64_t seed, double scale) {
  auto rng = Rng::stream(seed, "text-test-perturb");
  for (double& v : params.values()) v += scale * rng.normal();
}

// Independent forward pass: explicit context assembly, dense layers with
// SiLU written out, then an explicit softmax over the logits.
std::vector<double> slow_distribution(const nn::ParamSet& p, const TextArch& arch,
                                      const env::Prompt& prompt, const std::vector<int>& prefix) {
  const int e = arch.embed_dim;
  std::vector<double> ctx;
  auto push_row = [&](const char* block, int row) {
    auto table = p.block(block);
    for (int c = 0; c < e; ++c) ctx.push_back(table[row * e + c]);
  };
  for (int s : prompt.surface) push_row("text.surface_emb", s);
  const int k = static_cast<int>(prefix.size());
  for (int j = 0; j < arch.max_len; ++j) push_row("text.token_emb", j < k ? prefix[j] : 9);
  push_row("text.pos_emb", k);

  std::vector<double> h = ctx;
  const std::vector<int> sizes{arch.context_size(), arch.hidden, arch.hidden, 9};
  for (int l = 0; l < 3; ++l) {
    auto w = p.block("text.mlp.l" + std::to_string(l) + ".w");
    auto b = p.block("text.mlp.l" + std::to_string(l) + ".b");
    std::vector<double> next(sizes[l + 1]);
    for (int r = 0; r < sizes[l + 1]; ++r) {
      double acc = b[r];
      for (int c = 0; c < sizes[l]; ++c) acc += w[r * sizes[l] + c] * h[c];
      next[r] = l < 2 ? acc / (1.0 + std::exp(-acc)) : acc;
    }
    h = next;
  }
  double total = 0.0;
  for (double z : h) total += std::exp(z);
  for (double& z : h) z = std::exp(z) / total;
  return h;
}

std::vector<ReasoningTrace> sample_group(const nn::ParamSet& params, const TextArch& arch,
                                         int n, uint64_t seed) {
  auto rng = Rng::stream(seed, "text-test-group");
  std::vector<ReasoningTrace> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(sample_trace(params, arch, env::sample_prompt(rng), 1.0, rng));
  }
  return out;
}

}  // namespace

TEST_CASE("uniform head gives -log|V| for every token") {
  const TextArch arch;
  auto rng = Rng::stream(1, "init");
  const auto params = init_text_params(arch, rng);
  const auto prompt = env::make_prompt({3, 1, 0}, {2, 0, 1});
  const std::vector<int> tokens{env::kQ2, env::kFar, env::kWide, env::kEos};
  const auto lp = token_logprobs(params, arch, prompt, tokens);
  REQUIRE(lp.logprobs.size() == 4);
  for (double v : lp.logprobs) CHECK(v == doctest::Approx(-std::log(9.0)).epsilon(1e-15));
}

TEST_CASE("token log-probs match an explicit slow recomputation") {
  const TextArch arch;
  const auto params = random_params(arch, 2);
  auto rng = Rng::stream(2, "prompts");
  for (int trial = 0; trial < 20; ++trial) {
    const auto prompt = env::sample_prompt(rng);
    std::vector<int> tokens;
    for (int k = 0; k < 4; ++k) tokens.push_back(static_cast<int>(rng.below(9)));
    const auto lp = token_logprobs(params, arch, prompt, tokens);
    for (int k = 0; k < 4; ++k) {
      const auto dist = lp.tape.value(lp.log_dists[k]);
      double total = 0.0;
      for (double v : dist) total += std::exp(v);
      CHECK(std::abs(total - 1.0) < 1e-12);
      const std::vector<int> prefix(tokens.begin(), tokens.begin() + k);
      const auto slow = slow_distribution(params, arch, prompt, prefix);
      for (int j = 0; j < 9; ++j) CHECK(std::abs(std::exp(dist[j]) - slow[j]) < 1e-12);
      CHECK(std::abs(lp.logprobs[k] - std::log(slow[tokens[k]])) < 1e-12);
    }
  }
}

TEST_CASE("out-of-vocabulary tokens are rejected") {
  const TextArch arch;
  const auto params = random_params(arch, 3);
  const auto prompt = env::make_prompt({0, 0, 0}, {0, 0, 0});
  CHECK_THROWS_AS(token_logprobs(params, arch, prompt, std::vector<int>{0, 9}), ConfigError);
  CHECK_THROWS_AS(token_logprobs(params, arch, prompt, std::vector<int>{-1}), ConfigError);
  CHECK_THROWS_AS(token_logprobs(params, arch, prompt, std::vector<int>{0, 1, 2, 3, 4}),
                  ConfigError);
}

TEST_CASE("sampling records self-consistent log-probs and cools to greedy") {
  const TextArch arch;
  const auto params = random_params(arch, 4, 1.5);
  auto rng = Rng::stream(4, "sample");
  int eos_terminated = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto prompt = env::sample_prompt(rng);
    const auto tr = sample_trace(params, arch, prompt, 1.0, rng);
    REQUIRE(!tr.tokens.empty());
    CHECK(tr.tokens.size() <= 4u);
    if (tr.tokens.size() < 4u) CHECK(tr.tokens.back() == env::kEos);
    eos_terminated += tr.tokens.back() == env::kEos;
    const auto lp = token_logprobs(params, arch, prompt, tr.tokens);
    for (std::size_t k = 0; k < tr.tokens.size(); ++k) {
      CHECK(std::abs(lp.logprobs[k] - tr.logprobs[k]) < 1e-12);
    }
    const auto cold = sample_trace(params, arch, prompt, 1e-6, rng);
    CHECK(cold.tokens == greedy_trace(params, arch, prompt).tokens);
  }
  CHECK(eos_terminated > 0);
  CHECK_THROWS_AS(sample_trace(params, arch, env::sample_prompt(rng), 0.0, rng), ConfigError);
}

TEST_CASE("greedy decoding breaks ties toward the lowest id") {
  const TextArch arch;
  auto rng = Rng::stream(5, "init");
  const auto params = init_text_params(arch, rng);  // all logits equal
  const auto tr = greedy_trace(params, arch, env::make_prompt({1, 1, 1}, {0, 0, 0}));
  CHECK(tr.tokens == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("clipped surrogate hand examples") {
  const auto up = clipped_term(std::log(1.3), 2.0, 0.2);
  CHECK(up.value == doctest::Approx(2.4).epsilon(1e-12));
  CHECK(up.clipped);
  CHECK(up.dlogr == 0.0);
  const auto down = clipped_term(std::log(0.7), -1.0, 0.2);
  CHECK(down.value == doctest::Approx(-0.8).epsilon(1e-12));
  CHECK(down.dlogr == 0.0);
  const auto inside = clipped_term(std::log(1.1), 2.0, 0.2);
  CHECK(inside.value == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(inside.dlogr == doctest::Approx(2.2).epsilon(1e-12));
  CHECK_FALSE(inside.clipped);
  // Pessimistic branch keeps the unclipped value when it is lower.
  const auto low = clipped_term(std::log(0.5), 1.0, 0.2);
  CHECK(low.value == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(low.dlogr == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("clipping bounds every term by (1+eps) max|A|") {
  auto rng = Rng::stream(6, "clip-bound");
  for (int i = 0; i < 10000; ++i) {
    const double a = 3.0 * (2.0 * rng.uniform() - 1.0);
    const double log_r = 2.0 * rng.normal();
    const auto t = clipped_term(log_r, a, 0.2);
    if (a > 0.0) CHECK(t.value <= 1.2 * std::abs(a) + 1e-15);
  }
}

TEST_CASE("at theta = theta_old the surrogate is the mean advantage") {
  const TextArch arch;
  const auto params = random_params(arch, 7);
  const auto group = sample_group(params, arch, 8, 7);
  const std::vector<double> adv{1.5, -0.5, 0.25, -1.0, 0.0, 2.0, -0.75, 0.5};
  const auto res = text_surrogate(params, arch, group, adv, {0.2, 0.0}, nullptr);
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / adv.size();
  CHECK(std::abs(res.objective - mean) < 1e-12);
  CHECK(std::abs(res.stats.mean_ratio - 1.0) < 1e-10);
  CHECK(std::abs(res.stats.max_ratio - 1.0) < 1e-10);
  CHECK(res.stats.clip_fraction == 0.0);

  const auto with_ref = text_surrogate(params, arch, group, adv, {0.2, 0.3}, &params);
  CHECK(std::abs(with_ref.stats.mean_kl) < 1e-12);
  CHECK(std::abs(with_ref.objective - mean) < 1e-12);
  CHECK_THROWS_AS(text_surrogate(params, arch, group, adv, {0.2, 0.3}, nullptr), ConfigError);
}

TEST_CASE("exact KL is non-negative and vanishes only at equality") {
  const TextArch arch;
  const auto ref = random_params(arch, 8);
  auto moved = ref;
  perturb(moved, 8, 0.05);
  const auto group = sample_group(ref, arch, 16, 8);
  const std::vector<double> zeros(group.size(), 0.0);
  const auto res = text_surrogate(moved, arch, group, zeros, {0.2, 1.0}, &ref);
  CHECK(res.stats.mean_kl > 1e-8);
  CHECK(res.objective < 0.0);
  const auto same = text_surrogate(ref, arch, group, zeros, {0.2, 1.0}, &ref);
  CHECK(std::abs(same.stats.mean_kl) < 1e-10);
}

TEST_CASE("text surrogate gradient passes finite differences") {
  const TextArch arch;
  const auto old = random_params(arch, 9);
  const auto ref = random_params(arch, 10);
  auto params = old;
  perturb(params, 9, 0.02);
  const auto group = sample_group(old, arch, 8, 9);
  const std::vector<double> adv{1.2, -0.3, 0.8, -1.5, 0.4, -0.2, 1.0, -1.4};
  const TextLossConfig cfg{0.2, 0.1};
  const auto res = text_surrogate(params, arch, group, adv, cfg, &ref);
  auto rng = Rng::stream(9, "fd");
  const auto report = nn::finite_diff_check(
      [&](const nn::ParamSet& p) {
        return text_surrogate(p, arch, group, adv, cfg, &ref).objective;
      },
      params, res.grads, 150, 1e-4, rng);
  INFO("max rel error " << report.max_rel_error);
  CHECK(report.passed());
}

TEST_CASE("a non-finite stored log-prob aborts with its location") {
  const TextArch arch;
  const auto params = random_params(arch, 11);
  auto group = sample_group(params, arch, 2, 11);
  group[1].logprobs[0] = std::nan("");
  const std::vector<double> adv{1.0, -1.0};
  try {
    text_surrogate(params, arch, group, adv, {}, nullptr);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("trace 1, position 0") != std::string::npos);
  }
}

TEST_CASE("supervised pretraining reaches the clean and noisy accuracy targets") {
  const TextArch arch;
  const TextPretrainConfig cfg;
  env::TaskConfig clean;
  clean.p_noise = 0.0;
  auto data_rng = Rng::stream(12, "data");
  const auto clean_data = env::make_pretrain_data(data_rng, 2000, clean);
  auto rng = Rng::stream(12, "pretrain");
  const auto clean_report = pretrain_text(clean_data.text, arch, cfg, rng);
  INFO("clean accuracy " << clean_report.greedy_accuracy);
  CHECK(clean_report.greedy_accuracy >= 0.95);
  CHECK(clean_report.monotone);
  CHECK(clean_report.epoch_losses.back() < clean_report.epoch_losses.front());

  const env::TaskConfig noisy;
  const auto noisy_data = env::make_pretrain_data(data_rng, 2000, noisy);
  const auto noisy_report = pretrain_text(noisy_data.text, arch, cfg, rng);
  INFO("noisy accuracy " << noisy_report.greedy_accuracy);
  CHECK(noisy_report.greedy_accuracy <= 0.9);
  CHECK(noisy_report.greedy_accuracy >= 0.5);
}
