// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/text/text_policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "unigrpo/nn/adam.hpp"

namespace unigrpo::text {
namespace {

constexpr const char* kSurfaceEmb = "text.surface_emb";
constexpr const char* kTokenEmb = "text.token_emb";
constexpr const char* kPosEmb = "text.pos_emb";

struct Blocks {
  int surface;
  int token;
  int pos;
};

Blocks blocks_of(const nn::Layout& layout) {
  return {layout.index(kSurfaceEmb), layout.index(kTokenEmb), layout.index(kPosEmb)};
}

// Logits node for position k given tokens_<k.
nn::NodeId record_position(nn::Tape& tape, const TextArch& arch, const nn::MlpSpec& mlp,
                           const Blocks& b, const env::Prompt& prompt,
                           std::span<const int> tokens, int k) {
  std::vector<nn::NodeId> parts;
  parts.reserve(env::kPromptLength + arch.max_len + 1);
  for (int s : prompt.surface) parts.push_back(tape.embedding(b.surface, s));
  for (int j = 0; j < arch.max_len; ++j) {
    parts.push_back(tape.embedding(b.token, j < k ? tokens[j] : arch.pad_token()));
  }
  parts.push_back(tape.embedding(b.pos, k));
  return nn::record_mlp(tape, mlp, tape.concat(parts));
}

void check_tokens(const TextArch& arch, std::span<const int> tokens) {
  if (static_cast<int>(tokens.size()) > arch.max_len) {
    throw ConfigError("trace of length " + std::to_string(tokens.size()) +
                      " exceeds max_len " + std::to_string(arch.max_len));
  }
  for (int t : tokens) {
    if (t < 0 || t >= env::kReasonVocab) {
      throw ConfigError("token " + std::to_string(t) + " is outside the reasoning vocabulary");
    }
  }
}

// Samples (or argmaxes, when rng is null) one trace.
ReasoningTrace decode(const nn::ParamSet& params, const TextArch& arch,
                      const env::Prompt& prompt, double temperature, Rng* rng) {
  const auto mlp = text_mlp_spec(arch);
  const Blocks b = blocks_of(params.layout());
  nn::Tape tape(params);
  ReasoningTrace trace;
  trace.prompt = prompt;
  std::vector<double> probs(env::kReasonVocab);
  for (int k = 0; k < arch.max_len; ++k) {
    const nn::NodeId logits = record_position(tape, arch, mlp, b, prompt, trace.tokens, k);
    const auto z = tape.value(logits);
    int choice = 0;
    if (rng == nullptr) {
      choice = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    } else {
      const double zmax = *std::max_element(z.begin(), z.end());
      double total = 0.0;
      for (int j = 0; j < env::kReasonVocab; ++j) {
        probs[j] = std::exp((z[j] - zmax) / temperature);
        total += probs[j];
      }
      double u = rng->uniform() * total;
      choice = env::kReasonVocab - 1;
      for (int j = 0; j < env::kReasonVocab; ++j) {
        u -= probs[j];
        if (u < 0.0) {
          choice = j;
          break;
        }
      }
    }
    const auto logp = tape.value(tape.log_softmax(logits));
    trace.tokens.push_back(choice);
    trace.logprobs.push_back(logp[choice]);
    if (choice == env::kEos) break;
  }
  return trace;
}

}  // namespace

nn::MlpSpec text_mlp_spec(const TextArch& arch) {
  return {"text.mlp", {arch.context_size(), arch.hidden, arch.hidden, env::kReasonVocab},
          nn::Activation::kSilu};
}

std::shared_ptr<const nn::Layout> text_layout(const TextArch& arch) {
  nn::Layout::Builder builder;
  builder.add(kSurfaceEmb, env::kSurfaceVocab, arch.embed_dim)
      .add(kTokenEmb, env::kReasonVocab + 1, arch.embed_dim)
      .add(kPosEmb, arch.max_len, arch.embed_dim);
  nn::add_mlp_blocks(builder, text_mlp_spec(arch));
  return std::move(builder).build();
}

nn::ParamSet init_text_params(const TextArch& arch, Rng& rng) {
  nn::ParamSet params(text_layout(arch));
  for (const char* name : {kSurfaceEmb, kTokenEmb, kPosEmb}) {
    for (double& v : params.block(name)) v = 0.5 * rng.normal();
  }
  nn::init_mlp(params, text_mlp_spec(arch), rng, /*zero_output_layer=*/true);
  return params;
}

TokenLogprobs token_logprobs(const nn::ParamSet& params, const TextArch& arch,
                             const env::Prompt& prompt, std::span<const int> tokens) {
  check_tokens(arch, tokens);
  const auto mlp = text_mlp_spec(arch);
  const Blocks b = blocks_of(params.layout());
  TokenLogprobs out{{}, nn::Tape(params), {}};
  for (int k = 0; k < static_cast<int>(tokens.size()); ++k) {
    const nn::NodeId logits = record_position(out.tape, arch, mlp, b, prompt, tokens, k);
    const nn::NodeId dist = out.tape.log_softmax(logits);
    out.log_dists.push_back(dist);
    out.logprobs.push_back(out.tape.value(dist)[tokens[k]]);
  }
  return out;
}

ReasoningTrace sample_trace(const nn::ParamSet& params, const TextArch& arch,
                            const env::Prompt& prompt, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw ConfigError("sampling temperature must be positive");
  return decode(params, arch, prompt, temperature, &rng);
}

ReasoningTrace greedy_trace(const nn::ParamSet& params, const TextArch& arch,
                            const env::Prompt& prompt) {
  return decode(params, arch, prompt, 1.0, nullptr);
}

double greedy_accuracy(const nn::ParamSet& params, const TextArch& arch) {
  int hits = 0;
  const auto prompts = env::all_prompts();
  for (const auto& p : prompts) {
    hits += greedy_trace(params, arch, p).tokens == env::canonical_trace(p);
  }
  return static_cast<double>(hits) / prompts.size();
}

TextLossResult text_surrogate(const nn::ParamSet& params, const TextArch& arch,
                              std::span<const ReasoningTrace> traces,
                              std::span<const double> advantages, const TextLossConfig& config,
                              const nn::ParamSet* ref) {
  if (traces.size() != advantages.size()) {
    throw ConfigError("text surrogate: " + std::to_string(traces.size()) + " traces but " +
                      std::to_string(advantages.size()) + " advantages");
  }
  if (config.beta_kl != 0.0 && ref == nullptr) {
    throw ConfigError("text surrogate: KL weight set without a reference policy");
  }
  TextLossResult out{0.0, nn::GradSet(params.layout_ptr()), {}};
  if (traces.empty()) return out;

  const double inv_n = 1.0 / static_cast<double>(traces.size());
  double ratio_sum = 0.0;
  double kl_sum = 0.0;
  int clipped = 0;
  double kl_objective = 0.0;
  std::vector<std::vector<double>> seed_values;
  std::vector<nn::Seed> seeds;

  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& tr = traces[i];
    if (tr.tokens.empty()) continue;
    if (tr.logprobs.size() != tr.tokens.size()) {
      throw ConfigError("trace " + std::to_string(i) + " has misaligned old log-probs");
    }
    auto cur = token_logprobs(params, arch, tr.prompt, tr.tokens);
    std::optional<TokenLogprobs> refp;
    if (config.beta_kl != 0.0) refp = token_logprobs(*ref, arch, tr.prompt, tr.tokens);

    const double w = inv_n / static_cast<double>(tr.tokens.size());
    seed_values.assign(tr.tokens.size(), std::vector<double>(env::kReasonVocab, 0.0));
    seeds.clear();
    for (std::size_t k = 0; k < tr.tokens.size(); ++k) {
      const double log_r = cur.logprobs[k] - tr.logprobs[k];
      if (!std::isfinite(log_r)) {
        throw NumericError("non-finite text ratio at trace " + std::to_string(i) +
                           ", position " + std::to_string(k));
      }
      const ClippedTerm term = clipped_term(log_r, advantages[i], config.clip_eps);
      out.stats.surrogate += w * term.value;
      ratio_sum += std::exp(log_r);
      out.stats.max_ratio = std::max(out.stats.max_ratio, std::exp(log_r));
      clipped += term.clipped;
      auto& g = seed_values[k];
      g[tr.tokens[k]] += w * term.dlogr;

      if (refp) {
        const auto lp = cur.tape.value(cur.log_dists[k]);
        const auto lq = refp->tape.value(refp->log_dists[k]);
        double kl = 0.0;
        for (int j = 0; j < env::kReasonVocab; ++j) kl += std::exp(lp[j]) * (lp[j] - lq[j]);
        kl_sum += kl;
        kl_objective += w * kl;
        // d KL / d logp_j = p_j (logp_j - logq_j + 1); log_softmax backward
        // turns this into p_j (logp_j - logq_j - KL) on the logits.
        for (int j = 0; j < env::kReasonVocab; ++j) {
          g[j] -= config.beta_kl * w * std::exp(lp[j]) * (lp[j] - lq[j] + 1.0);
        }
      }
      seeds.push_back({cur.log_dists[k], g});
      ++out.stats.tokens;
    }
    cur.tape.backward(seeds, out.grads);
    out.grads.note_accumulation();
  }

  out.objective = out.stats.surrogate - config.beta_kl * kl_objective;
  if (out.stats.tokens > 0) {
    out.stats.mean_ratio = ratio_sum / out.stats.tokens;
    out.stats.clip_fraction = static_cast<double>(clipped) / out.stats.tokens;
    out.stats.mean_kl = kl_sum / out.stats.tokens;
  }
  return out;
}

TextCeLoss text_ce_loss(const nn::ParamSet& params, const TextArch& arch,
                       std::span<const env::TextPair> batch) {
  if (batch.empty()) throw ConfigError("text cross-entropy needs a nonempty batch");
  TextCeLoss out{0.0, nn::GradSet(params.layout_ptr())};
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<std::vector<double>> seed_values;
  std::vector<nn::Seed> seeds;
  for (const auto& pair : batch) {
    auto lp = token_logprobs(params, arch, pair.prompt, pair.trace);
    seed_values.assign(pair.trace.size(), std::vector<double>(env::kReasonVocab, 0.0));
    seeds.clear();
    for (std::size_t k = 0; k < pair.trace.size(); ++k) {
      out.loss -= scale * lp.logprobs[k];
      seed_values[k][pair.trace[k]] = -scale;
      seeds.push_back({lp.log_dists[k], seed_values[k]});
    }
    lp.tape.backward(seeds, out.grads);
  }
  return out;
}

TextPretrainReport pretrain_text(std::span<const env::TextPair> data, const TextArch& arch,
                                 const TextPretrainConfig& config, Rng& rng) {
  if (data.empty()) throw ConfigError("text pretraining needs a nonempty dataset");
  TextPretrainReport report{init_text_params(arch, rng), {}, true, 0.0};
  nn::AdamState adam(report.params.layout_ptr(), nn::AdamConfig{config.lr});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<env::TextPair> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t idx = start; idx < end; ++idx) batch.push_back(data[order[idx]]);
      const auto ce = text_ce_loss(report.params, arch, batch);
      loss_sum += ce.loss * static_cast<double>(batch.size());
      nn::adam_step(report.params, ce.grads, adam);
    }
    const double epoch_loss = loss_sum / static_cast<double>(data.size());
    if (!report.epoch_losses.empty() && epoch_loss > report.epoch_losses.back()) {
      report.monotone = false;
    }
    report.epoch_losses.push_back(epoch_loss);
  }
  report.greedy_accuracy = greedy_accuracy(report.params, arch);
  return report;
}

}  // namespace unigrpo::text
