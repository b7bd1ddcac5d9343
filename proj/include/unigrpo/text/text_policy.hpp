// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <vector>

#include "unigrpo/env/task.hpp"
#include "unigrpo/nn/mlp.hpp"
#include "unigrpo/nn/param_set.hpp"
#include "unigrpo/nn/tape.hpp"
#include "unigrpo/ppo.hpp"
#include "unigrpo/rng.hpp"

namespace unigrpo::text {

// Autoregressive policy over the reasoning vocabulary. The context at
// position k is the concatenation of the three prompt surface embeddings,
// one slot per previous position (PAD beyond k), and a position embedding.
struct TextArch {
  int embed_dim = 8;
  int hidden = 64;
  int max_len = env::kCanonicalTraceLength;

  int pad_token() const { return env::kReasonVocab; }
  int context_size() const { return (env::kPromptLength + max_len + 1) * embed_dim; }
};

nn::MlpSpec text_mlp_spec(const TextArch& arch);
std::shared_ptr<const nn::Layout> text_layout(const TextArch& arch);
// Embeddings ~ N(0, 0.5^2); the output layer starts at zero, so the initial
// policy is uniform over the vocabulary.
nn::ParamSet init_text_params(const TextArch& arch, Rng& rng);

struct ReasoningTrace {
  env::Prompt prompt;
  std::vector<int> tokens;
  // log pi(token_k | prompt, tokens_<k) under the sampling snapshot at
  // temperature 1.
  std::vector<double> logprobs;
};

struct TokenLogprobs {
  std::vector<double> logprobs;
  nn::Tape tape;
  // log_softmax node per position; full distributions are tape values.
  std::vector<nn::NodeId> log_dists;
};

// Throws ConfigError for an out-of-vocabulary token or a trace longer than
// max_len.
TokenLogprobs token_logprobs(const nn::ParamSet& params, const TextArch& arch,
                             const env::Prompt& prompt, std::span<const int> tokens);

// Categorical sampling from softmax(logits / temperature); stops after EOS or
// at max_len.
ReasoningTrace sample_trace(const nn::ParamSet& params, const TextArch& arch,
                            const env::Prompt& prompt, double temperature, Rng& rng);
// Argmax decoding; ties go to the lowest token id.
ReasoningTrace greedy_trace(const nn::ParamSet& params, const TextArch& arch,
                            const env::Prompt& prompt);

// Fraction of all distinct prompts whose greedy trace is canonical.
double greedy_accuracy(const nn::ParamSet& params, const TextArch& arch);

struct TextLossStats {
  double surrogate = 0.0;
  double mean_ratio = 0.0;
  double max_ratio = 0.0;
  double clip_fraction = 0.0;
  double mean_kl = 0.0;
  int tokens = 0;
};

struct TextLossResult {
  double objective = 0.0;  // to be maximized
  nn::GradSet grads;       // dJ/dtheta
  TextLossStats stats;
};

struct TextLossConfig {
  double clip_eps = 0.2;
  double beta_kl = 0.0;
};

// PPO-clipped surrogate with per-trace 1/|y| and across-trace 1/N averaging,
// minus beta_kl times the exact token-level KL to `ref` (which may be null
// when beta_kl is 0).
TextLossResult text_surrogate(const nn::ParamSet& params, const TextArch& arch,
                              std::span<const ReasoningTrace> traces,
                              std::span<const double> advantages, const TextLossConfig& config,
                              const nn::ParamSet* ref);

struct TextPretrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double lr = 3e-3;
};

struct TextCeLoss {
  double loss = 0.0;  // mean over pairs of the summed token negative log-likelihood
  nn::GradSet grads;  // gradient of loss (descent direction is -grads)
};

TextCeLoss text_ce_loss(const nn::ParamSet& params, const TextArch& arch,
                        std::span<const env::TextPair> batch);

struct TextPretrainReport {
  nn::ParamSet params;
  std::vector<double> epoch_losses;
  bool monotone = true;
  double greedy_accuracy = 0.0;
};

TextPretrainReport pretrain_text(std::span<const env::TextPair> data, const TextArch& arch,
                                 const TextPretrainConfig& config, Rng& rng);

}  // namespace unigrpo::text
