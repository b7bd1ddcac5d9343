// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "unigrpo/common.hpp"
#include "unigrpo/nn/adam.hpp"
#include "unigrpo/nn/checkpoint.hpp"
#include "unigrpo/nn/grad_check.hpp"
#include "unigrpo/nn/mlp.hpp"
#include "unigrpo/nn/tape.hpp"
#include "unigrpo/rng.hpp"

using namespace unigrpo;
using namespace unigrpo::nn;

namespace {

ParamSet random_params(const std::shared_ptr<const Layout>& layout, uint64_t seed, double scale) {
  ParamSet p(layout);
  Rng rng(seed);
  for (double& v : p.values()) v = scale * (2.0 * rng.uniform() - 1.0);
  return p;
}

// Second, independently written forward pass for a tanh MLP.
std::vector<double> reference_forward(const ParamSet& p, const MlpSpec& spec,
                                      std::vector<double> x) {
  const int layers = static_cast<int>(spec.sizes.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    auto w = p.block(spec.weight_name(l));
    auto b = p.block(spec.bias_name(l));
    const int in = spec.sizes[l];
    const int out = spec.sizes[l + 1];
    std::vector<double> y(out);
    for (int r = 0; r < out; ++r) {
      double acc = b[r];
      for (int c = 0; c < in; ++c) acc += w[r * in + c] * x[c];
      y[r] = (l + 1 < layers) ? std::tanh(acc) : acc;
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace

TEST_CASE("philox known-answer vectors") {
  auto zero = Rng::philox({0, 0, 0, 0}, {0, 0});
  CHECK(zero == std::array<uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  auto ones = Rng::philox({~0u, ~0u, ~0u, ~0u}, {~0u, ~0u});
  CHECK(ones == std::array<uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
}

TEST_CASE("rng streams are reproducible and distinct") {
  auto a = Rng::stream(7, "rollout", {1, 2, 3});
  auto b = Rng::stream(7, "rollout", {1, 2, 3});
  auto c = Rng::stream(7, "rollout", {1, 2, 4});
  for (int i = 0; i < 16; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  Rng r(3);
  double mean = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    mean += z;
    sq += z * z;
  }
  mean /= n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("forward_mlp examples") {
  SUBCASE("zero weights give zero output through tanh") {
    MlpSpec spec{"m", {3, 5, 2}, Activation::kTanh};
    Layout::Builder b;
    add_mlp_blocks(b, spec);
    ParamSet p(std::move(b).build());
    std::vector<double> x{0.3, -1.2, 4.0};
    auto f = forward_mlp(p, x, spec);
    CHECK(f.output == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("single affine layer") {
    MlpSpec spec{"lin", {1, 1}, Activation::kTanh};
    Layout::Builder b;
    add_mlp_blocks(b, spec);
    ParamSet p(std::move(b).build());
    p.block("lin.l0.w")[0] = 2.0;
    p.block("lin.l0.b")[0] = 1.0;
    std::vector<double> x{3.0};
    CHECK(forward_mlp(p, x, spec).output[0] == 7.0);
  }
  SUBCASE("random two-layer net matches straight-line re-evaluation") {
    MlpSpec spec{"net", {4, 7, 3}, Activation::kTanh};
    Layout::Builder b;
    add_mlp_blocks(b, spec);
    auto p = random_params(std::move(b).build(), 11, 0.8);
    std::vector<double> x{0.1, -0.4, 0.9, 0.25};
    auto f = forward_mlp(p, x, spec);
    auto ref = reference_forward(p, spec, x);
    for (int i = 0; i < 3; ++i) CHECK(f.output[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  }
  SUBCASE("shape mismatch names the block") {
    MlpSpec spec{"net", {4, 2}, Activation::kTanh};
    Layout::Builder b;
    add_mlp_blocks(b, spec);
    ParamSet p(std::move(b).build());
    std::vector<double> x{1.0, 2.0};
    CHECK_THROWS_WITH_AS(forward_mlp(p, x, spec), doctest::Contains("net.l0.w"), ConfigError);
  }
}

TEST_CASE("backward examples") {
  SUBCASE("w^2 at 3 gives 6") {
    Layout::Builder b;
    b.add("w", 1, 1);
    ParamSet p(std::move(b).build());
    p.values()[0] = 3.0;
    Tape tape(p);
    auto out = tape.sum(tape.square(tape.embedding(0, 0)));
    std::vector<double> seed{1.0};
    auto g = tape.backward(out, seed);
    CHECK(g.values()[0] == 6.0);
  }
  SUBCASE("sum(tanh(W x)) matches central differences") {
    Layout::Builder b;
    b.add("w", 3, 4).add("b", 3, 1);
    auto p = random_params(std::move(b).build(), 5, 0.7);
    p.block("b")[0] = p.block("b")[1] = p.block("b")[2] = 0.0;
    const std::vector<double> x{0.5, -0.3, 0.8, -1.1};
    auto f = [&](const ParamSet& q) {
      Tape t(q);
      return t.value(t.sum(t.tanh(t.affine(t.input(x), 0, 1))))[0];
    };
    Tape tape(p);
    auto out = tape.sum(tape.tanh(tape.affine(tape.input(x), 0, 1)));
    std::vector<double> seed{1.0};
    auto g = tape.backward(out, seed);
    for (int i = 0; i < 12; ++i) {
      ParamSet up = p, dn = p;
      up.values()[i] += 1e-5;
      dn.values()[i] -= 1e-5;
      const double numeric = (f(up) - f(dn)) / 2e-5;
      CHECK(g.values()[i] == doctest::Approx(numeric).epsilon(1e-5));
    }
  }
  SUBCASE("constant function has zero gradient") {
    Layout::Builder b;
    b.add("w", 2, 2).add("e", 3, 2);
    auto p = random_params(std::move(b).build(), 9, 1.0);
    Tape tape(p);
    std::vector<double> x{1.0, 2.0};
    auto out = tape.sum(tape.square(tape.input(x)));
    std::vector<double> seed{1.0};
    auto g = tape.backward(out, seed);
    for (double v : g.values()) CHECK(v == 0.0);
    CHECK(tape.adjoint(0)[0] == 2.0);
    CHECK(tape.adjoint(0)[1] == 4.0);
  }
  SUBCASE("seed shape mismatch is an error") {
    Layout::Builder b;
    b.add("w", 1, 1);
    ParamSet p(std::move(b).build());
    Tape tape(p);
    auto out = tape.embedding(0, 0);
    std::vector<double> seed{1.0, 2.0};
    CHECK_THROWS_AS(tape.backward(out, seed), ConfigError);
  }
}

TEST_CASE("every tape primitive passes finite differences") {
  Layout::Builder b;
  b.add("emb", 5, 3).add("w1", 4, 6).add("b1", 4, 1).add("w2", 3, 4).add("b2", 3, 1);
  auto p = random_params(std::move(b).build(), 21, 0.6);
  const std::vector<double> x{0.2, -0.7, 0.4};
  // Touches embedding, concat, mean, affine, silu, tanh, softmax, log,
  // log_softmax, square and sum.
  auto build = [&](Tape& t) {
    NodeId e1 = t.embedding(0, 1);
    NodeId e3 = t.embedding(0, 3);
    std::array<NodeId, 2> pool{e1, e3};
    NodeId pooled = t.mean(pool);
    std::array<NodeId, 2> parts{pooled, t.input(x)};
    NodeId h = t.silu(t.affine(t.concat(parts), 1, 2));
    NodeId z = t.affine(t.tanh(h), 3, 4);
    NodeId lp = t.log_softmax(z);
    NodeId lsm = t.log(t.softmax(z));
    std::array<NodeId, 2> both{lp, t.square(lsm)};
    return t.sum(t.concat(both));
  };
  auto f = [&](const ParamSet& q) {
    Tape t(q);
    return t.value(build(t))[0];
  };
  Tape tape(p);
  auto out = build(tape);
  std::vector<double> seed{1.0};
  auto g = tape.backward(out, seed);
  Rng rng(1);
  auto report = finite_diff_check(f, p, g, 100, 1e-4, rng);
  CHECK(report.passed());
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("softmax normalisation and log-softmax range") {
  Layout::Builder b;
  b.add("unused", 1, 1);
  ParamSet p(std::move(b).build());
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(9);
    for (double& v : logits) v = -50.0 + 100.0 * rng.uniform();
    logits[trial % 9] = (trial % 2) ? 50.0 : -50.0;
    Tape t(p);
    auto in = t.input(logits);
    double s = 0.0;
    for (double v : t.value(t.softmax(in))) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
    for (double v : t.value(t.log_softmax(in))) CHECK(std::isfinite(v));
  }
}

TEST_CASE("finite_diff_check on a quadratic and on a nondeterministic loss") {
  Layout::Builder b;
  b.add("q", 4, 1);
  auto p = random_params(std::move(b).build(), 2, 1.0);
  auto f = [](const ParamSet& q) {
    double acc = 0.0;
    for (double v : q.values()) acc += 1.5 * v * v;
    return acc;
  };
  GradSet g(p.layout_ptr());
  for (std::size_t i = 0; i < 4; ++i) g.values()[i] = 3.0 * p.values()[i];
  Rng rng(1);
  auto report = finite_diff_check(f, p, g, 50, 1e-8, rng);
  CHECK(report.passed());
  CHECK(report.max_rel_error < 1e-8);

  int calls = 0;
  auto flaky = [&](const ParamSet&) { return static_cast<double>(++calls); };
  auto bad = finite_diff_check(flaky, p, g, 10, 1e-4, rng);
  CHECK(bad.aborted);
  CHECK_FALSE(bad.passed());

  g.values()[2] += 1.0;
  auto wrong = finite_diff_check(f, p, g, 200, 1e-4, rng);
  CHECK_FALSE(wrong.passed());
  CHECK(wrong.failing_blocks == std::vector<std::string>{"q"});
}

TEST_CASE("adam_step") {
  Layout::Builder b;
  b.add("a", 2, 1).add("c", 1, 1);
  auto layout = std::move(b).build();
  ParamSet p(layout);
  p.values()[0] = 1.0;
  p.values()[1] = -2.0;
  p.values()[2] = 0.5;

  SUBCASE("zero gradient leaves parameters and moments unchanged") {
    AdamState s(layout, {.lr = 0.1});
    GradSet g(layout);
    const ParamSet before = p;
    adam_step(p, g, s);
    CHECK(std::equal(p.values().begin(), p.values().end(), before.values().begin()));
    for (double v : s.first_moment.values()) CHECK(v == 0.0);
    for (double v : s.second_moment.values()) CHECK(v == 0.0);
    CHECK(s.step == 1);
  }
  SUBCASE("first step moves by lr * sign(g)") {
    AdamState s(layout, {.lr = 0.1});
    GradSet g(layout);
    g.fill(1.0);
    adam_step(p, g, s);
    // m_hat = 1, v_hat = 1 -> delta = -0.1 / (1 + 1e-8)
    CHECK(p.values()[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(p.values()[2] == doctest::Approx(0.5 - 0.1).epsilon(1e-9));
  }
  SUBCASE("repeated gradient moves monotonically against its sign") {
    AdamState s(layout, {.lr = 0.05});
    GradSet g(layout);
    g.values()[0] = -3.0;
    double prev = p.values()[0];
    for (int i = 0; i < 2; ++i) {
      adam_step(p, g, s);
      CHECK(p.values()[0] > prev);
      prev = p.values()[0];
    }
  }
  SUBCASE("non-finite gradient is rejected with the block name") {
    AdamState s(layout, {.lr = 0.1});
    GradSet g(layout);
    g.values()[2] = std::nan("");
    const ParamSet before = p;
    CHECK_THROWS_WITH_AS(adam_step(p, g, s), doctest::Contains("'c'"), NumericError);
    CHECK(s.step == 0);
    CHECK(std::equal(p.values().begin(), p.values().end(), before.values().begin()));
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Layout::Builder b;
  b.add("text.emb", 3, 2).add("flow.w", 2, 5);
  auto p = random_params(std::move(b).build(), 77, 3.0);
  p.values()[0] = -0.0;
  p.values()[1] = 1e-310;
  std::vector<TensorRecord> records;
  append_blocks(records, p, "policy/");
  append_scalar(records, "meta/update", 42.0);

  const auto path = std::filesystem::temp_directory_path() / "unigrpo_test_ckpt.bin";
  write_checkpoint(path, records);
  auto loaded = read_checkpoint(path);
  ParamSet q(p.layout_ptr());
  load_blocks(loaded, q, "policy/");
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(std::bit_cast<uint64_t>(p.values()[i]) == std::bit_cast<uint64_t>(q.values()[i]));
  }
  CHECK(find_scalar(loaded, "meta/update") == 42.0);

  std::ifstream raw(path, std::ios::binary);
  char magic[4];
  raw.read(magic, 4);
  CHECK(std::string(magic, 4) == "UGRP");

  Layout::Builder other;
  other.add("text.emb", 2, 2).add("flow.w", 2, 5);
  ParamSet wrong(std::move(other).build());
  CHECK_THROWS_AS(load_blocks(loaded, wrong, "policy/"), CheckpointError);

  {
    std::ofstream trunc(path, std::ios::binary | std::ios::trunc);
    trunc.write("UGRP\1\0\0\0", 8);
  }
  CHECK_THROWS_AS(read_checkpoint(path), CheckpointError);
  std::filesystem::remove(path);
}
