// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "maskfe/model.hpp"
#include "maskfe/rng.hpp"
#include "maskfe/scenesim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace maskfe;

namespace {

Arr random_arr(Rng& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
  Arr a(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = rng.uniform(lo, hi);
  return a;
}

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.units = 16;
  cfg.ffn_dim = 24;
  cfg.conv_kernel = 3;
  cfg.left_context = 4;
  cfg.mask_dim = 32;  // 8 mels x stack 4
  cfg.frozen_units = 12;
  cfg.frozen_kernel = 3;
  return cfg;
}

NormStats tiny_stats(Rng& rng, int n_mels) {
  NormStats s;
  s.mean = random_arr(rng, 1, n_mels, -2.0, 0.0);
  s.std = random_arr(rng, 1, n_mels, 2.0, 3.0);
  return s;
}

TrainingExample fake_example(Rng& rng, int frames, int n_mels, int stack, Topology mode) {
  const int mask_dim = n_mels * stack;
  TrainingExample ex;
  ex.channel_a.values = random_arr(rng, frames, mask_dim, -1.5, 1.5);
  ex.channel_a.n_mels = n_mels;
  ex.channel_a.stack = stack;
  ex.channel_b.values = random_arr(rng, frames, mask_dim, -1.5, 1.5);
  ex.channel_b.n_mels = n_mels;
  ex.channel_b.stack = stack;
  ex.noisy_linear_mel.values = random_arr(rng, frames, mask_dim, 0.01, 2.0);
  ex.target_mask.values = random_arr(rng, frames, mask_dim, 0.0, 1.0);
  ex.clean_asr.values = random_arr(rng, frames, mask_dim, -1.5, 1.5);
  ex.clean_asr.n_mels = n_mels;
  ex.clean_asr.stack = stack;
  ex.meta.mode = mode;
  return ex;
}

Arr plain_features(const Arr& stacked_linear, const NormStats& stats, int stack) {
  Arr mean_t = tile_stats_row(stats.mean, stack);
  Arr std_t = tile_stats_row(stats.std, stack);
  Arr lg = stacked_linear.max(kLogFloor).log();
  return (lg - mean_t.replicate(lg.rows(), 1)) / std_t.replicate(lg.rows(), 1);
}

}  // namespace

TEST_CASE("init: deterministic per seed and theta_alpha statistics") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams a = init_params(cfg, 7);
  FrontendParams b = init_params(cfg, 7);
  REQUIRE(a.trainable.size() == b.trainable.size());
  for (const auto& [name, t] : a.trainable) CHECK((t.value() == b.at(name).value()).all());
  FrontendParams c = init_params(cfg, 8);
  CHECK(!(a.at("dec.w").value() == c.at("dec.w").value()).all());

  // theta_alpha draws pooled across seeds: sample std close to 0.01.
  double sum = 0.0, sq = 0.0;
  int n = 0;
  for (std::uint64_t seed = 0; seed < 625; ++seed) {
    FrontendParams p = init_params(cfg, seed);
    const Arr& w = p.at("alpha.w").value();
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      sum += w(i, 0);
      sq += w(i, 0) * w(i, 0);
      ++n;
    }
    CHECK((p.at("alpha.b").value() == 0.0).all());
  }
  REQUIRE(n == 10000);
  double mean = sum / n;
  double stddev = std::sqrt(sq / n - mean * mean);
  CHECK(stddev > 0.009);
  CHECK(stddev < 0.011);
}

TEST_CASE("init: predicted alpha stays near 0.5 on unit-norm encoder outputs") {
  ModelConfig cfg = tiny_cfg();
  Rng rng(207);
  int inside = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    FrontendParams p = init_params(cfg, seed);
    Arr e(100, cfg.units);
    for (Eigen::Index t = 0; t < e.rows(); ++t) {
      for (int u = 0; u < cfg.units; ++u) e(t, u) = rng.normal(0.0, 1.0);
      e.row(t) /= std::sqrt(e.row(t).square().sum());
    }
    Arr alpha = mask_scalar_net(Tensor::constant(e), p, cfg).value();
    for (Eigen::Index t = 0; t < alpha.rows(); ++t) {
      ++total;
      if (alpha(t, 0) >= 0.4 && alpha(t, 0) <= 0.6) ++inside;
    }
  }
  CHECK(inside >= 99 * total / 100);
}

TEST_CASE("encoder: causality is bit-exact") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 11);
  Rng rng(211);
  Arr x = random_arr(rng, 10, 2 * cfg.mask_dim, -1.0, 1.0);
  Arr base = encoder_forward(Tensor::constant(x), p, cfg).value();
  Arr bumped = x;
  bumped.row(7) += 0.5;
  Arr after = encoder_forward(Tensor::constant(bumped), p, cfg).value();
  for (int t = 0; t < 7; ++t) CHECK((base.row(t) == after.row(t)).all());
  CHECK(!(base.row(7) == after.row(7)).all());
}

TEST_CASE("encoder: zero input with zero weights gives constant zero output") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 13);
  for (auto& [name, t] : p.trainable) t.mutable_value().setZero();
  Arr x = Arr::Zero(6, 2 * cfg.mask_dim);
  Arr out1 = encoder_forward(Tensor::constant(x), p, cfg).value();
  Arr out2 = encoder_forward(Tensor::constant(x), p, cfg).value();
  CHECK((out1 == 0.0).all());
  CHECK((out1 == out2).all());
}

TEST_CASE("encoder: input dim mismatch rejected") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 17);
  CHECK_THROWS_AS(encoder_forward(Tensor::constant(Arr::Zero(4, cfg.mask_dim)), p, cfg),
                  std::invalid_argument);
}

TEST_CASE("encoder: gradient check through one layer") {
  ModelConfig cfg = tiny_cfg();
  cfg.units = 8;
  cfg.ffn_dim = 10;
  cfg.mask_dim = 6;
  cfg.left_context = 3;
  FrontendParams p = init_params(cfg, 19);
  Rng rng(219);
  Arr x = random_arr(rng, 5, 2 * cfg.mask_dim, -1.0, 1.0);
  Arr probe = random_arr(rng, 5, cfg.units, -0.5, 0.5);
  GradReport rep = grad_check(
      [&]() {
        return sum(mul(encoder_forward(Tensor::constant(x), p, cfg), Tensor::constant(probe)));
      },
      p.trainables(), 1e-5);
  INFO("worst: ", rep.worst_param_name, " analytic ", rep.analytic, " numeric ", rep.numeric);
  CHECK(!rep.nonfinite);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("decoder: sigmoid endpoints and the hand oracle") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 23);
  Rng rng(223);
  Arr e = random_arr(rng, 4, cfg.units, -1.0, 1.0);

  FrontendParams zero = init_params(cfg, 23);
  zero.at("dec.w");  // keep the map, then zero the decoder
  zero.trainable.at("dec.w").mutable_value().setZero();
  zero.trainable.at("dec.b").mutable_value().setZero();
  Arr m_half = mask_decoder(Tensor::constant(e), zero).value();
  CHECK(((m_half - 0.5).abs() == 0.0).all());

  zero.trainable.at("dec.b").mutable_value().setConstant(50.0);
  Arr m_one = mask_decoder(Tensor::constant(e), zero).value();
  CHECK((m_one > 0.999999).all());

  Arr logits = (e.matrix() * p.at("dec.w").value().matrix()).array() +
               p.at("dec.b").value().replicate(4, 1);
  Arr expect = 1.0 / (1.0 + (-logits).exp());
  Arr got = mask_decoder(Tensor::constant(e), p).value();
  CHECK(((got - expect).abs() <= 1e-12).all());
  CHECK((got > 0.0).all());
  CHECK((got < 1.0).all());
}

TEST_CASE("scalar net: zero weights give exactly 0.5 and stop-grad blocks the encoder") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 29);
  p.trainable.at("alpha.w").mutable_value().setZero();
  p.trainable.at("alpha.b").mutable_value().setZero();
  Rng rng(229);
  Arr x = random_arr(rng, 6, 2 * cfg.mask_dim, -1.0, 1.0);
  Tensor e = encoder_forward(Tensor::constant(x), p, cfg);
  Arr alpha = mask_scalar_net(e, p, cfg).value();
  CHECK((alpha == 0.5).all());

  // Any loss through the scalar branch alone leaves the encoder untouched.
  FrontendParams q = init_params(cfg, 31);
  Tensor e2 = encoder_forward(Tensor::constant(x), q, cfg);
  Tensor loss = squared_l2(mask_scalar_net(e2, q, cfg));
  backward(loss);
  for (const auto& [name, t] : q.trainable) {
    if (is_theta_alpha(name)) {
      CHECK(t.has_grad());
      CHECK(t.grad().abs().sum() > 0.0);
    } else {
      CHECK((!t.has_grad() || (t.grad() == 0.0).all()));
    }
  }
}

TEST_CASE("scalar net: gradient check of theta_alpha through the ASR loss path") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 37);
  Rng rng(237);
  TrainingExample ex = fake_example(rng, 7, 8, 4, Topology::Enhancement);
  NormStats stats = tiny_stats(rng, 8);
  Tensor clean = Tensor::constant(ex.clean_asr.values);
  auto loss_fn = [&]() {
    ForwardOutput fo = frontend_forward(ex, p, cfg, AlphaMode::predicted(), 0.01, stats);
    Tensor diff = sub(frozen_asr_encoder(fo.asr_features, p, cfg),
                      frozen_asr_encoder(clean, p, cfg));
    return squared_l2(diff);
  };
  std::vector<Tensor> alpha_params = {p.trainable.at("alpha.w"), p.trainable.at("alpha.b")};
  GradReport rep = grad_check(loss_fn, alpha_params, 1e-5);
  INFO("worst ", rep.worst_param_name, " analytic ", rep.analytic, " numeric ", rep.numeric);
  CHECK(!rep.nonfinite);
  CHECK(rep.max_rel_error < 1e-4);
  // and the gradient is actually nonzero
  backward(loss_fn());
  CHECK(p.trainable.at("alpha.w").grad().abs().sum() > 0.0);
}

TEST_CASE("forward: passthrough at alpha=1e-6") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 41);
  Rng rng(241);
  TrainingExample ex = fake_example(rng, 9, 8, 4, Topology::Enhancement);
  NormStats stats = tiny_stats(rng, 8);
  ForwardOutput fo = frontend_forward(ex, p, cfg, AlphaMode::fixed(1e-6), 0.01, stats);
  Arr unenhanced = plain_features(ex.noisy_linear_mel.values, stats, 4);
  CHECK((fo.asr_features.value() - unenhanced).abs().maxCoeff() < 1e-6);
}

TEST_CASE("forward: matches the hand-composed pipeline at alpha=0.5") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 43);
  Rng rng(243);
  TrainingExample ex = fake_example(rng, 8, 8, 4, Topology::Enhancement);
  NormStats stats = tiny_stats(rng, 8);
  ForwardOutput fo = frontend_forward(ex, p, cfg, AlphaMode::fixed(0.5), 0.01, stats);

  Arr x_in(8, 2 * cfg.mask_dim);
  x_in.block(0, 0, 8, cfg.mask_dim) = ex.channel_a.values;
  x_in.block(0, cfg.mask_dim, 8, cfg.mask_dim) = ex.channel_b.values;
  Arr e = encoder_forward(Tensor::constant(x_in), p, cfg).value();
  Arr m_hat = mask_decoder(Tensor::constant(e), p).value();
  Mask m_bar = postprocess(Mask{m_hat}, PostProcess::fixed(0.5, 0.01));
  Arr x_hat = apply_mask(ex.noisy_linear_mel.values, m_bar);
  Arr feats = plain_features(x_hat, stats, 4);

  CHECK((fo.m_hat.value() - m_hat).abs().maxCoeff() <= 1e-12);
  CHECK((fo.m_bar.value() - m_bar.values).abs().maxCoeff() <= 1e-12);
  CHECK((fo.enhanced.value() - x_hat).abs().maxCoeff() <= 1e-12);
  CHECK((fo.asr_features.value() - feats).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("forward: predicted mode with zero theta_alpha equals Fixed(0.5) exactly") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 47);
  p.trainable.at("alpha.w").mutable_value().setZero();
  p.trainable.at("alpha.b").mutable_value().setZero();
  Rng rng(247);
  TrainingExample ex = fake_example(rng, 7, 8, 4, Topology::Enhancement);
  NormStats stats = tiny_stats(rng, 8);
  ForwardOutput pred = frontend_forward(ex, p, cfg, AlphaMode::predicted(), 0.01, stats);
  ForwardOutput fixed = frontend_forward(ex, p, cfg, AlphaMode::fixed(0.5), 0.01, stats);
  CHECK((pred.alpha.value() == 0.5).all());
  CHECK((pred.m_bar.value() == fixed.m_bar.value()).all());
  CHECK((pred.asr_features.value() == fixed.asr_features.value()).all());
}

TEST_CASE("forward: alpha stays in (0,1) and the mask in [beta, 1]") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 53);
  Rng rng(253);
  TrainingExample ex = fake_example(rng, 12, 8, 4, Topology::Enhancement);
  NormStats stats = tiny_stats(rng, 8);
  ForwardOutput fo = frontend_forward(ex, p, cfg, AlphaMode::predicted(), 0.01, stats);
  Arr track = fo.alpha_track();
  CHECK(track.rows() == 12);
  CHECK((track > 0.0).all());
  CHECK((track < 1.0).all());
  CHECK((fo.m_bar.value() >= 0.01).all());
  CHECK((fo.m_bar.value() <= 1.0).all());
}

TEST_CASE("forward: topology and geometry mismatches rejected") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 59);
  Rng rng(259);
  NormStats stats = tiny_stats(rng, 8);
  TrainingExample aec = fake_example(rng, 6, 8, 4, Topology::AEC);
  CHECK_THROWS_AS(frontend_forward(aec, p, cfg, AlphaMode::fixed(0.5), 0.01, stats),
                  std::invalid_argument);
  TrainingExample bad = fake_example(rng, 6, 8, 4, Topology::Enhancement);
  bad.channel_b.values = Arr::Zero(6, 16);
  CHECK_THROWS_AS(frontend_forward(bad, p, cfg, AlphaMode::fixed(0.5), 0.01, stats),
                  std::invalid_argument);
  TrainingExample short_mel = fake_example(rng, 6, 8, 4, Topology::Enhancement);
  short_mel.noisy_linear_mel.values = Arr::Ones(5, 32);
  CHECK_THROWS_AS(frontend_forward(short_mel, p, cfg, AlphaMode::fixed(0.5), 0.01, stats),
                  std::invalid_argument);
  CHECK_THROWS_AS(frontend_forward(fake_example(rng, 6, 8, 4, Topology::Enhancement), p, cfg,
                                   AlphaMode::fixed(1.5), 0.01, stats),
                  std::invalid_argument);
}

TEST_CASE("stop-grad boundary: E2 encoder grads equal the frozen-alpha substitution") {
  ModelConfig cfg = tiny_cfg();
  cfg.stop_grad = true;
  FrontendParams p = init_params(cfg, 61);
  Rng rng(261);
  TrainingExample ex = fake_example(rng, 8, 8, 4, Topology::Enhancement);
  NormStats stats = tiny_stats(rng, 8);
  Tensor clean = Tensor::constant(ex.clean_asr.values);

  ForwardOutput live = frontend_forward(ex, p, cfg, AlphaMode::predicted(), 0.01, stats);
  backward(squared_l2(sub(frozen_asr_encoder(live.asr_features, p, cfg),
                          frozen_asr_encoder(clean, p, cfg))));
  std::map<std::string, Arr> live_grads;
  for (const auto& [name, t] : p.trainable)
    live_grads[name] = t.has_grad() ? t.grad() : Arr(Arr::Zero(t.rows(), t.cols()));

  ForwardOutput sub_run =
      frontend_forward(ex, p, cfg, AlphaMode::fixed_track(live.alpha_track()), 0.01, stats);
  backward(squared_l2(sub(frozen_asr_encoder(sub_run.asr_features, p, cfg),
                          frozen_asr_encoder(clean, p, cfg))));
  for (const auto& [name, t] : p.trainable) {
    if (is_theta_alpha(name)) continue;
    Arr g = t.has_grad() ? t.grad() : Arr(Arr::Zero(t.rows(), t.cols()));
    CHECK((live_grads.at(name) - g).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("stop-grad boundary: E1 encoder grads differ from the substitution") {
  ModelConfig cfg = tiny_cfg();
  cfg.stop_grad = false;
  FrontendParams p = init_params(cfg, 61);
  Rng rng(271);
  TrainingExample ex = fake_example(rng, 8, 8, 4, Topology::Enhancement);
  NormStats stats = tiny_stats(rng, 8);
  Tensor clean = Tensor::constant(ex.clean_asr.values);

  ForwardOutput live = frontend_forward(ex, p, cfg, AlphaMode::predicted(), 0.01, stats);
  backward(squared_l2(sub(frozen_asr_encoder(live.asr_features, p, cfg),
                          frozen_asr_encoder(clean, p, cfg))));
  std::map<std::string, Arr> live_grads;
  for (const auto& [name, t] : p.trainable)
    live_grads[name] = t.has_grad() ? t.grad() : Arr(Arr::Zero(t.rows(), t.cols()));

  ForwardOutput sub_run =
      frontend_forward(ex, p, cfg, AlphaMode::fixed_track(live.alpha_track()), 0.01, stats);
  backward(squared_l2(sub(frozen_asr_encoder(sub_run.asr_features, p, cfg),
                          frozen_asr_encoder(clean, p, cfg))));
  double max_diff = 0.0;
  for (const auto& [name, t] : p.trainable) {
    if (is_theta_alpha(name)) continue;
    Arr g = t.has_grad() ? t.grad() : Arr(Arr::Zero(t.rows(), t.cols()));
    max_diff = std::max(max_diff, (live_grads.at(name) - g).abs().maxCoeff());
  }
  CHECK(max_diff > 1e-8);
}

TEST_CASE("theta_alpha purity: mask-only losses never reach it") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 67);
  Rng rng(277);
  TrainingExample ex = fake_example(rng, 8, 8, 4, Topology::Enhancement);
  NormStats stats = tiny_stats(rng, 8);
  ForwardOutput fo = frontend_forward(ex, p, cfg, AlphaMode::predicted(), 0.01, stats);
  Tensor diff = sub(fo.m_hat, Tensor::constant(ex.target_mask.values));
  backward(add(l1_norm(diff), squared_l2(diff)));
  CHECK(!p.trainable.at("alpha.w").has_grad());
  CHECK(!p.trainable.at("alpha.b").has_grad());
  CHECK(p.trainable.at("dec.w").has_grad());
  CHECK(p.trainable.at("dec.w").grad().abs().sum() > 0.0);
}

TEST_CASE("frozen proxy: identity convention, determinism, Lipschitz probe") {
  ModelConfig cfg = tiny_cfg();
  FrontendParams p = init_params(cfg, 71);
  Rng rng(281);
  Arr f = random_arr(rng, 10, cfg.mask_dim, -1.0, 1.0);

  ModelConfig id_cfg = cfg;
  id_cfg.frozen_layers = 0;
  CHECK((frozen_asr_encoder(Tensor::constant(f), p, id_cfg).value() == f).all());

  Arr e1 = frozen_asr_encoder(Tensor::constant(f), p, cfg).value();
  Arr e2 = frozen_asr_encoder(Tensor::constant(f), p, cfg).value();
  CHECK((e1 == e2).all());
  CHECK(e1.cols() == cfg.frozen_units);

  double worst_k = 0.0;
  for (int probe = 0; probe < 20; ++probe) {
    Arr delta = random_arr(rng, 10, cfg.mask_dim, -1e-3, 1e-3);
    Arr shifted = frozen_asr_encoder(Tensor::constant(Arr(f + delta)), p, cfg).value();
    double k = std::sqrt((shifted - e1).square().sum()) / std::sqrt(delta.square().sum());
    worst_k = std::max(worst_k, k);
  }
  INFO("measured Lipschitz bound over probes: ", worst_k);
  CHECK(std::isfinite(worst_k));
  CHECK(worst_k > 0.0);
  CHECK(worst_k < 100.0);

  // distinct inputs separate: the proxy is input-discriminative
  Arr g = random_arr(rng, 10, cfg.mask_dim, -1.0, 1.0);
  Arr eg = frozen_asr_encoder(Tensor::constant(g), p, cfg).value();
  CHECK((eg - e1).abs().maxCoeff() > 1e-6);
}

TEST_CASE("checkpoint: bit-exact round trip and byte-identical re-save") {
  ModelConfig cfg = tiny_cfg();
  cfg.mode = Topology::AEC;
  cfg.stop_grad = false;
  FrontendParams p = init_params(cfg, 73);
  const std::string path1 = "ckpt_a.json", path2 = "ckpt_b.json";
  save_params(path1, p, cfg);
  ModelConfig loaded_cfg;
  FrontendParams q = load_params(path1, loaded_cfg);
  CHECK(loaded_cfg.layers == cfg.layers);
  CHECK(loaded_cfg.units == cfg.units);
  CHECK(loaded_cfg.mode == cfg.mode);
  CHECK(loaded_cfg.stop_grad == cfg.stop_grad);
  CHECK(loaded_cfg.frozen_seed == cfg.frozen_seed);
  REQUIRE(q.trainable.size() == p.trainable.size());
  REQUIRE(q.frozen.size() == p.frozen.size());
  for (const auto& [name, t] : p.trainable) CHECK((q.at(name).value() == t.value()).all());
  for (const auto& [name, t] : p.frozen) CHECK((q.at(name).value() == t.value()).all());
  save_params(path2, q, loaded_cfg);
  std::ifstream f1(path1, std::ios::binary), f2(path2, std::ios::binary);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  CHECK(!s1.str().empty());
  std::remove(path1.c_str());
  std::remove(path2.c_str());
}
