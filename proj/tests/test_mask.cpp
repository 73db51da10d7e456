// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "maskfe/features.hpp"
#include "maskfe/mask.hpp"
#include "maskfe/rng.hpp"
#include "maskfe/tensor.hpp"

#include <cmath>
#include <vector>

using namespace maskfe;

namespace {

MelSpectrogram random_mel(Rng& rng, Eigen::Index frames, Eigen::Index bands,
                          double lo = 0.0, double hi = 2.0) {
  Arr v(frames, bands);
  for (Eigen::Index r = 0; r < frames; ++r)
    for (Eigen::Index c = 0; c < bands; ++c) v(r, c) = rng.uniform(lo, hi);
  return {v};
}

}  // namespace

TEST_CASE("irm: point values and the zero convention") {
  MelSpectrogram x{Arr::Constant(1, 2, 3.0)};
  MelSpectrogram n{Arr::Constant(1, 2, 1.0)};
  x.values(0, 1) = 0.0;
  n.values(0, 1) = 0.0;
  Mask m = ideal_ratio_mask(x, n);
  CHECK(m.values(0, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(m.values(0, 1) == 0.0);
}

TEST_CASE("irm: applying the oracle mask to the mixture recovers X") {
  Rng rng(101);
  for (int trial = 0; trial < 5; ++trial) {
    MelSpectrogram x = random_mel(rng, 12, 16);
    MelSpectrogram n = random_mel(rng, 12, 16);
    x.values(3, 4) = 0.0;
    n.values(3, 4) = 0.0;
    Mask m = ideal_ratio_mask(x, n);
    CHECK((m.values >= 0.0).all());
    CHECK((m.values <= 1.0).all());
    Arr y = x.values + n.values;
    Arr rec = apply_mask(y, m);
    CHECK(((rec - x.values).abs() <= 1e-12 * y.maxCoeff()).all());
  }
}

TEST_CASE("irm: shape mismatch and negative input rejected") {
  MelSpectrogram a{Arr::Zero(3, 4)}, b{Arr::Zero(3, 5)};
  CHECK_THROWS_AS(ideal_ratio_mask(a, b), std::invalid_argument);
  MelSpectrogram c{Arr::Zero(3, 4)}, d{Arr::Zero(3, 4)};
  d.values(0, 0) = -0.5;
  CHECK_THROWS_AS(ideal_ratio_mask(c, d), std::invalid_argument);
}

TEST_CASE("postprocess: point values") {
  Mask m{Arr::Constant(1, 1, 0.25)};
  CHECK(postprocess(m, PostProcess::fixed(0.5, 0.01)).values(0, 0) ==
        doctest::Approx(0.5).epsilon(1e-14));

  Mask tiny{Arr::Constant(1, 1, 1e-6)};
  CHECK(postprocess(tiny, PostProcess::fixed(1.0, 0.01)).values(0, 0) == 0.01);

  // alpha ~ 0 turns any mask into a passthrough
  Rng rng(111);
  Mask any = {random_mel(rng, 4, 6, 1e-6, 1.0).values};
  Mask out = postprocess(any, PostProcess::fixed(1e-6, 0.01));
  CHECK((out.values > 0.9999).all());
  CHECK((out.values <= 1.0).all());
}

TEST_CASE("postprocess: identity at alpha=1 beta=0, range always [beta, 1]") {
  Rng rng(121);
  Mask m = {random_mel(rng, 6, 8, 0.0, 1.0).values};
  Mask id = postprocess(m, PostProcess::fixed(1.0, 0.0));
  CHECK((id.values == m.values).all());
  for (double a : {0.1, 0.5, 0.9}) {
    Mask out = postprocess(m, PostProcess::fixed(a, 0.01));
    CHECK((out.values >= 0.01).all());
    CHECK((out.values <= 1.0).all());
  }
}

TEST_CASE("postprocess: per-frame alpha broadcasts across the frame") {
  Mask m{Arr::Constant(3, 4, 0.25)};
  Arr alphas(3, 1);
  alphas << 0.5, 0.25, 0.75;
  Mask out = postprocess(m, PostProcess::frame_wise(alphas, 0.0));
  for (int c = 0; c < 4; ++c) {
    CHECK(out.values(0, c) == doctest::Approx(std::pow(0.25, 0.5)).epsilon(1e-14));
    CHECK(out.values(1, c) == doctest::Approx(std::pow(0.25, 0.25)).epsilon(1e-14));
    CHECK(out.values(2, c) == doctest::Approx(std::pow(0.25, 0.75)).epsilon(1e-14));
  }
}

TEST_CASE("postprocess: validation errors") {
  Mask m{Arr::Constant(3, 4, 0.5)};
  Arr wrong_len(2, 1);
  wrong_len << 0.5, 0.5;
  CHECK_THROWS_AS(postprocess(m, PostProcess::frame_wise(wrong_len)), std::invalid_argument);
  Arr out_of_range(3, 1);
  out_of_range << 0.5, 1.0, 0.5;
  CHECK_THROWS_AS(postprocess(m, PostProcess::frame_wise(out_of_range)), std::invalid_argument);
  CHECK_THROWS_AS(postprocess(m, PostProcess::fixed(1.5)), std::invalid_argument);
  CHECK_THROWS_AS(postprocess(m, PostProcess::fixed(0.5, 1.0)), std::invalid_argument);
}

TEST_CASE("postprocess: tensor path matches the plain path and differentiates") {
  Rng rng(131);
  Arr m_vals = random_mel(rng, 5, 7, 0.05, 0.95).values;
  Arr alphas(5, 1);
  for (int t = 0; t < 5; ++t) alphas(t, 0) = rng.uniform(0.1, 0.9);

  Mask plain = postprocess({m_vals}, PostProcess::frame_wise(alphas, 0.01));
  Tensor m_hat = Tensor::param(m_vals, "m_hat");
  Tensor alpha = Tensor::param(alphas, "alpha");
  Tensor out = postprocess_tensor(m_hat, alpha, 0.01);
  CHECK(((out.value() - plain.values).abs() <= 1e-15).all());

  GradReport rep = grad_check(
      [&]() {
        return sum(mul(postprocess_tensor(m_hat, alpha, 0.01),
                       Tensor::constant(Arr::Constant(5, 7, 0.3))));
      },
      {m_hat, alpha}, 1e-6);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("apply_mask: identities and point values") {
  Rng rng(141);
  Arr y = random_mel(rng, 4, 5).values;
  Mask ones{Arr::Ones(4, 5)};
  CHECK((apply_mask(y, ones) == y).all());

  Arr y2(1, 2);
  y2 << 2.0, 4.0;
  Mask m{Arr(1, 2)};
  m.values << 0.5, 0.25;
  Arr got = apply_mask(y2, m);
  CHECK(got(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(got(0, 1) == doctest::Approx(1.0).epsilon(1e-14));

  Mask bad{Arr::Ones(4, 6)};
  CHECK_THROWS_AS(apply_mask(y, bad), std::invalid_argument);
}

TEST_CASE("distortion_residual: extremes and shape checks") {
  Rng rng(151);
  Arr x = random_mel(rng, 6, 8).values;
  Arr n = random_mel(rng, 6, 8).values;
  auto [d1, r1] = distortion_residual(x, n, Arr::Ones(6, 8));
  CHECK(d1 == 0.0);
  CHECK(r1 == doctest::Approx(n.square().sum()).epsilon(1e-12));
  auto [d0, r0] = distortion_residual(x, n, Arr::Zero(6, 8));
  CHECK(d0 == doctest::Approx(x.square().sum()).epsilon(1e-12));
  CHECK(r0 == 0.0);
  CHECK_THROWS_AS(distortion_residual(x, n, Arr::Ones(6, 7)), std::invalid_argument);
}

TEST_CASE("distortion_residual: monotone trade-off over an alpha sweep") {
  Rng rng(161);
  for (int trial = 0; trial < 3; ++trial) {
    MelSpectrogram x = random_mel(rng, 10, 12, 0.01, 2.0);
    MelSpectrogram n = random_mel(rng, 10, 12, 0.01, 2.0);
    Mask irm = ideal_ratio_mask(x, n);
    double prev_d = -1.0, prev_r = 1e300;
    for (int i = 1; i <= 10; ++i) {
      double a = 0.1 * i;
      Mask m = postprocess(irm, PostProcess::fixed(a, 0.01));
      auto [d, r] = distortion_residual(x.values, n.values, m.values);
      CHECK(d >= prev_d);
      CHECK(r <= prev_r);
      prev_d = d;
      prev_r = r;
    }
  }
}

TEST_CASE("passthrough: alpha ~ 0 leaves the ASR features unchanged") {
  FeatureConfig cfg;
  Rng rng(171);
  // Corpus with both quiet and loud material so per-band stds are O(5).
  std::vector<MelSpectrogram> corpus = {
      random_mel(rng, 30, cfg.n_mels, 0.0, 1e-7),
      random_mel(rng, 30, cfg.n_mels, 0.5, 20.0),
  };
  NormStats stats = normalization_stats(corpus);
  CHECK(stats.std.minCoeff() > 4.0);

  MelSpectrogram y = random_mel(rng, 21, cfg.n_mels, 1e-4, 5.0);
  Mask m_hat = {random_mel(rng, 21, cfg.n_mels, 0.01, 1.0).values};
  Mask m_bar = postprocess(m_hat, PostProcess::fixed(1e-6, 0.01));
  MelSpectrogram enhanced{apply_mask(y.values, m_bar)};
  AsrFeatures fe = asr_feature_pipeline(enhanced, cfg, stats);
  AsrFeatures fy = asr_feature_pipeline(y, cfg, stats);
  CHECK((fe.values - fy.values).abs().maxCoeff() < 1e-6);
}

TEST_CASE("stack_mask: same geometry as feature stacking") {
  Rng rng(181);
  Mask m = {random_mel(rng, 9, 3, 0.0, 1.0).values};
  Mask s = stack_mask(m, 4, 3);
  CHECK(s.frames() == 3);
  CHECK(s.dims() == 12);
  Arr direct = stack_and_subsample(m.values, 4, 3);
  CHECK((s.values == direct).all());
}
