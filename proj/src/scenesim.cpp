// SPDX-License-Identifier: Apache-2.0
#include "maskfe/scenesim.hpp"

#include "maskfe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace maskfe {

namespace {

constexpr std::uint64_t kSpeechTag = 0x7370656563ULL;
constexpr std::uint64_t kNoiseTag = 0x6e6f697365ULL;
constexpr std::uint64_t kRirTag = 0x726972ULL;
constexpr std::uint64_t kEchoRirTag = 0x6563686fULL;
constexpr std::uint64_t kLoopTag = 0x6c6f6f70ULL;
constexpr std::uint64_t kStatsTag = 0x7374617473ULL;

void rms_normalize(std::vector<double>& x, double target) {
  double e = 0.0;
  for (double v : x) e += v * v;
  if (e <= 0.0) return;
  double scale = target / std::sqrt(e / static_cast<double>(x.size()));
  for (double& v : x) v *= scale;
}

int duration_samples(double duration, double sample_rate) {
  if (duration <= 0.0) throw std::invalid_argument("duration must be > 0");
  return static_cast<int>(std::lround(duration * sample_rate));
}

}  // namespace

std::string noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::White: return "white";
    case NoiseKind::Pink: return "pink";
    case NoiseKind::Tonal: return "tonal";
  }
  throw std::invalid_argument("unknown noise kind");
}

NoiseKind noise_kind_from_name(const std::string& name) {
  if (name == "white") return NoiseKind::White;
  if (name == "pink") return NoiseKind::Pink;
  if (name == "tonal") return NoiseKind::Tonal;
  throw std::invalid_argument("unknown noise kind: " + name);
}

void SceneConfig::validate() const {
  if (duration <= 0.0) throw std::invalid_argument("scene config: duration must be > 0");
  if (rir_length < 1) throw std::invalid_argument("scene config: rir_length must be >= 1");
  if (noise_context < 0.0)
    throw std::invalid_argument("scene config: noise_context must be >= 0");
  if (rir_decay < 0.0 || rir_decay >= 1.0)
    throw std::invalid_argument("scene config: rir_decay must lie in [0, 1)");
}

SpeechSignal synth_speech_detailed(double duration, double sample_rate, std::uint64_t seed) {
  const int n = duration_samples(duration, sample_rate);
  Rng rng(hash_seed(seed, kSpeechTag));
  SpeechSignal out;
  out.waveform.assign(n, 0.0);

  int pos = 0;
  bool voiced = true;
  while (pos < n) {
    if (voiced) {
      int len = std::min<int>(n - pos,
                              static_cast<int>(std::lround(rng.uniform(0.08, 0.22) * sample_rate)));
      if (len < 1) break;
      const double f0 = rng.uniform(100.0, 300.0);
      const int harmonics = 3 + static_cast<int>(rng.uniform_index(4));
      std::vector<double> phase(harmonics);
      for (auto& ph : phase) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const int ramp = std::min<int>(static_cast<int>(std::lround(0.005 * sample_rate)), len / 4);
      for (int i = 0; i < len; ++i) {
        double v = 0.0;
        for (int k = 1; k <= harmonics; ++k)
          v += std::sin(2.0 * std::numbers::pi * k * f0 * i / sample_rate + phase[k - 1]) / k;
        double env = 1.0;
        if (ramp > 0) {
          if (i < ramp) env = 0.5 * (1.0 - std::cos(std::numbers::pi * i / ramp));
          else if (i >= len - ramp)
            env = 0.5 * (1.0 - std::cos(std::numbers::pi * (len - 1 - i) / ramp));
        }
        out.waveform[pos + i] = v * env;
      }
      out.syllables.push_back({pos, len, f0, true});
      pos += len;
    } else {
      int len = std::min<int>(n - pos,
                              static_cast<int>(std::lround(rng.uniform(0.05, 0.12) * sample_rate)));
      if (len < 1) break;
      out.syllables.push_back({pos, len, 0.0, false});
      pos += len;
    }
    voiced = !voiced;
  }
  rms_normalize(out.waveform, 0.1);
  return out;
}

std::vector<double> synth_speech(double duration, double sample_rate, std::uint64_t seed) {
  return synth_speech_detailed(duration, sample_rate, seed).waveform;
}

std::vector<double> synth_noise(NoiseKind kind, double duration, double sample_rate,
                                std::uint64_t seed) {
  const int n = duration_samples(duration, sample_rate);
  Rng rng(hash_seed(seed, kNoiseTag));
  std::vector<double> x(n);
  switch (kind) {
    case NoiseKind::White:
      for (auto& v : x) v = rng.normal(0.0, 1.0);
      break;
    case NoiseKind::Pink: {
      // Three one-pole sections with corners and DC gains from the classic
      // economy pinking filter, poles remapped to the working sample rate.
      const double fc[3] = {16.5, 264.6, 3945.0};
      const double dc[3] = {42.147, 8.0140, 2.4481};
      double a[3], g[3], s[3] = {0.0, 0.0, 0.0};
      for (int i = 0; i < 3; ++i) {
        a[i] = std::exp(-2.0 * std::numbers::pi * fc[i] / sample_rate);
        g[i] = dc[i] * (1.0 - a[i]);
      }
      for (auto& v : x) {
        double w = rng.normal(0.0, 1.0);
        double y = 0.1848 * w;
        for (int i = 0; i < 3; ++i) {
          s[i] = a[i] * s[i] + g[i] * w;
          y += s[i];
        }
        v = y;
      }
      break;
    }
    case NoiseKind::Tonal: {
      const double freqs[3] = {220.0, 277.18, 329.63};
      double phase[3];
      for (auto& ph : phase) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (int i = 0; i < n; ++i) {
        double v = 0.0;
        for (int k = 0; k < 3; ++k)
          v += std::sin(2.0 * std::numbers::pi * freqs[k] * i / sample_rate + phase[k]) / 3.0;
        x[i] = v;
      }
      break;
    }
  }
  rms_normalize(x, 0.1);
  return x;
}

std::vector<double> rir_generate(int rir_length, double decay, std::uint64_t seed) {
  if (rir_length < 1) throw std::invalid_argument("rir_generate: rir_length must be >= 1");
  Rng rng(hash_seed(seed, kRirTag));
  std::vector<double> h(rir_length);
  h[0] = 1.0;
  double d = 1.0;
  for (int i = 1; i < rir_length; ++i) {
    d *= decay;
    h[i] = d * rng.normal(0.0, 1.0);
  }
  double e = 0.0;
  for (double v : h) e += v * v;
  double inv = 1.0 / std::sqrt(e);
  for (double& v : h) v *= inv;
  return h;
}

std::vector<double> fir_filter(const std::vector<double>& x, const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (size_t n = 0; n < x.size(); ++n) {
    const size_t kmax = std::min(h.size() - 1, n);
    double acc = 0.0;
    for (size_t k = 0; k <= kmax; ++k) acc += h[k] * x[n - k];
    y[n] = acc;
  }
  return y;
}

std::pair<std::vector<double>, std::vector<double>> mix_at_snr(
    const std::vector<double>& target, const std::vector<double>& noise, double snr_db) {
  if (target.size() != noise.size())
    throw std::invalid_argument("mix_at_snr: length mismatch");
  double et = 0.0, en = 0.0;
  for (double v : target) et += v * v;
  for (double v : noise) en += v * v;
  if (et <= 0.0) throw std::invalid_argument("mix_at_snr: target has zero energy");
  if (en <= 0.0) throw std::invalid_argument("mix_at_snr: noise has zero energy");
  const double scale = std::sqrt(et / (en * std::pow(10.0, snr_db / 10.0)));
  std::vector<double> scaled(noise.size()), mix(noise.size());
  for (size_t i = 0; i < noise.size(); ++i) {
    scaled[i] = noise[i] * scale;
    mix[i] = target[i] + scaled[i];
  }
  return {std::move(mix), std::move(scaled)};
}

MelSpectrogram stub_cleaner(const MelSpectrogram& mixture, const MelSpectrogram& noise_context,
                            bool* warned) {
  if (warned) *warned = false;
  if (noise_context.frames() == 0) {
    if (warned) *warned = true;
    return mixture;
  }
  if (noise_context.bands() != mixture.bands())
    throw std::invalid_argument("stub_cleaner: band count mismatch");
  Arr ctx_mean = noise_context.values.colwise().mean();
  Arr sub = mixture.values - ctx_mean.replicate(mixture.frames(), 1);
  return MelSpectrogram{sub.max(0.05 * mixture.values)};
}

Scene make_scene(const SceneConfig& cfg, const FeatureConfig& fcfg) {
  cfg.validate();
  fcfg.validate();
  const double sr = fcfg.sample_rate;
  const int n = duration_samples(cfg.duration, sr);
  const int ctx_len = static_cast<int>(std::lround(cfg.noise_context * sr));

  Scene sc;
  sc.speech = synth_speech(cfg.duration, sr, hash_seed(cfg.seed, 1));
  std::vector<double> rir = rir_generate(cfg.rir_length, cfg.rir_decay, hash_seed(cfg.seed, 2));
  sc.reverberant = fir_filter(sc.speech, rir);

  if (cfg.mode == Topology::Enhancement) {
    std::vector<double> full =
        synth_noise(cfg.noise_kind, (n + ctx_len) / sr, sr, hash_seed(cfg.seed, 3));
    std::vector<double> ctx(full.begin(), full.begin() + ctx_len);
    std::vector<double> utt(full.begin() + ctx_len, full.end());
    auto [mix, scaled] = mix_at_snr(sc.reverberant, utt, cfg.snr_db);
    double scale = std::sqrt(std::inner_product(scaled.begin(), scaled.end(), scaled.begin(), 0.0) /
                             std::inner_product(utt.begin(), utt.end(), utt.begin(), 0.0));
    for (double& v : ctx) v *= scale;
    sc.mixture = std::move(mix);
    sc.interference = std::move(scaled);
    sc.context = std::move(ctx);
  } else {
    if (cfg.loopback_silent) {
      sc.loopback.assign(n, 0.0);
      sc.interference.assign(n, 0.0);
      sc.mixture = sc.reverberant;
    } else {
      sc.loopback = synth_noise(cfg.noise_kind, cfg.duration, sr, hash_seed(cfg.seed, kLoopTag));
      std::vector<double> echo_rir =
          rir_generate(cfg.rir_length, cfg.rir_decay, hash_seed(cfg.seed, kEchoRirTag));
      std::vector<double> echo_raw = fir_filter(sc.loopback, echo_rir);
      auto [mic, echo] = mix_at_snr(sc.reverberant, echo_raw, cfg.ser_db);
      sc.mixture = std::move(mic);
      sc.interference = std::move(echo);
    }
  }
  return sc;
}

TrainingExample make_example(const SceneConfig& cfg, const FeatureConfig& fcfg,
                             const NormStats& stats) {
  Scene sc = make_scene(cfg, fcfg);
  MelSpectrogram x_mel = mel_spectrogram(sc.reverberant, fcfg);
  MelSpectrogram i_mel = mel_spectrogram(sc.interference, fcfg);
  MelSpectrogram mic_mel = mel_spectrogram(sc.mixture, fcfg);

  TrainingExample ex;
  ex.meta = cfg;
  ex.clean_asr = asr_feature_pipeline(x_mel, fcfg, stats);
  ex.channel_b = asr_feature_pipeline(mic_mel, fcfg, stats);
  if (cfg.mode == Topology::Enhancement) {
    MelSpectrogram ctx_mel{Arr(0, x_mel.bands())};
    if (static_cast<int>(sc.context.size()) >= fcfg.window_samples())
      ctx_mel = mel_spectrogram(sc.context, fcfg);
    MelSpectrogram cleaned = stub_cleaner(mic_mel, ctx_mel, &ex.cleaner_warned);
    ex.channel_a = asr_feature_pipeline(cleaned, fcfg, stats);
  } else {
    MelSpectrogram loop_mel = mel_spectrogram(sc.loopback, fcfg);
    ex.channel_a = asr_feature_pipeline(loop_mel, fcfg, stats);
  }

  Arr additive = x_mel.values + i_mel.values;
  ex.noisy_linear_mel =
      MelSpectrogram{stack_and_subsample(additive, fcfg.stack, fcfg.subsample)};
  ex.target_mask = stack_mask(ideal_ratio_mask(x_mel, i_mel), fcfg.stack, fcfg.subsample);
  return ex;
}

NormStats build_norm_stats(const FeatureConfig& fcfg, std::uint64_t seed, int n_scenes) {
  if (n_scenes < 1) throw std::invalid_argument("build_norm_stats: n_scenes must be >= 1");
  const double snrs[5] = {-5.0, 0.0, 5.0, 20.0, 60.0};
  std::vector<MelSpectrogram> corpus;
  for (int i = 0; i < n_scenes; ++i) {
    SceneConfig cfg;
    cfg.mode = Topology::Enhancement;
    cfg.snr_db = snrs[i % 5];
    cfg.noise_kind = i % 2 == 0 ? NoiseKind::White : NoiseKind::Tonal;
    cfg.seed = hash_seed(seed, kStatsTag + i);
    Scene sc = make_scene(cfg, fcfg);
    corpus.push_back(mel_spectrogram(sc.mixture, fcfg));
    corpus.push_back(mel_spectrogram(sc.reverberant, fcfg));
  }
  // One silence utterance keeps the log floor inside the statistics.
  int n = duration_samples(1.0, fcfg.sample_rate);
  corpus.push_back(mel_spectrogram(std::vector<double>(n, 0.0), fcfg));
  return normalization_stats(corpus);
}

TrainingExample stream_example(std::uint64_t master_seed, std::uint64_t index, Topology mode,
                               const FeatureConfig& fcfg, const NormStats& stats) {
  Rng rng(hash_seed(master_seed, index));
  SceneConfig cfg;
  cfg.mode = mode;
  cfg.duration = 1.2;
  cfg.noise_context = 0.5;
  cfg.snr_db = rng.uniform(-10.0, 30.0);
  cfg.ser_db = rng.uniform(-20.0, 5.0);
  cfg.noise_kind = rng.uniform() < 0.5 ? NoiseKind::White : NoiseKind::Tonal;
  cfg.rir_decay = rng.uniform(0.9, 0.99);
  cfg.rir_length = 200;
  cfg.seed = hash_seed(master_seed, index + 0x1000000ULL);
  return make_example(cfg, fcfg, stats);
}

}  // namespace maskfe
