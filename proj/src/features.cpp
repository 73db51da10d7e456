// SPDX-License-Identifier: Apache-2.0
#include "maskfe/features.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace maskfe {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

int FeatureConfig::window_samples() const {
  return static_cast<int>(std::lround(window_sec * sample_rate));
}

int FeatureConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_sec * sample_rate));
}

int FeatureConfig::fft_size() const {
  if (n_fft > 0) return n_fft;
  int n = 1;
  while (n < window_samples()) n <<= 1;
  return n;
}

void FeatureConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("feature config: sample_rate must be > 0");
  if (hop_sec > window_sec)
    throw std::invalid_argument("feature config: hop must not exceed window");
  if (!(fmin < fmax && fmax <= sample_rate / 2.0))
    throw std::invalid_argument("feature config: need fmin < fmax <= sample_rate/2");
  if (stack < 1 || subsample < 1)
    throw std::invalid_argument("feature config: stack and subsample must be >= 1");
  if (n_mels < 1) throw std::invalid_argument("feature config: n_mels must be >= 1");
  if (fft_size() < window_samples())
    throw std::invalid_argument("feature config: n_fft smaller than the window");
}

double hz_to_mel(double hz) {
  constexpr double fsp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / fsp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz < min_log_hz) return hz / fsp;
  return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
  constexpr double fsp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / fsp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel < min_log_mel) return mel * fsp;
  return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

Arr magnitude_spectrogram(std::span<const double> waveform, const FeatureConfig& cfg) {
  cfg.validate();
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  const int nfft = cfg.fft_size();
  const int nbins = cfg.bins();
  if (static_cast<int>(waveform.size()) < win)
    throw std::invalid_argument("magnitude_spectrogram: waveform too short, need at least " +
                                std::to_string(win) + " samples, got " +
                                std::to_string(waveform.size()));
  const Eigen::Index frames = 1 + (static_cast<Eigen::Index>(waveform.size()) - win) / hop;

  Arr window(1, win);
  for (int n = 0; n < win; ++n)
    window(0, n) = 0.5 * (1.0 - std::cos(kTwoPi * n / win));

  Arr framed = Arr::Zero(frames, nfft);
  for (Eigen::Index t = 0; t < frames; ++t)
    for (int n = 0; n < win; ++n)
      framed(t, n) = waveform[t * hop + n] * window(0, n);

  // Real DFT via explicit cosine/sine bases; desk-scale sizes make this cheap.
  Arr basis_cos(nfft, nbins), basis_sin(nfft, nbins);
  for (int n = 0; n < nfft; ++n)
    for (int k = 0; k < nbins; ++k) {
      double phase = kTwoPi * n * k / nfft;
      basis_cos(n, k) = std::cos(phase);
      basis_sin(n, k) = -std::sin(phase);
    }
  Arr re = (framed.matrix() * basis_cos.matrix()).array();
  Arr im = (framed.matrix() * basis_sin.matrix()).array();
  return (re.square() + im.square()).sqrt();
}

Arr mel_filterbank(const FeatureConfig& cfg) {
  cfg.validate();
  const int nbins = cfg.bins();
  const int nfft = cfg.fft_size();
  Arr fb = Arr::Zero(nbins, cfg.n_mels);

  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    bool nonempty = false;
    for (int k = 0; k < nbins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / nfft;
      double w = 0.0;
      if (f > left && f < right)
        w = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
      if (w > 0.0) nonempty = true;
      fb(k, m) = w;
    }
    if (!nonempty)
      throw std::invalid_argument("mel_filterbank: filter " + std::to_string(m) +
                                  " covers no FFT bin; n_mels too large for n_fft");
  }
  return fb;
}

MelSpectrogram mel_spectrogram(std::span<const double> waveform, const FeatureConfig& cfg) {
  Arr mag = magnitude_spectrogram(waveform, cfg);
  Arr fb = mel_filterbank(cfg);
  return MelSpectrogram{(mag.matrix() * fb.matrix()).array()};
}

NormStats normalization_stats(const std::vector<MelSpectrogram>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("normalization_stats: empty corpus");
  const Eigen::Index bands = corpus.front().bands();
  Eigen::Index total = 0;
  for (const auto& m : corpus) {
    if (m.bands() != bands)
      throw std::invalid_argument("normalization_stats: band count mismatch in corpus");
    total += m.frames();
  }
  if (total < 2) throw std::invalid_argument("normalization_stats: need at least 2 frames");

  // Streaming Welford per band.
  Arr mean = Arr::Zero(1, bands), m2 = Arr::Zero(1, bands);
  double n = 0.0;
  for (const auto& m : corpus) {
    Arr lg = m.values.max(kLogFloor).log();
    for (Eigen::Index t = 0; t < lg.rows(); ++t) {
      n += 1.0;
      Arr delta = lg.row(t) - mean;
      mean += delta / n;
      m2 += delta * (lg.row(t) - mean);
    }
  }
  NormStats s;
  s.mean = mean;
  s.std = (m2 / n).sqrt().max(kStdFloor);
  return s;
}

NormStats per_utterance_stats(const MelSpectrogram& mel) {
  return normalization_stats({mel});
}

std::vector<Eigen::Index> stack_block_rows(Eigen::Index frames, int stack, int block) {
  std::vector<Eigen::Index> rows(frames);
  for (Eigen::Index t = 0; t < frames; ++t)
    rows[t] = std::max<Eigen::Index>(0, t - stack + 1 + block);
  return rows;
}

std::vector<Eigen::Index> subsample_rows(Eigen::Index frames, int subsample) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index t = 0; t < frames; t += subsample) rows.push_back(t);
  return rows;
}

std::vector<std::vector<Eigen::Index>> stacked_subsampled_block_rows(Eigen::Index frames,
                                                                     int stack,
                                                                     int subsample) {
  std::vector<std::vector<Eigen::Index>> blocks(stack);
  auto kept = subsample_rows(frames, subsample);
  for (int j = 0; j < stack; ++j) {
    auto full = stack_block_rows(frames, stack, j);
    blocks[j].reserve(kept.size());
    for (Eigen::Index t : kept) blocks[j].push_back(full[t]);
  }
  return blocks;
}

Arr stack_and_subsample(const Arr& x, int stack, int subsample) {
  auto blocks = stacked_subsampled_block_rows(x.rows(), stack, subsample);
  const Eigen::Index out_frames = static_cast<Eigen::Index>(blocks.front().size());
  Arr out(out_frames, x.cols() * stack);
  for (int j = 0; j < stack; ++j)
    for (Eigen::Index t = 0; t < out_frames; ++t)
      out.row(t).segment(j * x.cols(), x.cols()) = x.row(blocks[j][t]);
  return out;
}

AsrFeatures asr_feature_pipeline(const MelSpectrogram& mel, const FeatureConfig& cfg,
                                 const NormStats& stats) {
  if (stats.mean.cols() != mel.bands() || stats.std.cols() != mel.bands())
    throw std::invalid_argument("asr_feature_pipeline: stats do not match band count");
  if ((stats.std <= 0.0).any())
    throw std::invalid_argument("asr_feature_pipeline: std must be positive");
  Arr lg = mel.values.max(kLogFloor).log();
  Arr norm = (lg - stats.mean.replicate(lg.rows(), 1)) / stats.std.replicate(lg.rows(), 1);
  AsrFeatures f;
  f.values = stack_and_subsample(norm, cfg.stack, cfg.subsample);
  f.n_mels = static_cast<int>(mel.bands());
  f.stack = cfg.stack;
  return f;
}

}  // namespace maskfe
