// SPDX-License-Identifier: Apache-2.0
//
// Waveform -> linear Mel magnitude spectrogram -> ASR feature pipeline
// (log, mean-variance normalization, frame stacking, subsampling).
#pragma once

#include "maskfe/tensor.hpp"

#include <span>
#include <vector>

namespace maskfe {

struct FeatureConfig {
  double sample_rate = 8000.0;
  double window_sec = 0.032;
  double hop_sec = 0.010;
  int n_fft = 0;  // 0 -> next power of two >= window samples
  int n_mels = 32;
  double fmin = 60.0;
  double fmax = 3800.0;
  int stack = 4;
  int subsample = 3;

  int window_samples() const;
  int hop_samples() const;
  int fft_size() const;
  int bins() const { return fft_size() / 2 + 1; }
  int stacked_dim() const { return n_mels * stack; }
  void validate() const;
};

// Nonnegative linear-domain Mel magnitudes, frames x bands.
struct MelSpectrogram {
  Arr values;
  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index bands() const { return values.cols(); }
};

// Per-band statistics of log Mel values, 1 x bands each.
struct NormStats {
  Arr mean;
  Arr std;
};

// Log-domain, normalized, stacked and subsampled features.
struct AsrFeatures {
  Arr values;  // frames x (n_mels * stack)
  int n_mels = 0;
  int stack = 0;
  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

constexpr double kLogFloor = 1e-8;
constexpr double kStdFloor = 1e-4;

// Hann-windowed magnitude STFT, frames x (n_fft/2 + 1).
// frame count = 1 + floor((len - win) / hop).
Arr magnitude_spectrogram(std::span<const double> waveform, const FeatureConfig& cfg);

// Triangular filters on the Slaney mel scale, (n_fft/2 + 1) x n_mels, peak 1.
Arr mel_filterbank(const FeatureConfig& cfg);

MelSpectrogram mel_spectrogram(std::span<const double> waveform, const FeatureConfig& cfg);

// Population mean/std per band of log(max(x, 1e-8)) over the whole corpus;
// std floored at 1e-4.
NormStats normalization_stats(const std::vector<MelSpectrogram>& corpus);

// Per-utterance variant of the same statistics.
NormStats per_utterance_stats(const MelSpectrogram& mel);

// log -> (x - mean)/std -> stack `stack` frames (left-pad by repeating the
// first frame) -> keep every `subsample`-th stacked frame starting at 0.
AsrFeatures asr_feature_pipeline(const MelSpectrogram& mel, const FeatureConfig& cfg,
                                 const NormStats& stats);

// Row-index plumbing shared by the plain pipeline, the mask-target path and
// the differentiable model path, so that all three stack identically.
// Block j of a stacked frame t reads input row clamp(t - stack + 1 + j, 0).
std::vector<Eigen::Index> stack_block_rows(Eigen::Index frames, int stack, int block);
std::vector<Eigen::Index> subsample_rows(Eigen::Index frames, int subsample);
// Composition of the two: per block, the source row of each kept stacked frame.
std::vector<std::vector<Eigen::Index>> stacked_subsampled_block_rows(
    Eigen::Index frames, int stack, int subsample);

// The same stack+subsample operator applied to a raw matrix (linear domain).
Arr stack_and_subsample(const Arr& x, int stack, int subsample);

// Slaney mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace maskfe
