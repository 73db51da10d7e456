// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic scenes: reverberant speech targets, noise mixing at
// SNR, echo mixing at SER, noise context, and the spectral-subtraction stand-in
// for the multichannel cleaner.
#pragma once

#include "maskfe/features.hpp"
#include "maskfe/mask.hpp"
#include "maskfe/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace maskfe {

enum class NoiseKind { White, Pink, Tonal };

std::string noise_kind_name(NoiseKind k);
NoiseKind noise_kind_from_name(const std::string& name);

struct SceneConfig {
  Topology mode = Topology::Enhancement;
  double snr_db = 0.0;         // Enhancement: speech vs noise
  double ser_db = 0.0;         // AEC: speech vs echo
  NoiseKind noise_kind = NoiseKind::White;
  int rir_length = 400;
  double rir_decay = 0.985;
  double duration = 2.0;        // seconds
  double noise_context = 0.5;   // seconds of noise-only lead-in
  bool loopback_silent = false; // AEC: device playing nothing
  std::uint64_t seed = 1;

  void validate() const;
};

struct Syllable {
  int start = 0;
  int length = 0;
  double f0 = 0.0;
  bool voiced = false;
};

struct SpeechSignal {
  std::vector<double> waveform;
  std::vector<Syllable> syllables;
};

struct TrainingExample {
  AsrFeatures channel_a;            // Enhancement: cleaner output; AEC: loopback
  AsrFeatures channel_b;            // mic / raw mixture
  MelSpectrogram noisy_linear_mel;  // stacked geometry, Mel-additive mixture
  Mask target_mask;                 // stacked IRM
  AsrFeatures clean_asr;            // features of reverberant clean speech
  SceneConfig meta;
  bool cleaner_warned = false;
};

// Raw waveforms of one scene, for the simulate subcommand and for tests.
struct Scene {
  std::vector<double> speech;        // dry source
  std::vector<double> reverberant;   // X
  std::vector<double> interference;  // scaled noise (Enhancement) or echo (AEC)
  std::vector<double> mixture;       // mic signal
  std::vector<double> context;       // scaled noise-only lead-in (Enhancement)
  std::vector<double> loopback;      // AEC reference channel
};

SpeechSignal synth_speech_detailed(double duration, double sample_rate, std::uint64_t seed);
std::vector<double> synth_speech(double duration, double sample_rate, std::uint64_t seed);

std::vector<double> synth_noise(NoiseKind kind, double duration, double sample_rate,
                                std::uint64_t seed);

std::vector<double> rir_generate(int rir_length, double decay, std::uint64_t seed);

std::vector<double> fir_filter(const std::vector<double>& x, const std::vector<double>& h);

// Scales noise so 10*log10(|target|^2/|scaled|^2) = snr_db; returns
// (mixture, scaled_noise).
std::pair<std::vector<double>, std::vector<double>> mix_at_snr(
    const std::vector<double>& target, const std::vector<double>& noise, double snr_db);

MelSpectrogram stub_cleaner(const MelSpectrogram& mixture, const MelSpectrogram& noise_context,
                            bool* warned = nullptr);

Scene make_scene(const SceneConfig& cfg, const FeatureConfig& fcfg);

TrainingExample make_example(const SceneConfig& cfg, const FeatureConfig& fcfg,
                             const NormStats& stats);

// Normalization statistics over a small seeded corpus of scenes (mixtures at
// several SNRs plus one silence utterance).
NormStats build_norm_stats(const FeatureConfig& fcfg, std::uint64_t seed, int n_scenes = 8);

// Per-step training stream: example index i uses seed hash_seed(master, i).
TrainingExample stream_example(std::uint64_t master_seed, std::uint64_t index, Topology mode,
                               const FeatureConfig& fcfg, const NormStats& stats);

}  // namespace maskfe
