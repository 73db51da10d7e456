// SPDX-License-Identifier: Apache-2.0
//
// Proxy metrics, the alpha sweep harness, and bucketed evaluation summaries.
#pragma once

#include "maskfe/model.hpp"
#include "maskfe/scenesim.hpp"
#include "maskfe/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace maskfe {

// Final improvement values are capped here; an exact reconstruction reports
// the cap itself.
inline constexpr double kSnrImprovementCap = 99.0;

// Seeded eval-set recipe. Buckets are condition levels: SNR for Enhancement,
// SER for AEC.
struct EvalDatasetConfig {
  int examples_per_bucket = 8;
  std::uint64_t seed = 1001;
  std::vector<double> snr_buckets{-5.0, 0.0, 20.0, 60.0};
  std::vector<double> ser_buckets{-10.0, -5.0, 0.0, 5.0};
  NoiseKind noise_kind = NoiseKind::White;
  double duration = 1.2;
  double noise_context = 0.5;
  int rir_length = 200;
  double rir_decay = 0.97;

  void validate() const;
  const std::vector<double>& buckets(Topology mode) const;
};

// 10*log10(|X|^2/|Xhat-X|^2) - 10*log10(|X|^2/|Y-X|^2), capped; 0 when the
// clean reference is empty.
double mel_snr_improvement(const Arr& x, const Arr& y, const Arr& x_hat);

// Deterministic example set for one condition level.
std::vector<TrainingExample> eval_bucket_examples(const EvalDatasetConfig& ds, Topology mode,
                                                  double level_db, const FeatureConfig& fcfg,
                                                  const NormStats& stats);

struct SweepRow {
  std::string alpha_label;  // numeric text, or "predicted"
  double beta = 0.01;
  double distortion = 0.0;
  double residual = 0.0;
  double l_asr_proxy = 0.0;
  double snr_impr_db = 0.0;
  int n_examples = 0;
};

// Unenhanced mixture-vs-clean encoder distance for one example.
double baseline_l_asr(const TrainingExample& ex, const FrontendParams& params,
                      const ModelConfig& cfg, const NormStats& stats);

// Sweep with the oracle mask as the mask source. params supplies only the
// frozen proxy weights.
std::vector<SweepRow> sweep_alpha_oracle(const std::vector<double>& alphas, double beta,
                                         const EvalDatasetConfig& ds, Topology mode,
                                         double level_db, const FrontendParams& params,
                                         const ModelConfig& cfg, const FeatureConfig& fcfg,
                                         const NormStats& stats);

// Sweep with the model's predicted mask; one row per fixed alpha, plus an
// optional trailing row with the model's own predicted alpha(t).
std::vector<SweepRow> sweep_alpha_model(const std::vector<double>& alphas, double beta,
                                        bool include_predicted, const EvalDatasetConfig& ds,
                                        double level_db, const FrontendParams& params,
                                        const ModelConfig& cfg, const FeatureConfig& fcfg,
                                        const NormStats& stats);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

struct BucketSummary {
  double level_db = 0.0;
  int n = 0;
  double l_irm = 0.0;
  double l_asr_proxy = 0.0;
  double distortion = 0.0;
  double residual = 0.0;
  double snr_improvement_db = 0.0;
  double mean_alpha = 0.0;
  double std_alpha = 0.0;
};

struct EvalSummary {
  Topology mode = Topology::Enhancement;
  std::string alpha_mode_label;
  double beta = 0.01;
  std::vector<BucketSummary> buckets;
};

EvalSummary evaluate(const FrontendParams& params, const ModelConfig& cfg, const AlphaMode& mode,
                     double beta, const EvalDatasetConfig& ds, const FeatureConfig& fcfg,
                     const NormStats& stats);

nlohmann::json eval_summary_to_json(const EvalSummary& summary);
void write_eval_summary(const std::string& path, const EvalSummary& summary);

}  // namespace maskfe
