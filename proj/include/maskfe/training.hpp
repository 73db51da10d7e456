// SPDX-License-Identifier: Apache-2.0
//
// Composite loss with its weighting schedule, the alpha-unfreeze boundary,
// the Adam optimizer, and the deterministic step/loop drivers.
#pragma once

#include "maskfe/model.hpp"
#include "maskfe/scenesim.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace maskfe {

// Scalar loss report for one step. The total is always the exact composition
// of the two parts under the current weight.
struct LossBreakdown {
  double l_irm = 0.0;
  double l_asr = 0.0;
  double lambda_asr = 0.0;
  double total = 0.0;
};

// Piecewise-linear weight ramp plus the alpha-unfreeze boundary.
struct TrainSchedule {
  long lambda_start_step = 200;
  long lambda_end_step = 2000;
  double lambda_max = 100.0;
  long alpha_unfreeze_step = 2000;
  double alpha_fixed_value = 0.5;
  long total_steps = 5000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;

  void validate() const;
  static TrainSchedule desk();
  static TrainSchedule paper();
};

// Mask regression loss: entry-wise L1 plus squared L2 over the difference.
double mask_loss(const Mask& target, const Mask& predicted);
Tensor mask_loss_tensor(const Arr& target, const Tensor& predicted);

// Encoder-distance loss between clean and enhanced features. The clean branch
// is a constant: its producers never receive gradient.
double asr_loss(const AsrFeatures& clean, const AsrFeatures& enhanced,
                const FrontendParams& params, const ModelConfig& cfg);
Tensor asr_loss_tensor(const Arr& clean, const Tensor& enhanced, const FrontendParams& params,
                       const ModelConfig& cfg);

double lambda_schedule(long step, const TrainSchedule& sched);
AlphaMode alpha_mode(long step, const TrainSchedule& sched);

// Adam state, per parameter. Parameters that have never received a gradient
// have no entry and are skipped, so an untouched parameter stays bit-identical.
struct AdamState {
  std::map<std::string, Arr> m;
  std::map<std::string, Arr> v;
  std::map<std::string, long> t;
};

void adam_update(FrontendParams& params, AdamState& state, double lr, double grad_clip = 0.0);

// One optimization step over a batch. Mutates params and opt in place and
// returns the batch-mean loss breakdown.
struct StepReport {
  LossBreakdown loss;
  double mean_alpha = 0.0;
  bool alpha_predicted = false;
};
StepReport train_step(const std::vector<const TrainingExample*>& batch, FrontendParams& params,
                      AdamState& opt, long step, const TrainSchedule& sched,
                      const ModelConfig& cfg, const NormStats& stats, double beta = 0.01,
                      double grad_clip = 0.0);

// Forward-only loss of a batch under an explicit alpha mode and weight; no
// gradients, no update. Used to compare the two sides of the unfreeze
// boundary on identical data.
StepReport batch_loss(const std::vector<const TrainingExample*>& batch,
                      const FrontendParams& params, const ModelConfig& cfg,
                      const NormStats& stats, const AlphaMode& mode, double lambda,
                      double beta = 0.01);

struct MetricsRow {
  long step = 0;
  double l_irm = 0.0;
  double l_asr = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  double mean_alpha = 0.0;
};

struct TrainOptions {
  ModelConfig model;
  FeatureConfig features;
  TrainSchedule sched;
  double beta = 0.01;
  int batch_size = 4;
  int pool_size = 64;        // distinct simulated examples cycled by step
  int log_every = 10;
  int checkpoint_every = 0;  // 0: only the final state is written
  double grad_clip = 0.0;    // 0: no clipping
  std::string out_dir;       // empty: no files are written
};

struct TrainResult {
  FrontendParams params;
  ModelConfig model;
  AdamState opt;
  NormStats stats;
  std::vector<MetricsRow> metrics;
  long next_step = 0;
};

// Stats corpus seed is derived from the schedule seed, so a (seed, config)
// pair pins the whole run.
NormStats training_norm_stats(const FeatureConfig& fcfg, const TrainSchedule& sched);

TrainResult train(const TrainOptions& opts);
TrainResult resume_train(const TrainOptions& opts, const std::string& state_path);

void save_train_state(const std::string& path, const TrainResult& result);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// Finite-difference verification of the full composite-loss gradient, run for
// both topologies and with the mask detach both on and off.
struct GradcheckCase {
  std::string name;
  double max_rel_error = 0.0;
  std::string worst_param;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckSummary {
  std::vector<GradcheckCase> cases;
  double max_rel_error = 0.0;
};

GradcheckSummary frontend_gradcheck(const ModelConfig& base, const FeatureConfig& fcfg,
                                    double lambda, double beta, double eps, long max_per_param,
                                    std::uint64_t seed);

}  // namespace maskfe
