// SPDX-License-Identifier: Apache-2.0
#include "maskfe/eval.hpp"

#include "maskfe/csv.hpp"
#include "maskfe/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace maskfe {

namespace {

Arr plain_features(const Arr& mel_stacked, const NormStats& stats, int stack) {
  Arr mean_t = tile_stats_row(stats.mean, stack);
  Arr std_t = tile_stats_row(stats.std, stack);
  Arr logm = mel_stacked.max(kLogFloor).log();
  return (logm - mean_t.replicate(mel_stacked.rows(), 1)) /
         std_t.replicate(mel_stacked.rows(), 1);
}

struct MetricAccum {
  double l_irm = 0.0;
  double l_asr = 0.0;
  double distortion = 0.0;
  double residual = 0.0;
  double snr_impr = 0.0;
  int n = 0;
  std::vector<double> alphas;

  void add(double irm, double asr, double dist, double res, double snr) {
    l_irm += irm;
    l_asr += asr;
    distortion += dist;
    residual += res;
    snr_impr += snr;
    ++n;
  }
};

}  // namespace

void EvalDatasetConfig::validate() const {
  if (examples_per_bucket < 1)
    throw std::invalid_argument("eval config: examples_per_bucket must be >= 1");
  if (snr_buckets.empty() || ser_buckets.empty())
    throw std::invalid_argument("eval config: bucket lists must be nonempty");
  if (duration <= 0.0) throw std::invalid_argument("eval config: duration must be > 0");
  if (noise_context < 0.0) throw std::invalid_argument("eval config: noise_context must be >= 0");
  if (rir_length < 1) throw std::invalid_argument("eval config: rir_length must be >= 1");
  if (rir_decay < 0.0 || rir_decay >= 1.0)
    throw std::invalid_argument("eval config: rir_decay must lie in [0, 1)");
}

const std::vector<double>& EvalDatasetConfig::buckets(Topology mode) const {
  return mode == Topology::Enhancement ? snr_buckets : ser_buckets;
}

double mel_snr_improvement(const Arr& x, const Arr& y, const Arr& x_hat) {
  if (x.rows() != y.rows() || x.cols() != y.cols() || x.rows() != x_hat.rows() ||
      x.cols() != x_hat.cols())
    throw std::invalid_argument("mel_snr_improvement: shape mismatch");
  const double ex = x.square().sum();
  if (ex <= 0.0) return 0.0;
  auto term = [&](double err) {
    if (err <= 0.0) return kSnrImprovementCap;
    return std::min(10.0 * std::log10(ex / err), kSnrImprovementCap);
  };
  const double impr = term((x_hat - x).square().sum()) - term((y - x).square().sum());
  return std::clamp(impr, -kSnrImprovementCap, kSnrImprovementCap);
}

std::vector<TrainingExample> eval_bucket_examples(const EvalDatasetConfig& ds, Topology mode,
                                                  double level_db, const FeatureConfig& fcfg,
                                                  const NormStats& stats) {
  ds.validate();
  std::vector<TrainingExample> out;
  out.reserve(ds.examples_per_bucket);
  const std::uint64_t level_seed =
      hash_seed(ds.seed, std::bit_cast<std::uint64_t>(level_db));
  for (int i = 0; i < ds.examples_per_bucket; ++i) {
    SceneConfig sc;
    sc.mode = mode;
    if (mode == Topology::Enhancement)
      sc.snr_db = level_db;
    else
      sc.ser_db = level_db;
    sc.noise_kind = ds.noise_kind;
    sc.rir_length = ds.rir_length;
    sc.rir_decay = ds.rir_decay;
    sc.duration = ds.duration;
    sc.noise_context = ds.noise_context;
    sc.seed = hash_seed(level_seed, static_cast<std::uint64_t>(i));
    out.push_back(make_example(sc, fcfg, stats));
  }
  return out;
}

double baseline_l_asr(const TrainingExample& ex, const FrontendParams& params,
                      const ModelConfig& cfg, const NormStats& stats) {
  const int stack =
      static_cast<int>(ex.noisy_linear_mel.bands() / stats.mean.cols());
  AsrFeatures noisy;
  noisy.values = plain_features(ex.noisy_linear_mel.values, stats, stack);
  return asr_loss(ex.clean_asr, noisy, params, cfg);
}

namespace {

void check_sweep_grid(const std::vector<double>& alphas, double beta) {
  if (alphas.empty()) throw std::invalid_argument("sweep_alpha: alpha grid must be nonempty");
  for (double a : alphas)
    if (!(a > 0.0) || a > 1.0)
      throw std::invalid_argument("sweep_alpha: alpha values must lie in (0, 1]");
  if (beta < 0.0 || beta >= 1.0)
    throw std::invalid_argument("sweep_alpha: beta must lie in [0, 1)");
}

SweepRow finish_row(std::string label, double beta, const MetricAccum& acc) {
  SweepRow row;
  row.alpha_label = std::move(label);
  row.beta = beta;
  row.distortion = acc.distortion / acc.n;
  row.residual = acc.residual / acc.n;
  row.l_asr_proxy = acc.l_asr / acc.n;
  row.snr_impr_db = acc.snr_impr / acc.n;
  row.n_examples = acc.n;
  return row;
}

}  // namespace

std::vector<SweepRow> sweep_alpha_oracle(const std::vector<double>& alphas, double beta,
                                         const EvalDatasetConfig& ds, Topology mode,
                                         double level_db, const FrontendParams& params,
                                         const ModelConfig& cfg, const FeatureConfig& fcfg,
                                         const NormStats& stats) {
  check_sweep_grid(alphas, beta);
  std::vector<TrainingExample> examples = eval_bucket_examples(ds, mode, level_db, fcfg, stats);
  std::vector<SweepRow> rows;
  for (double alpha : alphas) {
    MetricAccum acc;
    for (const TrainingExample& ex : examples) {
      const Arr& y = ex.noisy_linear_mel.values;
      Arr x = ex.target_mask.values * y;
      Arr n = y - x;
      Mask m_bar = postprocess(ex.target_mask, PostProcess::fixed(alpha, beta));
      Arr x_hat = apply_mask(y, m_bar);
      auto [dist, res] = distortion_residual(x, n, m_bar.values);
      AsrFeatures enhanced;
      enhanced.values = plain_features(x_hat, stats, fcfg.stack);
      double l_asr = asr_loss(ex.clean_asr, enhanced, params, cfg);
      acc.add(0.0, l_asr, dist, res, mel_snr_improvement(x, y, x_hat));
    }
    rows.push_back(finish_row(format_double(alpha), beta, acc));
  }
  return rows;
}

std::vector<SweepRow> sweep_alpha_model(const std::vector<double>& alphas, double beta,
                                        bool include_predicted, const EvalDatasetConfig& ds,
                                        double level_db, const FrontendParams& params,
                                        const ModelConfig& cfg, const FeatureConfig& fcfg,
                                        const NormStats& stats) {
  check_sweep_grid(alphas, beta);
  std::vector<TrainingExample> examples =
      eval_bucket_examples(ds, cfg.mode, level_db, fcfg, stats);

  std::vector<AlphaMode> modes;
  std::vector<std::string> labels;
  for (double alpha : alphas) {
    modes.push_back(AlphaMode::fixed(alpha));
    labels.push_back(format_double(alpha));
  }
  if (include_predicted) {
    modes.push_back(AlphaMode::predicted());
    labels.push_back("predicted");
  }

  std::vector<SweepRow> rows;
  for (size_t mi = 0; mi < modes.size(); ++mi) {
    MetricAccum acc;
    for (const TrainingExample& ex : examples) {
      ForwardOutput out = frontend_forward(ex, params, cfg, modes[mi], beta, stats);
      const Arr& y = ex.noisy_linear_mel.values;
      Arr x = ex.target_mask.values * y;
      Arr n = y - x;
      const Arr& m_bar = out.m_bar.value();
      Arr x_hat = out.enhanced.value();
      auto [dist, res] = distortion_residual(x, n, m_bar);
      double l_asr =
          asr_loss_tensor(ex.clean_asr.values, out.asr_features, params, cfg).value()(0, 0);
      acc.add(0.0, l_asr, dist, res, mel_snr_improvement(x, y, x_hat));
    }
    rows.push_back(finish_row(labels[mi], beta, acc));
  }
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_sweep_csv: cannot open " + path);
  out << "alpha,beta,distortion,residual,l_asr_proxy,snr_impr_db,n\n";
  for (const SweepRow& r : rows)
    out << r.alpha_label << ',' << format_double(r.beta) << ',' << format_double(r.distortion)
        << ',' << format_double(r.residual) << ',' << format_double(r.l_asr_proxy) << ','
        << format_double(r.snr_impr_db) << ',' << r.n_examples << "\n";
}

EvalSummary evaluate(const FrontendParams& params, const ModelConfig& cfg, const AlphaMode& mode,
                     double beta, const EvalDatasetConfig& ds, const FeatureConfig& fcfg,
                     const NormStats& stats) {
  ds.validate();
  if (mode.kind == AlphaMode::Kind::FixedTrack)
    throw std::invalid_argument("evaluate: a fixed alpha track is not an evaluation mode");
  if (fcfg.stacked_dim() != cfg.mask_dim)
    throw std::invalid_argument(
        "evaluate: feature geometry mismatch: stacked feature dim " +
        std::to_string(fcfg.stacked_dim()) + " (n_mels x stack) vs model mask_dim " +
        std::to_string(cfg.mask_dim));
  if (stats.mean.cols() != fcfg.n_mels)
    throw std::invalid_argument("evaluate: stats bands " + std::to_string(stats.mean.cols()) +
                                " vs feature n_mels " + std::to_string(fcfg.n_mels));

  EvalSummary summary;
  summary.mode = cfg.mode;
  summary.beta = beta;
  summary.alpha_mode_label = mode.kind == AlphaMode::Kind::Predicted
                                 ? "predicted"
                                 : "fixed(" + format_double(mode.value) + ")";

  for (double level : ds.buckets(cfg.mode)) {
    std::vector<TrainingExample> examples =
        eval_bucket_examples(ds, cfg.mode, level, fcfg, stats);
    MetricAccum acc;
    for (const TrainingExample& ex : examples) {
      ForwardOutput out = frontend_forward(ex, params, cfg, mode, beta, stats);
      const Arr& y = ex.noisy_linear_mel.values;
      Arr x = ex.target_mask.values * y;
      Arr n = y - x;
      auto [dist, res] = distortion_residual(x, n, out.m_bar.value());
      double l_irm = mask_loss(ex.target_mask, Mask{out.m_hat.value()});
      double l_asr =
          asr_loss_tensor(ex.clean_asr.values, out.asr_features, params, cfg).value()(0, 0);
      acc.add(l_irm, l_asr, dist, res, mel_snr_improvement(x, y, out.enhanced.value()));
      Arr track = out.alpha_track();
      for (Eigen::Index t = 0; t < track.rows(); ++t) acc.alphas.push_back(track(t, 0));
    }

    BucketSummary b;
    b.level_db = level;
    b.n = acc.n;
    b.l_irm = acc.l_irm / acc.n;
    b.l_asr_proxy = acc.l_asr / acc.n;
    b.distortion = acc.distortion / acc.n;
    b.residual = acc.residual / acc.n;
    b.snr_improvement_db = acc.snr_impr / acc.n;
    double mean = 0.0;
    for (double a : acc.alphas) mean += a;
    mean /= static_cast<double>(acc.alphas.size());
    double var = 0.0;
    for (double a : acc.alphas) var += (a - mean) * (a - mean);
    var /= static_cast<double>(acc.alphas.size());
    b.mean_alpha = mean;
    b.std_alpha = std::sqrt(var);
    summary.buckets.push_back(b);
  }
  return summary;
}

nlohmann::json eval_summary_to_json(const EvalSummary& summary) {
  nlohmann::json j;
  j["mode"] = topology_name(summary.mode);
  j["alpha_mode"] = summary.alpha_mode_label;
  j["beta"] = summary.beta;
  j["buckets"] = nlohmann::json::array();
  for (const BucketSummary& b : summary.buckets) {
    j["buckets"].push_back({{"level_db", b.level_db},
                            {"n", b.n},
                            {"l_irm", b.l_irm},
                            {"l_asr_proxy", b.l_asr_proxy},
                            {"distortion", b.distortion},
                            {"residual", b.residual},
                            {"snr_improvement_db", b.snr_improvement_db},
                            {"mean_alpha", b.mean_alpha},
                            {"std_alpha", b.std_alpha}});
  }
  return j;
}

void write_eval_summary(const std::string& path, const EvalSummary& summary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_eval_summary: cannot open " + path);
  out << eval_summary_to_json(summary).dump(1) << "\n";
}

}  // namespace maskfe
