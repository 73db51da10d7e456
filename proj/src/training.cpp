// SPDX-License-Identifier: Apache-2.0
#include "maskfe/training.hpp"

#include "maskfe/csv.hpp"
#include "maskfe/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace maskfe {

namespace {

constexpr std::uint64_t kDataTag = 0x64617461ULL;
constexpr std::uint64_t kStatsTag = 0x6e6f726dULL;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

void check_same_shape(const char* what, Eigen::Index ar, Eigen::Index ac, Eigen::Index br,
                      Eigen::Index bc) {
  if (ar != br || ac != bc)
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(ar) +
                                "x" + std::to_string(ac) + " vs " + std::to_string(br) + "x" +
                                std::to_string(bc) + ")");
}

}  // namespace

void TrainSchedule::validate() const {
  if (total_steps < 1) throw std::invalid_argument("schedule: total_steps must be >= 1");
  if (lambda_start_step >= lambda_end_step)
    throw std::invalid_argument("schedule: lambda_start_step must be < lambda_end_step");
  if (lambda_end_step > total_steps)
    throw std::invalid_argument("schedule: lambda_end_step must be <= total_steps");
  if (alpha_fixed_value < 0.0 || alpha_fixed_value > 1.0)
    throw std::invalid_argument("schedule: alpha_fixed_value must lie in [0, 1]");
  if (lambda_max < 0.0) throw std::invalid_argument("schedule: lambda_max must be >= 0");
  if (learning_rate <= 0.0) throw std::invalid_argument("schedule: learning_rate must be > 0");
  if (alpha_unfreeze_step < 0)
    throw std::invalid_argument("schedule: alpha_unfreeze_step must be >= 0");
}

TrainSchedule TrainSchedule::desk() { return TrainSchedule{}; }

TrainSchedule TrainSchedule::paper() {
  TrainSchedule s;
  s.lambda_start_step = 20000;
  s.lambda_end_step = 200000;
  s.lambda_max = 100.0;
  s.alpha_unfreeze_step = 200000;
  s.alpha_fixed_value = 0.5;
  s.total_steps = 250000;
  return s;
}

double mask_loss(const Mask& target, const Mask& predicted) {
  check_same_shape("mask_loss", target.values.rows(), target.values.cols(),
                   predicted.values.rows(), predicted.values.cols());
  Arr d = target.values - predicted.values;
  return d.abs().sum() + d.square().sum();
}

Tensor mask_loss_tensor(const Arr& target, const Tensor& predicted) {
  check_same_shape("mask_loss", target.rows(), target.cols(), predicted.rows(), predicted.cols());
  Tensor diff = sub(predicted, Tensor::constant(target));
  return add(l1_norm(diff), squared_l2(diff));
}

Tensor asr_loss_tensor(const Arr& clean, const Tensor& enhanced, const FrontendParams& params,
                       const ModelConfig& cfg) {
  check_same_shape("asr_loss", clean.rows(), clean.cols(), enhanced.rows(), enhanced.cols());
  Tensor e_enh = frozen_asr_encoder(enhanced, params, cfg);
  Tensor e_clean = frozen_asr_encoder(Tensor::constant(clean), params, cfg);
  return squared_l2(sub(e_enh, e_clean));
}

double asr_loss(const AsrFeatures& clean, const AsrFeatures& enhanced,
                const FrontendParams& params, const ModelConfig& cfg) {
  return asr_loss_tensor(clean.values, Tensor::constant(enhanced.values), params, cfg)
      .value()(0, 0);
}

double lambda_schedule(long step, const TrainSchedule& sched) {
  if (step < 0) throw std::invalid_argument("lambda_schedule: step must be >= 0");
  if (step <= sched.lambda_start_step) return 0.0;
  if (step >= sched.lambda_end_step) return sched.lambda_max;
  return sched.lambda_max * static_cast<double>(step - sched.lambda_start_step) /
         static_cast<double>(sched.lambda_end_step - sched.lambda_start_step);
}

AlphaMode alpha_mode(long step, const TrainSchedule& sched) {
  if (step < 0) throw std::invalid_argument("alpha_mode: step must be >= 0");
  if (step < sched.alpha_unfreeze_step) return AlphaMode::fixed(sched.alpha_fixed_value);
  return AlphaMode::predicted();
}

void adam_update(FrontendParams& params, AdamState& state, double lr, double grad_clip) {
  // Optional global-norm clipping over the gradients present this step.
  double scale_factor = 1.0;
  if (grad_clip > 0.0) {
    double total_sq = 0.0;
    for (auto& [name, t] : params.trainable)
      if (t.has_grad()) total_sq += t.grad().square().sum();
    double norm = std::sqrt(total_sq);
    if (norm > grad_clip) scale_factor = grad_clip / norm;
  }

  for (auto& [name, t] : params.trainable) {
    if (!t.has_grad()) continue;
    Arr g = t.grad() * scale_factor;
    auto node = t.node();
    node->has_grad = false;
    node->grad.resize(0, 0);

    auto [mit, fresh] = state.m.try_emplace(name, Arr::Zero(g.rows(), g.cols()));
    if (fresh) {
      state.v.emplace(name, Arr::Zero(g.rows(), g.cols()));
      state.t.emplace(name, 0);
    }
    Arr& m = mit->second;
    Arr& v = state.v.at(name);
    long& tc = state.t.at(name);
    ++tc;
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.square();
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(tc));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(tc));
    t.mutable_value() -= lr * (m / bc1) / ((v / bc2).sqrt() + kEps);
  }
}

StepReport train_step(const std::vector<const TrainingExample*>& batch, FrontendParams& params,
                      AdamState& opt, long step, const TrainSchedule& sched,
                      const ModelConfig& cfg, const NormStats& stats, double beta,
                      double grad_clip) {
  if (batch.empty()) throw std::invalid_argument("train_step: batch must be nonempty");
  const AlphaMode mode = alpha_mode(step, sched);
  const double lambda = lambda_schedule(step, sched);

  Tensor irm_sum, asr_sum;
  double alpha_acc = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    const TrainingExample& ex = *batch[i];
    ForwardOutput out = frontend_forward(ex, params, cfg, mode, beta, stats);
    Tensor l_irm = mask_loss_tensor(ex.target_mask.values, out.m_hat);
    if (!std::isfinite(l_irm.value()(0, 0)))
      throw std::runtime_error("train_step: non-finite mask loss (l_irm) at batch example " +
                               std::to_string(i));
    Tensor l_asr = asr_loss_tensor(ex.clean_asr.values, out.asr_features, params, cfg);
    if (!std::isfinite(l_asr.value()(0, 0)))
      throw std::runtime_error(
          "train_step: non-finite encoder-distance loss (l_asr) at batch example " +
          std::to_string(i));
    irm_sum = irm_sum.valid() ? add(irm_sum, l_irm) : l_irm;
    asr_sum = asr_sum.valid() ? add(asr_sum, l_asr) : l_asr;
    alpha_acc += out.alpha.value().mean();
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Tensor l_irm_mean = scale(irm_sum, inv_b);
  Tensor l_asr_mean = scale(asr_sum, inv_b);
  Tensor objective =
      lambda > 0.0 ? add(l_irm_mean, scale(l_asr_mean, lambda)) : l_irm_mean;
  backward(objective);
  adam_update(params, opt, sched.learning_rate, grad_clip);

  StepReport rep;
  rep.loss.l_irm = l_irm_mean.value()(0, 0);
  rep.loss.l_asr = l_asr_mean.value()(0, 0);
  rep.loss.lambda_asr = lambda;
  rep.loss.total = rep.loss.l_irm + lambda * rep.loss.l_asr;
  rep.alpha_predicted = mode.kind == AlphaMode::Kind::Predicted;
  rep.mean_alpha = alpha_acc * inv_b;
  return rep;
}

StepReport batch_loss(const std::vector<const TrainingExample*>& batch,
                      const FrontendParams& params, const ModelConfig& cfg,
                      const NormStats& stats, const AlphaMode& mode, double lambda,
                      double beta) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: batch must be nonempty");
  double irm_acc = 0.0, asr_acc = 0.0, alpha_acc = 0.0;
  for (const TrainingExample* ex : batch) {
    ForwardOutput out = frontend_forward(*ex, params, cfg, mode, beta, stats);
    irm_acc += mask_loss_tensor(ex->target_mask.values, out.m_hat).value()(0, 0);
    asr_acc += asr_loss_tensor(ex->clean_asr.values, out.asr_features, params, cfg).value()(0, 0);
    alpha_acc += out.alpha.value().mean();
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  StepReport rep;
  rep.loss.l_irm = irm_acc * inv_b;
  rep.loss.l_asr = asr_acc * inv_b;
  rep.loss.lambda_asr = lambda;
  rep.loss.total = rep.loss.l_irm + lambda * rep.loss.l_asr;
  rep.alpha_predicted = mode.kind == AlphaMode::Kind::Predicted;
  rep.mean_alpha = alpha_acc * inv_b;
  return rep;
}

NormStats training_norm_stats(const FeatureConfig& fcfg, const TrainSchedule& sched) {
  return build_norm_stats(fcfg, hash_seed(sched.seed, kStatsTag), 8);
}

namespace {

nlohmann::json adam_to_json(const AdamState& st) {
  nlohmann::json j;
  for (const auto& [name, a] : st.m) j["m"][name] = arr_to_json(a);
  for (const auto& [name, a] : st.v) j["v"][name] = arr_to_json(a);
  for (const auto& [name, c] : st.t) j["t"][name] = c;
  return j;
}

AdamState adam_from_json(const nlohmann::json& j) {
  AdamState st;
  if (j.contains("m"))
    for (const auto& [name, entry] : j.at("m").items()) st.m.emplace(name, arr_from_json(entry));
  if (j.contains("v"))
    for (const auto& [name, entry] : j.at("v").items()) st.v.emplace(name, arr_from_json(entry));
  if (j.contains("t"))
    for (const auto& [name, entry] : j.at("t").items()) st.t.emplace(name, entry.get<long>());
  return st;
}

void run_loop(const TrainOptions& opts, TrainResult& result) {
  const ModelConfig& cfg = result.model;
  const std::uint64_t data_seed = hash_seed(opts.sched.seed, kDataTag);
  std::unordered_map<std::uint64_t, TrainingExample> pool;
  auto fetch = [&](std::uint64_t idx) -> const TrainingExample* {
    auto it = pool.find(idx);
    if (it == pool.end())
      it = pool
               .emplace(idx, stream_example(data_seed, idx, cfg.mode, opts.features, result.stats))
               .first;
    return &it->second;
  };

  for (long step = result.next_step; step < opts.sched.total_steps; ++step) {
    std::vector<const TrainingExample*> batch;
    batch.reserve(opts.batch_size);
    for (int j = 0; j < opts.batch_size; ++j) {
      std::uint64_t idx =
          (static_cast<std::uint64_t>(step) * opts.batch_size + j) % opts.pool_size;
      batch.push_back(fetch(idx));
    }
    StepReport rep =
        train_step(batch, result.params, result.opt, step, opts.sched, cfg, result.stats,
                   opts.beta, opts.grad_clip);
    result.next_step = step + 1;
    if (step % opts.log_every == 0 || step == opts.sched.total_steps - 1)
      result.metrics.push_back({step, rep.loss.l_irm, rep.loss.l_asr, rep.loss.lambda_asr,
                                rep.loss.total, rep.mean_alpha});
    if (!opts.out_dir.empty() && opts.checkpoint_every > 0 &&
        (step + 1) % opts.checkpoint_every == 0 && step + 1 < opts.sched.total_steps)
      save_train_state(opts.out_dir + "/train_state_step" + std::to_string(step + 1) + ".json",
                       result);
  }

  if (!opts.out_dir.empty()) {
    save_train_state(opts.out_dir + "/train_state.json", result);
    save_params(opts.out_dir + "/model.json", result.params, cfg);
    write_metrics_csv(opts.out_dir + "/metrics.csv", result.metrics);
  }
}

}  // namespace

TrainResult train(const TrainOptions& opts) {
  opts.sched.validate();
  opts.model.validate();
  opts.features.validate();
  if (opts.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (opts.pool_size < 1) throw std::invalid_argument("train: pool_size must be >= 1");
  if (opts.log_every < 1) throw std::invalid_argument("train: log_every must be >= 1");

  TrainResult result;
  result.model = opts.model;
  result.stats = training_norm_stats(opts.features, opts.sched);
  result.params = init_params(opts.model, opts.sched.seed);
  result.next_step = 0;
  run_loop(opts, result);
  return result;
}

TrainResult resume_train(const TrainOptions& opts, const std::string& state_path) {
  opts.sched.validate();
  opts.features.validate();
  std::ifstream in(state_path, std::ios::binary);
  if (!in) throw std::runtime_error("resume_train: cannot open " + state_path);
  nlohmann::json j;
  in >> j;

  TrainResult result;
  result.params = params_from_json(j, result.model);
  result.opt = adam_from_json(j.value("adam", nlohmann::json::object()));
  result.next_step = j.at("step").get<long>();
  result.stats = training_norm_stats(opts.features, opts.sched);
  run_loop(opts, result);
  return result;
}

void save_train_state(const std::string& path, const TrainResult& result) {
  nlohmann::json j = params_to_json(result.params, result.model);
  j["kind"] = "train_state";
  j["step"] = result.next_step;
  j["adam"] = adam_to_json(result.opt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_train_state: cannot open " + path);
  out << j.dump(1) << "\n";
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "step,l_irm,l_asr,lambda,total,mean_alpha\n";
  for (const auto& r : rows)
    out << r.step << ',' << format_double(r.l_irm) << ',' << format_double(r.l_asr) << ','
        << format_double(r.lambda) << ',' << format_double(r.total) << ','
        << format_double(r.mean_alpha) << "\n";
}

GradcheckSummary frontend_gradcheck(const ModelConfig& base, const FeatureConfig& fcfg,
                                    double lambda, double beta, double eps, long max_per_param,
                                    std::uint64_t seed) {
  if (lambda <= 0.0)
    throw std::invalid_argument("frontend_gradcheck: lambda must be > 0 so both loss terms "
                                "contribute to the checked gradient");
  if (eps <= 0.0) throw std::invalid_argument("frontend_gradcheck: eps must be > 0");
  if (max_per_param < 1)
    throw std::invalid_argument("frontend_gradcheck: max_per_param must be >= 1");
  fcfg.validate();

  const NormStats stats = build_norm_stats(fcfg, hash_seed(seed, kStatsTag), 8);
  GradcheckSummary summary;
  std::uint64_t case_index = 0;
  for (Topology mode : {Topology::Enhancement, Topology::AEC}) {
    for (bool detach_mask : {true, false}) {
      ModelConfig cfg = base;
      cfg.mode = mode;
      cfg.stop_grad = detach_mask;
      cfg.validate();
      const TrainingExample ex =
          stream_example(hash_seed(seed, kDataTag), case_index++, mode, fcfg, stats);
      FrontendParams params = init_params(cfg, seed);
      auto fn = [&]() {
        ForwardOutput out = frontend_forward(ex, params, cfg, AlphaMode::predicted(), beta, stats);
        Tensor l_irm = mask_loss_tensor(ex.target_mask.values, out.m_hat);
        Tensor l_asr = asr_loss_tensor(ex.clean_asr.values, out.asr_features, params, cfg);
        return add(l_irm, scale(l_asr, lambda));
      };
      const GradReport rep = grad_check_sampled(fn, params.trainables(), eps, max_per_param);
      GradcheckCase c;
      c.name = topology_name(mode) + (detach_mask ? "/detached-mask" : "/through-mask");
      c.max_rel_error = rep.nonfinite ? std::numeric_limits<double>::infinity()
                                      : rep.max_rel_error;
      c.worst_param = rep.worst_param_name;
      c.analytic = rep.analytic;
      c.numeric = rep.numeric;
      summary.max_rel_error = std::max(summary.max_rel_error, c.max_rel_error);
      summary.cases.push_back(std::move(c));
    }
  }
  return summary;
}

}  // namespace maskfe
