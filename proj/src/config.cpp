// SPDX-License-Identifier: Apache-2.0
#include "maskfe/config.hpp"

#include <fstream>
#include <stdexcept>

namespace maskfe {

namespace {

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
  throw std::invalid_argument("config: unknown key \"" + key + "\" in section \"" + section +
                              "\"");
}

void apply_feature(FeatureConfig& fc, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "sample_rate") fc.sample_rate = value.get<double>();
    else if (key == "window_sec") fc.window_sec = value.get<double>();
    else if (key == "hop_sec") fc.hop_sec = value.get<double>();
    else if (key == "n_fft") fc.n_fft = value.get<int>();
    else if (key == "n_mels") fc.n_mels = value.get<int>();
    else if (key == "fmin") fc.fmin = value.get<double>();
    else if (key == "fmax") fc.fmax = value.get<double>();
    else if (key == "stack") fc.stack = value.get<int>();
    else if (key == "subsample") fc.subsample = value.get<int>();
    else unknown_key("feature", key);
  }
}

void apply_model(ModelConfig& mc, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "layers") mc.layers = value.get<int>();
    else if (key == "units") mc.units = value.get<int>();
    else if (key == "ffn_dim") mc.ffn_dim = value.get<int>();
    else if (key == "conv_kernel") mc.conv_kernel = value.get<int>();
    else if (key == "left_context") mc.left_context = value.get<int>();
    else if (key == "mask_dim") mc.mask_dim = value.get<int>();
    else if (key == "mode") mc.mode = topology_from_name(value.get<std::string>());
    else if (key == "stop_grad") mc.stop_grad = value.get<bool>();
    else if (key == "frozen_layers") mc.frozen_layers = value.get<int>();
    else if (key == "frozen_units") mc.frozen_units = value.get<int>();
    else if (key == "frozen_kernel") mc.frozen_kernel = value.get<int>();
    else if (key == "frozen_seed") mc.frozen_seed = value.get<std::uint64_t>();
    else unknown_key("model", key);
  }
}

void apply_schedule(TrainSchedule& s, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda_start_step") s.lambda_start_step = value.get<long>();
    else if (key == "lambda_end_step") s.lambda_end_step = value.get<long>();
    else if (key == "lambda_max") s.lambda_max = value.get<double>();
    else if (key == "alpha_unfreeze_step") s.alpha_unfreeze_step = value.get<long>();
    else if (key == "alpha_fixed_value") s.alpha_fixed_value = value.get<double>();
    else if (key == "total_steps") s.total_steps = value.get<long>();
    else if (key == "learning_rate") s.learning_rate = value.get<double>();
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else unknown_key("schedule", key);
  }
}

void apply_simulator(SceneConfig& sc, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "mode") sc.mode = topology_from_name(value.get<std::string>());
    else if (key == "snr_db") sc.snr_db = value.get<double>();
    else if (key == "ser_db") sc.ser_db = value.get<double>();
    else if (key == "noise_kind") sc.noise_kind = noise_kind_from_name(value.get<std::string>());
    else if (key == "rir_length") sc.rir_length = value.get<int>();
    else if (key == "rir_decay") sc.rir_decay = value.get<double>();
    else if (key == "duration") sc.duration = value.get<double>();
    else if (key == "noise_context") sc.noise_context = value.get<double>();
    else if (key == "loopback_silent") sc.loopback_silent = value.get<bool>();
    else if (key == "seed") sc.seed = value.get<std::uint64_t>();
    else unknown_key("simulator", key);
  }
}

void apply_eval(EvalDatasetConfig& ec, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "examples_per_bucket") ec.examples_per_bucket = value.get<int>();
    else if (key == "seed") ec.seed = value.get<std::uint64_t>();
    else if (key == "snr_buckets") ec.snr_buckets = value.get<std::vector<double>>();
    else if (key == "ser_buckets") ec.ser_buckets = value.get<std::vector<double>>();
    else if (key == "noise_kind") ec.noise_kind = noise_kind_from_name(value.get<std::string>());
    else if (key == "duration") ec.duration = value.get<double>();
    else if (key == "noise_context") ec.noise_context = value.get<double>();
    else if (key == "rir_length") ec.rir_length = value.get<int>();
    else if (key == "rir_decay") ec.rir_decay = value.get<double>();
    else unknown_key("eval", key);
  }
}

void apply_training(AppConfig& cfg, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "beta") cfg.beta = value.get<double>();
    else if (key == "batch_size") cfg.batch_size = value.get<int>();
    else if (key == "pool_size") cfg.pool_size = value.get<int>();
    else if (key == "log_every") cfg.log_every = value.get<int>();
    else if (key == "checkpoint_every") cfg.checkpoint_every = value.get<int>();
    else if (key == "grad_clip") cfg.grad_clip = value.get<double>();
    else unknown_key("training", key);
  }
}

}  // namespace

void AppConfig::validate() const {
  features.validate();
  model.validate();
  sched.validate();
  scene.validate();
  eval.validate();
  if (beta < 0.0 || beta >= 1.0)
    throw std::invalid_argument("config: beta must lie in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (pool_size < 1) throw std::invalid_argument("config: pool_size must be >= 1");
  if (log_every < 1) throw std::invalid_argument("config: log_every must be >= 1");
  if (checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be >= 0");
  if (grad_clip < 0.0) throw std::invalid_argument("config: grad_clip must be >= 0");
  if (features.stacked_dim() != model.mask_dim)
    throw std::invalid_argument(
        "config: feature stacked dim " + std::to_string(features.stacked_dim()) +
        " (n_mels x stack) must equal model mask_dim " + std::to_string(model.mask_dim));
}

TrainOptions AppConfig::train_options(const std::string& out_dir) const {
  TrainOptions opts;
  opts.model = model;
  opts.features = features;
  opts.sched = sched;
  opts.beta = beta;
  opts.batch_size = batch_size;
  opts.pool_size = pool_size;
  opts.log_every = log_every;
  opts.checkpoint_every = checkpoint_every;
  opts.grad_clip = grad_clip;
  opts.out_dir = out_dir;
  return opts;
}

AppConfig desk_config() { return AppConfig{}; }

AppConfig paper_config() {
  AppConfig cfg;
  cfg.features.sample_rate = 16000.0;
  cfg.features.n_mels = 128;
  cfg.features.fmin = 125.0;
  cfg.features.fmax = 7800.0;
  cfg.model = ModelConfig::paper();
  cfg.sched = TrainSchedule::paper();
  cfg.scene.noise_context = 6.0;
  cfg.scene.duration = 4.0;
  return cfg;
}

AppConfig preset_config(const std::string& name) {
  if (name == "desk") return desk_config();
  if (name == "paper") return paper_config();
  throw std::invalid_argument("config: unknown preset \"" + name + "\" (expected desk or paper)");
}

void config_apply_json(AppConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
  if (j.contains("preset")) cfg = preset_config(j.at("preset").get<std::string>());
  for (const auto& [key, value] : j.items()) {
    if (key == "preset") continue;
    else if (key == "feature") apply_feature(cfg.features, value);
    else if (key == "model") apply_model(cfg.model, value);
    else if (key == "schedule") apply_schedule(cfg.sched, value);
    else if (key == "simulator") apply_simulator(cfg.scene, value);
    else if (key == "eval") apply_eval(cfg.eval, value);
    else if (key == "training") apply_training(cfg, value);
    else unknown_key("(top level)", key);
  }
}

nlohmann::json config_to_json(const AppConfig& cfg) {
  nlohmann::json j;
  j["feature"] = {{"sample_rate", cfg.features.sample_rate},
                  {"window_sec", cfg.features.window_sec},
                  {"hop_sec", cfg.features.hop_sec},
                  {"n_fft", cfg.features.n_fft},
                  {"n_mels", cfg.features.n_mels},
                  {"fmin", cfg.features.fmin},
                  {"fmax", cfg.features.fmax},
                  {"stack", cfg.features.stack},
                  {"subsample", cfg.features.subsample}};
  j["model"] = {{"layers", cfg.model.layers},
                {"units", cfg.model.units},
                {"ffn_dim", cfg.model.ffn_dim},
                {"conv_kernel", cfg.model.conv_kernel},
                {"left_context", cfg.model.left_context},
                {"mask_dim", cfg.model.mask_dim},
                {"mode", topology_name(cfg.model.mode)},
                {"stop_grad", cfg.model.stop_grad},
                {"frozen_layers", cfg.model.frozen_layers},
                {"frozen_units", cfg.model.frozen_units},
                {"frozen_kernel", cfg.model.frozen_kernel},
                {"frozen_seed", cfg.model.frozen_seed}};
  j["schedule"] = {{"lambda_start_step", cfg.sched.lambda_start_step},
                   {"lambda_end_step", cfg.sched.lambda_end_step},
                   {"lambda_max", cfg.sched.lambda_max},
                   {"alpha_unfreeze_step", cfg.sched.alpha_unfreeze_step},
                   {"alpha_fixed_value", cfg.sched.alpha_fixed_value},
                   {"total_steps", cfg.sched.total_steps},
                   {"learning_rate", cfg.sched.learning_rate},
                   {"seed", cfg.sched.seed}};
  j["simulator"] = {{"mode", topology_name(cfg.scene.mode)},
                    {"snr_db", cfg.scene.snr_db},
                    {"ser_db", cfg.scene.ser_db},
                    {"noise_kind", noise_kind_name(cfg.scene.noise_kind)},
                    {"rir_length", cfg.scene.rir_length},
                    {"rir_decay", cfg.scene.rir_decay},
                    {"duration", cfg.scene.duration},
                    {"noise_context", cfg.scene.noise_context},
                    {"loopback_silent", cfg.scene.loopback_silent},
                    {"seed", cfg.scene.seed}};
  j["eval"] = {{"examples_per_bucket", cfg.eval.examples_per_bucket},
               {"seed", cfg.eval.seed},
               {"snr_buckets", cfg.eval.snr_buckets},
               {"ser_buckets", cfg.eval.ser_buckets},
               {"noise_kind", noise_kind_name(cfg.eval.noise_kind)},
               {"duration", cfg.eval.duration},
               {"noise_context", cfg.eval.noise_context},
               {"rir_length", cfg.eval.rir_length},
               {"rir_decay", cfg.eval.rir_decay}};
  j["training"] = {{"beta", cfg.beta},
                   {"batch_size", cfg.batch_size},
                   {"pool_size", cfg.pool_size},
                   {"log_every", cfg.log_every},
                   {"checkpoint_every", cfg.checkpoint_every},
                   {"grad_clip", cfg.grad_clip}};
  return j;
}

AppConfig load_config_file(const std::string& path, const std::string& preset) {
  AppConfig cfg = preset_config(preset);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  config_apply_json(cfg, j);
  return cfg;
}

void write_config_file(const std::string& path, const AppConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("config: cannot open " + path + " for writing");
  out << config_to_json(cfg).dump(1) << "\n";
}

}  // namespace maskfe
