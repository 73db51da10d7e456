// SPDX-License-Identifier: Apache-2.0
#include "maskfe/model.hpp"

#include "maskfe/rng.hpp"
#include "maskfe/scenesim.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <utility>

namespace maskfe {

namespace {

Tensor swish(const Tensor& x) { return mul(x, sigmoid(x)); }

Arr uniform_init(Rng& rng, Eigen::Index rows, Eigen::Index cols, double fan_in) {
  const double limit = std::sqrt(1.0 / fan_in);
  Arr w(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-limit, limit);
  return w;
}

Arr normal_init(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Arr w(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.normal(0.0, stddev);
  return w;
}

void add_param(FrontendParams& p, const std::string& name, Arr v) {
  p.trainable.emplace(name, Tensor::param(std::move(v), name));
}

}  // namespace

std::string topology_name(Topology t) {
  return t == Topology::Enhancement ? "enhancement" : "aec";
}

Topology topology_from_name(const std::string& name) {
  if (name == "enhancement") return Topology::Enhancement;
  if (name == "aec") return Topology::AEC;
  throw std::invalid_argument("unknown topology: " + name);
}

void ModelConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("model config: layers must be >= 1");
  if (units < 1 || ffn_dim < 1) throw std::invalid_argument("model config: bad widths");
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    throw std::invalid_argument("model config: conv_kernel must be odd and positive");
  if (left_context < 0) throw std::invalid_argument("model config: left_context must be >= 0");
  if (mask_dim < 1) throw std::invalid_argument("model config: mask_dim must be >= 1");
  if (frozen_layers < 0 || frozen_units < 1 || frozen_kernel < 1)
    throw std::invalid_argument("model config: bad frozen proxy shape");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig cfg;
  cfg.layers = 4;
  cfg.units = 256;
  cfg.ffn_dim = 1024;
  cfg.conv_kernel = 15;
  cfg.left_context = 31;
  cfg.mask_dim = 512;
  return cfg;
}

const Tensor& FrontendParams::at(const std::string& name) const {
  auto it = trainable.find(name);
  if (it != trainable.end()) return it->second;
  auto fit = frozen.find(name);
  if (fit != frozen.end()) return fit->second;
  throw std::out_of_range("no parameter named " + name);
}

std::vector<Tensor> FrontendParams::trainables() const {
  std::vector<Tensor> out;
  out.reserve(trainable.size());
  for (const auto& [name, t] : trainable) out.push_back(t);
  return out;
}

bool is_theta_alpha(const std::string& name) { return name.rfind("alpha.", 0) == 0; }
bool is_theta_irm(const std::string& name) { return name.rfind("dec.", 0) == 0; }

FrontendParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  FrontendParams p;
  Rng rng(hash_seed(seed, 0x6d6f64656cULL));
  const int d = cfg.units;

  add_param(p, "enc.in.w", uniform_init(rng, 2 * cfg.mask_dim, d, 2 * cfg.mask_dim));
  add_param(p, "enc.in.b", Arr::Zero(1, d));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string pre = "enc.L" + std::to_string(l) + ".";
    add_param(p, pre + "att.ln.gamma", Arr::Ones(1, d));
    add_param(p, pre + "att.ln.beta", Arr::Zero(1, d));
    for (const char* w : {"att.wq", "att.wk", "att.wv", "att.wo"})
      add_param(p, pre + w, uniform_init(rng, d, d, d));
    // no key bias: softmax is shift-invariant per row, so it could never
    // receive a gradient
    for (const char* b : {"att.bq", "att.bv", "att.bo"})
      add_param(p, pre + b, Arr::Zero(1, d));
    add_param(p, pre + "conv.ln.gamma", Arr::Ones(1, d));
    add_param(p, pre + "conv.ln.beta", Arr::Zero(1, d));
    add_param(p, pre + "conv.w", uniform_init(rng, cfg.conv_kernel, d, cfg.conv_kernel));
    add_param(p, pre + "conv.b", Arr::Zero(1, d));
    add_param(p, pre + "ffn.ln.gamma", Arr::Ones(1, d));
    add_param(p, pre + "ffn.ln.beta", Arr::Zero(1, d));
    add_param(p, pre + "ffn.w1", uniform_init(rng, d, cfg.ffn_dim, d));
    add_param(p, pre + "ffn.b1", Arr::Zero(1, cfg.ffn_dim));
    add_param(p, pre + "ffn.w2", uniform_init(rng, cfg.ffn_dim, d, cfg.ffn_dim));
    add_param(p, pre + "ffn.b2", Arr::Zero(1, d));
  }
  add_param(p, "enc.final_ln.gamma", Arr::Ones(1, d));
  add_param(p, "enc.final_ln.beta", Arr::Zero(1, d));

  add_param(p, "dec.w", uniform_init(rng, d, cfg.mask_dim, d));
  add_param(p, "dec.b", Arr::Zero(1, cfg.mask_dim));

  add_param(p, "alpha.w", normal_init(rng, d, 1, 0.01));
  add_param(p, "alpha.b", Arr::Zero(1, 1));

  Rng frozen_rng(hash_seed(cfg.frozen_seed, 0x66726f7aULL));
  for (int l = 0; l < cfg.frozen_layers; ++l) {
    const std::string pre = "frozen.L" + std::to_string(l) + ".";
    const int in_dim = l == 0 ? cfg.mask_dim : cfg.frozen_units;
    p.frozen.emplace(pre + "w",
                     Tensor::constant(uniform_init(frozen_rng, in_dim, cfg.frozen_units, in_dim)));
    p.frozen.emplace(pre + "b", Tensor::constant(Arr::Zero(1, cfg.frozen_units)));
    p.frozen.emplace(pre + "conv.w",
                     Tensor::constant(uniform_init(frozen_rng, cfg.frozen_kernel,
                                                   cfg.frozen_units, cfg.frozen_kernel)));
    p.frozen.emplace(pre + "conv.b", Tensor::constant(Arr::Zero(1, cfg.frozen_units)));
  }
  return p;
}

AlphaMode AlphaMode::fixed(double a) {
  AlphaMode m;
  m.kind = Kind::Fixed;
  m.value = a;
  return m;
}

AlphaMode AlphaMode::predicted() {
  AlphaMode m;
  m.kind = Kind::Predicted;
  return m;
}

AlphaMode AlphaMode::fixed_track(Arr t) {
  AlphaMode m;
  m.kind = Kind::FixedTrack;
  m.track = std::move(t);
  return m;
}

Arr ForwardOutput::alpha_track() const {
  if (alpha.rows() == 1 && alpha.cols() == 1)
    return Arr::Constant(m_hat.rows(), 1, alpha.value()(0, 0));
  return alpha.value();
}

Arr causal_attention_mask(Eigen::Index frames, int left_context) {
  Arr mask = Arr::Constant(frames, frames, -1e30);
  for (Eigen::Index t = 0; t < frames; ++t)
    for (Eigen::Index s = std::max<Eigen::Index>(0, t - left_context); s <= t; ++s)
      mask(t, s) = 0.0;
  return mask;
}

Tensor encoder_forward(const Tensor& x, const FrontendParams& params, const ModelConfig& cfg) {
  if (x.cols() != 2 * cfg.mask_dim)
    throw std::invalid_argument("encoder_forward: input dim " + std::to_string(x.cols()) +
                                " does not match 2*mask_dim = " +
                                std::to_string(2 * cfg.mask_dim));
  const Arr att_mask = causal_attention_mask(x.rows(), cfg.left_context);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.units));

  Tensor h = add(matmul(x, params.at("enc.in.w")), params.at("enc.in.b"));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string pre = "enc.L" + std::to_string(l) + ".";

    Tensor a_ln = layer_norm(h, params.at(pre + "att.ln.gamma"), params.at(pre + "att.ln.beta"));
    Tensor q = add(matmul(a_ln, params.at(pre + "att.wq")), params.at(pre + "att.bq"));
    Tensor k = matmul(a_ln, params.at(pre + "att.wk"));
    Tensor v = add(matmul(a_ln, params.at(pre + "att.wv")), params.at(pre + "att.bv"));
    Tensor probs = softmax_masked(scale(matmul(q, transpose(k)), inv_sqrt_d), att_mask);
    Tensor att = add(matmul(matmul(probs, v), params.at(pre + "att.wo")),
                     params.at(pre + "att.bo"));
    h = add(h, att);

    Tensor c_ln = layer_norm(h, params.at(pre + "conv.ln.gamma"), params.at(pre + "conv.ln.beta"));
    Tensor c = swish(causal_depthwise_conv(c_ln, params.at(pre + "conv.w"),
                                           params.at(pre + "conv.b")));
    h = add(h, c);

    Tensor f_ln = layer_norm(h, params.at(pre + "ffn.ln.gamma"), params.at(pre + "ffn.ln.beta"));
    Tensor f = add(matmul(swish(add(matmul(f_ln, params.at(pre + "ffn.w1")),
                                    params.at(pre + "ffn.b1"))),
                          params.at(pre + "ffn.w2")),
                   params.at(pre + "ffn.b2"));
    h = add(h, f);
  }
  return layer_norm(h, params.at("enc.final_ln.gamma"), params.at("enc.final_ln.beta"));
}

Tensor mask_decoder(const Tensor& e, const FrontendParams& params) {
  return sigmoid(add(matmul(e, params.at("dec.w")), params.at("dec.b")));
}

Tensor mask_scalar_net(const Tensor& e, const FrontendParams& params, const ModelConfig& cfg) {
  Tensor src = cfg.stop_grad ? stop_gradient(e) : e;
  return sigmoid(add(matmul(src, params.at("alpha.w")), params.at("alpha.b")));
}

Arr tile_stats_row(const Arr& row, int stack) {
  Arr out(1, row.cols() * stack);
  for (int j = 0; j < stack; ++j) out.block(0, j * row.cols(), 1, row.cols()) = row;
  return out;
}

Tensor normalized_log_features(const Tensor& stacked_linear, const NormStats& stats, int stack) {
  if (stats.mean.cols() * stack != stacked_linear.cols())
    throw std::invalid_argument("normalized_log_features: stats/stack geometry mismatch");
  if ((stats.std <= 0.0).any())
    throw std::invalid_argument("normalized_log_features: std must be positive");
  Arr mean_t = tile_stats_row(stats.mean, stack);
  Arr inv_std_t = tile_stats_row(Arr(1.0 / stats.std), stack);
  return mul(sub(log(floor_max(stacked_linear, kLogFloor)), Tensor::constant(mean_t)),
             Tensor::constant(inv_std_t));
}

ForwardOutput frontend_forward(const TrainingExample& ex, const FrontendParams& params,
                               const ModelConfig& cfg, const AlphaMode& mode, double beta,
                               const NormStats& stats) {
  if (ex.meta.mode != cfg.mode)
    throw std::invalid_argument("frontend_forward: example topology " +
                                topology_name(ex.meta.mode) + " does not match model topology " +
                                topology_name(cfg.mode));
  if (ex.channel_a.dims() != cfg.mask_dim || ex.channel_b.dims() != cfg.mask_dim)
    throw std::invalid_argument("frontend_forward: channel dims do not match mask_dim");
  const Eigen::Index frames = ex.channel_a.frames();
  if (ex.channel_b.frames() != frames || ex.noisy_linear_mel.frames() != frames)
    throw std::invalid_argument("frontend_forward: channel frame counts differ");
  if (ex.noisy_linear_mel.bands() != cfg.mask_dim)
    throw std::invalid_argument("frontend_forward: noisy features do not match mask_dim");
  if (cfg.mask_dim % stats.mean.cols() != 0)
    throw std::invalid_argument("frontend_forward: stats bands do not divide mask_dim");
  const int stack = static_cast<int>(cfg.mask_dim / stats.mean.cols());

  Arr x_in(frames, 2 * cfg.mask_dim);
  x_in.block(0, 0, frames, cfg.mask_dim) = ex.channel_a.values;
  x_in.block(0, cfg.mask_dim, frames, cfg.mask_dim) = ex.channel_b.values;

  ForwardOutput out;
  out.encoder_out = encoder_forward(Tensor::constant(std::move(x_in)), params, cfg);
  out.m_hat = mask_decoder(out.encoder_out, params);
  switch (mode.kind) {
    case AlphaMode::Kind::Fixed:
      if (!(mode.value >= 0.0 && mode.value <= 1.0))
        throw std::invalid_argument("frontend_forward: fixed alpha must lie in [0, 1]");
      out.alpha = Tensor::scalar(mode.value);
      break;
    case AlphaMode::Kind::Predicted:
      out.alpha = mask_scalar_net(out.encoder_out, params, cfg);
      break;
    case AlphaMode::Kind::FixedTrack:
      if (mode.track.rows() != frames || mode.track.cols() != 1)
        throw std::invalid_argument("frontend_forward: alpha track length mismatch");
      out.alpha = Tensor::constant(mode.track);
      break;
  }
  out.m_bar = postprocess_tensor(out.m_hat, out.alpha, beta);
  out.enhanced = mul(Tensor::constant(ex.noisy_linear_mel.values), out.m_bar);
  out.asr_features = normalized_log_features(out.enhanced, stats, stack);
  return out;
}

Tensor frozen_asr_encoder(const Tensor& features, const FrontendParams& params,
                          const ModelConfig& cfg) {
  if (cfg.frozen_layers == 0) return features;
  Tensor h = features;
  for (int l = 0; l < cfg.frozen_layers; ++l) {
    const std::string pre = "frozen.L" + std::to_string(l) + ".";
    h = swish(add(matmul(h, params.at(pre + "w")), params.at(pre + "b")));
    h = causal_depthwise_conv(h, params.at(pre + "conv.w"), params.at(pre + "conv.b"));
  }
  return h;
}

nlohmann::json arr_to_json(const Arr& a) {
  nlohmann::json j;
  j["rows"] = a.rows();
  j["cols"] = a.cols();
  std::vector<double> data;
  data.reserve(static_cast<size_t>(a.size()));
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) data.push_back(a(r, c));
  j["data"] = std::move(data);
  return j;
}

Arr arr_from_json(const nlohmann::json& j) {
  Arr a(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != a.size())
    throw std::runtime_error("checkpoint: array size mismatch");
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = data[i++].get<double>();
  return a;
}

nlohmann::json params_to_json(const FrontendParams& params, const ModelConfig& cfg) {
  nlohmann::json j;
  j["version"] = 1;
  j["model"] = {{"layers", cfg.layers},
                {"units", cfg.units},
                {"ffn_dim", cfg.ffn_dim},
                {"conv_kernel", cfg.conv_kernel},
                {"left_context", cfg.left_context},
                {"mask_dim", cfg.mask_dim},
                {"mode", topology_name(cfg.mode)},
                {"stop_grad", cfg.stop_grad},
                {"frozen_layers", cfg.frozen_layers},
                {"frozen_units", cfg.frozen_units},
                {"frozen_kernel", cfg.frozen_kernel},
                {"frozen_seed", cfg.frozen_seed}};
  for (const auto& [name, t] : params.trainable) j["trainable"][name] = arr_to_json(t.value());
  for (const auto& [name, t] : params.frozen) j["frozen"][name] = arr_to_json(t.value());
  return j;
}

FrontendParams params_from_json(const nlohmann::json& j, ModelConfig& cfg_out) {
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("checkpoint: unsupported version");
  const auto& m = j.at("model");
  cfg_out.layers = m.at("layers").get<int>();
  cfg_out.units = m.at("units").get<int>();
  cfg_out.ffn_dim = m.at("ffn_dim").get<int>();
  cfg_out.conv_kernel = m.at("conv_kernel").get<int>();
  cfg_out.left_context = m.at("left_context").get<int>();
  cfg_out.mask_dim = m.at("mask_dim").get<int>();
  cfg_out.mode = topology_from_name(m.at("mode").get<std::string>());
  cfg_out.stop_grad = m.at("stop_grad").get<bool>();
  cfg_out.frozen_layers = m.at("frozen_layers").get<int>();
  cfg_out.frozen_units = m.at("frozen_units").get<int>();
  cfg_out.frozen_kernel = m.at("frozen_kernel").get<int>();
  cfg_out.frozen_seed = m.at("frozen_seed").get<std::uint64_t>();
  FrontendParams p;
  for (const auto& [name, entry] : j.at("trainable").items())
    p.trainable.emplace(name, Tensor::param(arr_from_json(entry), name));
  if (j.contains("frozen"))
    for (const auto& [name, entry] : j.at("frozen").items())
      p.frozen.emplace(name, Tensor::constant(arr_from_json(entry)));
  return p;
}

void save_params(const std::string& path, const FrontendParams& params, const ModelConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_params: cannot open " + path);
  out << params_to_json(params, cfg).dump(1) << "\n";
}

FrontendParams load_params(const std::string& path, ModelConfig& cfg_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_params: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return params_from_json(j, cfg_out);
}

}  // namespace maskfe
