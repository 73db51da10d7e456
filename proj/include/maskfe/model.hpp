// SPDX-License-Identifier: Apache-2.0
//
// Causal encoder, mask decoder, mask-scalar net with stop-gradient, frozen
// ASR-encoder proxy, and the end-to-end forward pass for both topologies.
#pragma once

#include "maskfe/features.hpp"
#include "maskfe/mask.hpp"
#include "maskfe/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace maskfe {

enum class Topology { Enhancement, AEC };

std::string topology_name(Topology t);
Topology topology_from_name(const std::string& name);

struct ModelConfig {
  int layers = 1;
  int units = 32;
  int ffn_dim = 64;
  int conv_kernel = 7;
  int left_context = 8;
  int mask_dim = 128;  // n_mels * stack
  Topology mode = Topology::Enhancement;
  bool stop_grad = true;  // E2; false gives the E1 variant

  int frozen_layers = 2;
  int frozen_units = 32;
  int frozen_kernel = 5;
  std::uint64_t frozen_seed = 9001;

  void validate() const;
  static ModelConfig desk();
  static ModelConfig paper();
};

// Named parameter store. Trainable entries are autodiff params; frozen proxy
// weights are constants and never receive gradients.
struct FrontendParams {
  std::map<std::string, Tensor> trainable;
  std::map<std::string, Tensor> frozen;

  const Tensor& at(const std::string& name) const;
  std::vector<Tensor> trainables() const;
};

// theta_alpha is every "alpha.*" entry; theta_irm every "dec.*" entry.
bool is_theta_alpha(const std::string& name);
bool is_theta_irm(const std::string& name);

FrontendParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Per-frame alpha source for the forward pass. FixedTrack substitutes a
// constant per-frame vector (used to probe the stop-gradient boundary).
struct AlphaMode {
  enum class Kind { Fixed, Predicted, FixedTrack };
  Kind kind = Kind::Fixed;
  double value = 0.5;
  Arr track;  // frames x 1 for FixedTrack

  static AlphaMode fixed(double a);
  static AlphaMode predicted();
  static AlphaMode fixed_track(Arr t);
};

struct ForwardOutput {
  Tensor encoder_out;   // frames x units
  Tensor m_hat;         // frames x mask_dim, in (0,1)
  Tensor alpha;         // frames x 1 (Predicted/FixedTrack) or 1 x 1 (Fixed)
  Tensor m_bar;         // frames x mask_dim, in [beta, 1]
  Tensor enhanced;      // frames x mask_dim, linear stacked Mel
  Tensor asr_features;  // frames x mask_dim, log + normalized

  Arr alpha_track() const;  // frames x 1 view of alpha regardless of mode
};

// Encoder over the concatenated 2-channel feature block, frames x (2*mask_dim).
Tensor encoder_forward(const Tensor& x, const FrontendParams& params, const ModelConfig& cfg);

Tensor mask_decoder(const Tensor& e, const FrontendParams& params);

// alpha(t) = sigmoid(FC(stop_gradient(e_t))); the stop-gradient is dropped
// when cfg.stop_grad is false (E1).
Tensor mask_scalar_net(const Tensor& e, const FrontendParams& params, const ModelConfig& cfg);

struct TrainingExample;  // scene-sim

ForwardOutput frontend_forward(const TrainingExample& ex, const FrontendParams& params,
                               const ModelConfig& cfg, const AlphaMode& mode, double beta,
                               const NormStats& stats);

// Frozen proxy embedding of an ASR feature block; frozen_layers == 0 is the
// identity (used by loss unit tests).
Tensor frozen_asr_encoder(const Tensor& features, const FrontendParams& params,
                          const ModelConfig& cfg);

// Stats row tiled across the stack blocks, 1 x (bands * stack).
Arr tile_stats_row(const Arr& row, int stack);

// Differentiable twin of asr_feature_pipeline on stacked linear-Mel input.
Tensor normalized_log_features(const Tensor& stacked_linear, const NormStats& stats, int stack);

Arr causal_attention_mask(Eigen::Index frames, int left_context);

// JSON parameter checkpoints; round trips are bit-exact.
nlohmann::json arr_to_json(const Arr& a);
Arr arr_from_json(const nlohmann::json& j);
nlohmann::json params_to_json(const FrontendParams& params, const ModelConfig& cfg);
FrontendParams params_from_json(const nlohmann::json& j, ModelConfig& cfg_out);
void save_params(const std::string& path, const FrontendParams& params, const ModelConfig& cfg);
FrontendParams load_params(const std::string& path, ModelConfig& cfg_out);

}  // namespace maskfe
