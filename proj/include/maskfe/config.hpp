// SPDX-License-Identifier: Apache-2.0
//
// One JSON config file covering features, model, schedule, simulator, and
// evaluation, with desk/paper presets and partial overlays.
#pragma once

#include "maskfe/eval.hpp"
#include "maskfe/model.hpp"
#include "maskfe/scenesim.hpp"
#include "maskfe/training.hpp"

#include <json.hpp>

#include <string>

namespace maskfe {

struct AppConfig {
  FeatureConfig features;
  ModelConfig model;
  TrainSchedule sched;
  SceneConfig scene;
  EvalDatasetConfig eval;
  double beta = 0.01;
  int batch_size = 4;
  int pool_size = 64;
  int log_every = 10;
  int checkpoint_every = 1000;
  double grad_clip = 0.0;

  void validate() const;
  TrainOptions train_options(const std::string& out_dir) const;
};

AppConfig desk_config();
AppConfig paper_config();
AppConfig preset_config(const std::string& name);  // "desk" | "paper"

// Overlays the fields present in j onto cfg; unknown sections or keys raise.
void config_apply_json(AppConfig& cfg, const nlohmann::json& j);
nlohmann::json config_to_json(const AppConfig& cfg);

AppConfig load_config_file(const std::string& path, const std::string& preset = "desk");
void write_config_file(const std::string& path, const AppConfig& cfg);

}  // namespace maskfe
