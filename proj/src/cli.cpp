// SPDX-License-Identifier: Apache-2.0
#include "maskfe/cli.hpp"

#include "maskfe/config.hpp"
#include "maskfe/csv.hpp"
#include "maskfe/eval.hpp"
#include "maskfe/rng.hpp"
#include "maskfe/wav.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace maskfe {

namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string preset = "desk";
  std::string config_path;
};

void add_common(CLI::App* sub, CommonArgs& common) {
  sub->add_option("--preset", common.preset, "Configuration preset: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  sub->add_option("--config", common.config_path, "JSON config file overlaid onto the preset");
}

AppConfig resolve_config(const CommonArgs& common) {
  AppConfig cfg = common.config_path.empty() ? preset_config(common.preset)
                                             : load_config_file(common.config_path, common.preset);
  cfg.validate();
  return cfg;
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(1) + "\n");
}

void write_mono_wav(const std::string& path, const std::vector<double>& samples, int sample_rate) {
  WavData data;
  data.sample_rate = sample_rate;
  data.channels.push_back(samples);
  wav_write(path, data);
}

std::vector<double> parse_alpha_list(const std::string& text) {
  std::vector<double> alphas;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    size_t pos = 0;
    double v;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("--alphas: cannot parse \"" + item + "\" as a number");
    }
    if (pos != item.size())
      throw std::invalid_argument("--alphas: cannot parse \"" + item + "\" as a number");
    alphas.push_back(v);
  }
  if (alphas.empty()) throw std::invalid_argument("--alphas: list must be nonempty");
  return alphas;
}

FrontendParams load_checkpoint(const std::string& path, ModelConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  return params_from_json(j, cfg);
}

// --- simulate ---------------------------------------------------------------

int run_simulate(const AppConfig& cfg, const std::string& out, int count) {
  ensure_out_dir(out);
  const int sr = static_cast<int>(cfg.features.sample_rate);
  nlohmann::json manifest;
  manifest["mode"] = topology_name(cfg.scene.mode);
  manifest["sample_rate"] = sr;
  manifest["count"] = count;
  nlohmann::json scenes = nlohmann::json::array();
  for (int i = 0; i < count; ++i) {
    SceneConfig sc = cfg.scene;
    sc.seed = hash_seed(cfg.scene.seed, static_cast<std::uint64_t>(i));
    const Scene scene = make_scene(sc, cfg.features);
    char prefix[32];
    std::snprintf(prefix, sizeof(prefix), "scene_%03d", i);
    nlohmann::json entry;
    entry["index"] = i;
    entry["seed"] = sc.seed;
    if (sc.mode == Topology::Enhancement)
      entry["snr_db"] = sc.snr_db;
    else
      entry["ser_db"] = sc.ser_db;
    nlohmann::json files;
    auto emit = [&](const char* tag, const std::vector<double>& samples) {
      const std::string name = std::string(prefix) + "_" + tag + ".wav";
      write_mono_wav(join_path(out, name), samples, sr);
      files[tag] = name;
    };
    emit("mixture", scene.mixture);
    emit("clean", scene.reverberant);
    emit("interference", scene.interference);
    if (sc.mode == Topology::Enhancement) {
      if (!scene.context.empty()) emit("context", scene.context);
    } else {
      emit("loopback", scene.loopback);
    }
    entry["files"] = files;
    scenes.push_back(entry);
  }
  manifest["scenes"] = scenes;
  write_json_file(join_path(out, "manifest.json"), manifest);
  std::cout << "wrote " << count << " scene(s) to " << out << "\n";
  return 0;
}

// --- features ---------------------------------------------------------------

int run_features(const AppConfig& cfg, const std::string& in_path, const std::string& out,
                 const std::string& stats_source) {
  ensure_out_dir(out);
  const WavData wav = wav_read(in_path);
  if (wav.channels.empty() || wav.channels[0].empty())
    throw std::invalid_argument("input " + in_path + " has no samples");
  if (wav.sample_rate != static_cast<int>(cfg.features.sample_rate))
    throw std::invalid_argument(
        "input sample rate " + std::to_string(wav.sample_rate) +
        " does not match configured feature sample rate " +
        std::to_string(static_cast<int>(cfg.features.sample_rate)));

  const MelSpectrogram mel = mel_spectrogram(wav.channels[0], cfg.features);
  NormStats stats;
  if (stats_source == "utterance")
    stats = per_utterance_stats(mel);
  else
    stats = training_norm_stats(cfg.features, cfg.sched);
  const AsrFeatures feats = asr_feature_pipeline(mel, cfg.features, stats);

  csv_write_matrix(join_path(out, "mel.csv"), mel.values, "");
  csv_write_matrix(join_path(out, "features.csv"), feats.values, "");
  Arr stats_mat(2, stats.mean.cols());
  stats_mat.row(0) = stats.mean.row(0);
  stats_mat.row(1) = stats.std.row(0);
  csv_write_matrix(join_path(out, "stats.csv"), stats_mat, "");
  std::cout << "wrote mel.csv (" << mel.frames() << "x" << mel.bands() << "), features.csv ("
            << feats.frames() << "x" << feats.dims() << "), stats.csv to " << out << "\n";
  return 0;
}

// --- train ------------------------------------------------------------------

int run_train(const AppConfig& cfg, const std::string& out, const std::string& resume_path) {
  ensure_out_dir(out);
  write_json_file(join_path(out, "config.json"), config_to_json(cfg));
  TrainOptions opts = cfg.train_options(out);
  const TrainResult result =
      resume_path.empty() ? train(opts) : resume_train(opts, resume_path);
  for (const MetricsRow& r : result.metrics)
    std::cout << "step " << r.step << " l_irm=" << format_double(r.l_irm)
              << " l_asr=" << format_double(r.l_asr) << " lambda=" << format_double(r.lambda)
              << " total=" << format_double(r.total)
              << " mean_alpha=" << format_double(r.mean_alpha) << "\n";
  std::cout << "trained to step " << result.next_step << "; artifacts in " << out << "\n";
  return 0;
}

// --- eval -------------------------------------------------------------------

int run_eval(const AppConfig& cfg, const std::string& out, const std::string& checkpoint,
             bool use_fixed, double fixed_alpha) {
  ensure_out_dir(out);
  ModelConfig mcfg = cfg.model;
  const FrontendParams params = load_checkpoint(checkpoint, mcfg);
  const NormStats stats = training_norm_stats(cfg.features, cfg.sched);
  const AlphaMode mode = use_fixed ? AlphaMode::fixed(fixed_alpha) : AlphaMode::predicted();
  const EvalSummary summary =
      evaluate(params, mcfg, mode, cfg.beta, cfg.eval, cfg.features, stats);
  write_eval_summary(join_path(out, "summary.json"), summary);
  for (const BucketSummary& b : summary.buckets)
    std::cout << "bucket " << format_double(b.level_db) << " dB: n=" << b.n
              << " l_irm=" << format_double(b.l_irm)
              << " l_asr_proxy=" << format_double(b.l_asr_proxy)
              << " snr_impr_db=" << format_double(b.snr_improvement_db)
              << " mean_alpha=" << format_double(b.mean_alpha) << "\n";
  std::cout << "wrote summary.json to " << out << "\n";
  return 0;
}

// --- sweep-alpha ------------------------------------------------------------

int run_sweep(const AppConfig& cfg, const std::string& out, bool oracle,
              const std::string& checkpoint, double level_db, const std::string& alphas_text,
              bool include_predicted) {
  ensure_out_dir(out);
  const std::vector<double> alphas = parse_alpha_list(alphas_text);
  const NormStats stats = training_norm_stats(cfg.features, cfg.sched);
  std::vector<SweepRow> rows;
  if (oracle) {
    ModelConfig mcfg = cfg.model;
    const FrontendParams params = init_params(mcfg, cfg.sched.seed);
    rows = sweep_alpha_oracle(alphas, cfg.beta, cfg.eval, mcfg.mode, level_db, params, mcfg,
                              cfg.features, stats);
  } else {
    ModelConfig mcfg = cfg.model;
    const FrontendParams params = load_checkpoint(checkpoint, mcfg);
    rows = sweep_alpha_model(alphas, cfg.beta, include_predicted, cfg.eval, level_db, params,
                             mcfg, cfg.features, stats);
  }
  write_sweep_csv(join_path(out, "sweep.csv"), rows);
  for (const SweepRow& r : rows)
    std::cout << "alpha=" << r.alpha_label << " distortion=" << format_double(r.distortion)
              << " residual=" << format_double(r.residual)
              << " l_asr_proxy=" << format_double(r.l_asr_proxy) << "\n";
  std::cout << "wrote sweep.csv to " << out << "\n";
  return 0;
}

// --- gradcheck --------------------------------------------------------------

int run_gradcheck(const AppConfig& cfg, double lambda, double eps, long max_per_param) {
  const GradcheckSummary summary = frontend_gradcheck(
      cfg.model, cfg.features, lambda, cfg.beta, eps, max_per_param, cfg.sched.seed);
  for (const GradcheckCase& c : summary.cases)
    std::cout << c.name << ": max rel error " << format_double(c.max_rel_error) << " (param "
              << c.worst_param << ", analytic " << format_double(c.analytic) << ", numeric "
              << format_double(c.numeric) << ")\n";
  std::cout << "max rel error: " << format_double(summary.max_rel_error) << "\n";
  return summary.max_rel_error < 1e-4 ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Time-frequency masking speech frontend"};
  app.name("maskfe");
  app.require_subcommand(1);

  // simulate
  CommonArgs sim_common;
  std::string sim_out;
  int sim_count = 1;
  CLI::App* sim = app.add_subcommand("simulate", "Generate synthetic scenes as WAV files");
  add_common(sim, sim_common);
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--count", sim_count, "Number of scenes")->check(CLI::PositiveNumber);

  // features
  CommonArgs feat_common;
  std::string feat_in, feat_out, feat_stats = "utterance";
  CLI::App* feat = app.add_subcommand("features", "Compute Mel and normalized features for a WAV");
  add_common(feat, feat_common);
  feat->add_option("--in", feat_in, "Input WAV file")->required();
  feat->add_option("--out", feat_out, "Output directory")->required();
  feat->add_option("--stats", feat_stats, "Normalization statistics source")
      ->check(CLI::IsMember({"utterance", "global"}));

  // train
  CommonArgs train_common;
  std::string train_out, train_resume;
  CLI::App* tr = app.add_subcommand("train", "Train the frontend");
  add_common(tr, train_common);
  tr->add_option("--out", train_out, "Output directory")->required();
  tr->add_option("--resume", train_resume, "Resume from a saved training state");

  // eval
  CommonArgs eval_common;
  std::string eval_out, eval_checkpoint;
  double eval_fixed_alpha = 0.5;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint over the level buckets");
  add_common(ev, eval_common);
  ev->add_option("--out", eval_out, "Output directory")->required();
  ev->add_option("--checkpoint", eval_checkpoint, "Model or training-state JSON")->required();
  CLI::Option* fixed_opt =
      ev->add_option("--fixed-alpha", eval_fixed_alpha, "Evaluate with a fixed alpha");
  ev->add_flag("--predicted", "Evaluate with predicted alpha (default)")->excludes(fixed_opt);

  // sweep-alpha
  CommonArgs sweep_common;
  std::string sweep_out, sweep_checkpoint;
  std::string sweep_alphas = "1e-6,0.25,0.5,0.75,1.0";
  double sweep_level = 0.0;
  CLI::App* sw = app.add_subcommand("sweep-alpha", "Sweep fixed alpha values at one level");
  add_common(sw, sweep_common);
  sw->add_option("--out", sweep_out, "Output directory")->required();
  CLI::Option* oracle_flag = sw->add_flag("--oracle", "Use the oracle mask as the mask source");
  CLI::Option* ckpt_opt =
      sw->add_option("--checkpoint", sweep_checkpoint, "Model or training-state JSON");
  oracle_flag->excludes(ckpt_opt);
  sw->add_option("--level-db", sweep_level, "Input SNR (enhancement) or SER (aec) in dB");
  sw->add_option("--alphas", sweep_alphas, "Comma-separated alpha values in (0, 1]");
  sw->add_flag("--include-predicted", "Append a row with the model's predicted alpha");

  // gradcheck
  CommonArgs gc_common;
  double gc_lambda = 1.0, gc_eps = 1e-4;
  long gc_max_per_param = 4;
  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradient");
  add_common(gc, gc_common);
  gc->add_option("--lambda", gc_lambda, "Weight of the encoder-distance term");
  gc->add_option("--eps", gc_eps, "Finite-difference step");
  gc->add_option("--max-per-param", gc_max_per_param, "Probed elements per parameter")
      ->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (sim->parsed()) return run_simulate(resolve_config(sim_common), sim_out, sim_count);
    if (feat->parsed())
      return run_features(resolve_config(feat_common), feat_in, feat_out, feat_stats);
    if (tr->parsed()) return run_train(resolve_config(train_common), train_out, train_resume);
    if (ev->parsed())
      return run_eval(resolve_config(eval_common), eval_out, eval_checkpoint,
                      fixed_opt->count() > 0, eval_fixed_alpha);
    if (sw->parsed())
      return run_sweep(resolve_config(sweep_common), sweep_out, oracle_flag->count() > 0,
                       sweep_checkpoint, sweep_level, sweep_alphas,
                       sw->count("--include-predicted") > 0);
    if (gc->parsed())
      return run_gradcheck(resolve_config(gc_common), gc_lambda, gc_eps, gc_max_per_param);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << "error: no subcommand\n\n" << app.help();
  return 1;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace maskfe
