// SPDX-License-Identifier: Apache-2.0
//
// equikit command line: synthetic data generation, equivariance
// certification, training, evaluation and the rotation-robustness sweep.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "equikit/detector.hpp"
#include "equikit/harness.hpp"
#include "equikit/serialize.hpp"
#include "equikit/synthetic.hpp"

namespace {

using namespace equikit;

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig sc;
  sc.height = j.value("height", sc.height);
  sc.width = j.value("width", sc.width);
  sc.num_classes = j.value("num_classes", sc.num_classes);
  sc.min_objects = j.value("min_objects", sc.min_objects);
  sc.max_objects = j.value("max_objects", sc.max_objects);
  sc.min_size = j.value("min_size", sc.min_size);
  sc.max_size = j.value("max_size", sc.max_size);
  sc.min_aspect = j.value("min_aspect", sc.min_aspect);
  sc.max_aspect = j.value("max_aspect", sc.max_aspect);
  sc.angle_min = j.value("angle_min", sc.angle_min);
  sc.angle_max = j.value("angle_max", sc.angle_max);
  sc.rotation_safe = j.value("rotation_safe", sc.rotation_safe);
  sc.margin = j.value("margin", sc.margin);
  return sc;
}

TrainOptions train_options_from_json(const nlohmann::json& j) {
  TrainOptions opt;
  opt.epochs = j.value("epochs", opt.epochs);
  opt.batch_size = j.value("batch_size", opt.batch_size);
  opt.lr = j.value("lr", opt.lr);
  opt.momentum = j.value("momentum", opt.momentum);
  opt.decay_factor = j.value("decay_factor", opt.decay_factor);
  if (j.contains("milestones")) opt.milestones = j["milestones"].get<std::vector<double>>();
  opt.seed = j.value("seed", opt.seed);
  opt.verbose = j.value("verbose", opt.verbose);
  return opt;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
}

int cmd_gen(std::uint64_t seed, int count, const std::string& out_dir, const std::string& config) {
  SceneConfig sc;
  if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw std::runtime_error("cannot open config: " + config);
    nlohmann::json j = nlohmann::json::parse(in);
    sc = scene_config_from_json(j.contains("scenes") ? j["scenes"] : j);
  }
  auto scenes = gen_scenes(seed, count, sc);
  save_dataset(out_dir, scenes);
  std::printf("wrote %d scenes (%dx%d) to %s\n", count, sc.height, sc.width, out_dir.c_str());
  return 0;
}

int cmd_verify(int group, int trials, const std::string& json_out) {
  EquivReport report = verify_equivariance(group, trials);
  for (const auto& c : report.checks) {
    std::printf("%-32s g=%d  err=%.3e  tol=%.1e%s  %s%s\n", c.layer.c_str(), c.g, c.max_error,
                c.tolerance, c.relative ? " (rel)" : "", c.pass ? "PASS" : "FAIL",
                c.expected_fail ? " [negative control]" : "");
  }
  std::printf("verify: %s in %.2fs\n", report.pass ? "PASS" : "FAIL", report.runtime_sec);
  if (!json_out.empty()) write_text(json_out, report.to_json() + "\n");
  return report.pass ? 0 : 1;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("cannot open config: " + config_path);
  nlohmann::json j = nlohmann::json::parse(in);

  DetectorConfig cfg =
      j.contains("model") ? config_from_json(j["model"].dump()) : DetectorConfig{};
  const bool baseline = j.contains("model") && j["model"].value("baseline", false);
  TrainOptions opt = train_options_from_json(j.value("train", nlohmann::json::object()));

  std::vector<SyntheticScene> scenes;
  if (j.contains("data_dir")) {
    scenes = load_dataset(j["data_dir"].get<std::string>());
  } else {
    nlohmann::json js = j.value("scenes", nlohmann::json::object());
    scenes = gen_scenes(js.value("seed", 1), js.value("count", 32), scene_config_from_json(js));
  }

  std::filesystem::create_directories(out_dir);
  std::vector<EpochLog> log;
  if (baseline) {
    BaselineModel model = make_baseline(cfg, opt.seed);
    log = train_baseline(model, scenes, opt);
    save_baseline(out_dir + "/model", model);
  } else {
    DetectorModel model = make_detector(cfg, opt.seed);
    log = train_detector(model, scenes, opt);
    save_detector(out_dir + "/model", model);
  }
  write_text(out_dir + "/loss.csv", train_log_csv(log));
  std::printf("trained %d epochs on %zu scenes; final loss %.4f; checkpoint %s/model.eqtn\n",
              opt.epochs, scenes.size(), log.back().loss, out_dir.c_str());
  return 0;
}

// Loads either model kind and wraps it in a ForwardFn.
struct LoadedModel {
  DetectorConfig cfg;
  ForwardFn forward;
  std::shared_ptr<DetectorModel> det;
  std::shared_ptr<BaselineModel> base;
};

LoadedModel load_any(const std::string& path) {
  LoadedModel lm;
  if (checkpoint_is_baseline(path)) {
    lm.base = std::make_shared<BaselineModel>(load_baseline(path));
    lm.cfg = lm.base->cfg;
    auto m = lm.base;
    lm.forward = [m](const Tensor& img) { return baseline_forward(*m, img); };
  } else {
    lm.det = std::make_shared<DetectorModel>(load_detector(path));
    lm.cfg = lm.det->cfg;
    auto m = lm.det;
    lm.forward = [m](const Tensor& img) { return detector_forward(*m, img); };
  }
  return lm;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, double rotate_deg,
             const std::string& json_out) {
  LoadedModel lm = load_any(ckpt);
  auto scenes = load_dataset(data_dir);
  EvalResult res = evaluate(lm.forward, lm.cfg, scenes, rotate_deg * 3.14159265358979323846 / 180.0);
  std::printf("mAP50 %.4f  mAP75 %.4f  (%d scenes, %d gt, rotation %.1f deg)\n", res.map50,
              res.map75, res.scenes, res.total_gt, rotate_deg);
  if (!json_out.empty()) write_text(json_out, res.to_json() + "\n");
  return 0;
}

int cmd_sweep(const std::string& ckpt, const std::string& baseline_ckpt, double step_deg,
              const std::string& csv_out, const std::string& data_dir) {
  LoadedModel lm = load_any(ckpt);
  std::vector<SyntheticScene> scenes;
  if (!data_dir.empty()) {
    scenes = load_dataset(data_dir);
  } else {
    SceneConfig sc;
    sc.height = 65;
    sc.width = 65;
    sc.rotation_safe = true;
    sc.max_size = 24.0;
    scenes = gen_scenes(4242, 16, sc);
  }

  std::vector<SweepPoint> rows;
  if (!baseline_ckpt.empty()) {
    LoadedModel bl = load_any(baseline_ckpt);
    rows = rotation_sweep(lm.forward, lm.cfg, &bl.forward, &bl.cfg, scenes, step_deg);
  } else {
    rows = rotation_sweep(lm.forward, lm.cfg, nullptr, nullptr, scenes, step_deg);
  }
  write_text(csv_out, sweep_csv(rows));
  std::printf("sweep: %zu angles -> %s\n", rows.size(), csv_out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"equikit: rotation-equivariant oriented detection toolkit"};
  app.require_subcommand(1);

  // gen
  std::uint64_t seed = 1;
  int count = 16;
  std::string out_dir, gen_config;
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--seed", seed, "base RNG seed");
  gen->add_option("--count", count, "number of scenes");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--config", gen_config, "scene config JSON (optional)");

  // verify
  int group = 4, trials = 25;
  std::string verify_json;
  auto* verify = app.add_subcommand("verify", "numeric equivariance certification");
  verify->add_option("--group", group, "cyclic group order (4 or 8)");
  verify->add_option("--trials", trials, "random trials per check");
  verify->add_option("--json", verify_json, "write the report JSON here");

  // train
  std::string train_config, train_out;
  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", train_config, "config JSON")->required();
  train->add_option("--out", train_out, "output directory")->required();

  // eval
  std::string eval_ckpt, eval_data, eval_json;
  double rotate_deg = 0.0;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint stem or .eqtn path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--rotate", rotate_deg, "test-time rotation in degrees");
  eval_cmd->add_option("--json", eval_json, "write metrics JSON here");

  // sweep
  std::string sweep_ckpt, sweep_baseline, sweep_csv_path, sweep_data;
  double step_deg = 5.0;
  auto* sweep = app.add_subcommand("sweep", "rotation-robustness sweep");
  sweep->add_option("--ckpt", sweep_ckpt, "model checkpoint")->required();
  sweep->add_option("--baseline-ckpt", sweep_baseline, "non-equivariant baseline checkpoint");
  sweep->add_option("--step", step_deg, "angle step in degrees");
  sweep->add_option("--csv", sweep_csv_path, "output CSV path")->required();
  sweep->add_option("--data", sweep_data, "dataset directory (default: built-in eval set)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(seed, count, out_dir, gen_config);
    if (*verify) return cmd_verify(group, trials, verify_json);
    if (*train) return cmd_train(train_config, train_out);
    if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, rotate_deg, eval_json);
    if (*sweep) return cmd_sweep(sweep_ckpt, sweep_baseline, step_deg, sweep_csv_path, sweep_data);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
