#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "guidedepth/data.hpp"
#include "guidedepth/eval.hpp"
#include "guidedepth/losses.hpp"
#include "guidedepth/model_config.hpp"
#include "guidedepth/training.hpp"

namespace guidedepth {

/// Settings of one `gd` invocation: a `key = value` config file with
/// `--key value` overrides applied on top. Every key is validated up front
/// and unknown keys are rejected.
struct RunConfig {
  // model
  std::string model = "guidedepth-tiny";
  std::string guidance_type = "image";
  std::string guidance_branch = "gub";
  std::string laplacian_mode = "bandpass";
  int height = 48;  // `resolution = HxW`, the network input size
  int width = 64;

  // paths
  std::filesystem::path dataset;
  std::filesystem::path run_dir = "runs/default";
  std::filesystem::path checkpoint;  // defaults to <run_dir>/checkpoint
  std::filesystem::path input;       // predict: sample directory or GDT1 image
  std::filesystem::path output;      // predict: defaults to <run_dir>/prediction.gdt
  std::filesystem::path preview;     // predict: optional PGM preview

  std::uint64_t seed = 0;

  // training
  int epochs = 20;
  int drop_epoch = 15;
  double drop_factor = 10.0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  std::int64_t max_steps = 0;
  bool augment = true;
  int checkpoint_every = 0;

  // loss
  double lambda_l1 = 0.1;
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  std::string grad_norm = "l1";
  double dynamic_range = 0.0;  // 0 = largest normalised target in the dataset

  // evaluation
  std::string crop = "none";
  bool flip_average = true;
  std::string flip_axis = "horizontal";

  // bench / ablate
  int bench_runs = 200;
  int bench_warmup = 20;
  int ablate_steps = 1;

  // generate
  int count = 16;
  int scene_height = 0;  // 0 = same as the network resolution
  int scene_width = 0;
  int primitives = 6;
  double d_min = 2.0;
  double d_max = 10.0;

  /// Applies one key; throws std::invalid_argument for unknown keys or
  /// malformed values.
  void set(const std::string& key, const std::string& value);
  /// Cross-field checks; throws std::invalid_argument.
  void validate() const;

  /// Canonical `key = value` listing of every setting.
  std::vector<std::pair<std::string, std::string>> entries() const;

  ModelConfig model_config() const;
  LossConfig loss_config() const;
  TrainOptions train_options() const;
  EvalOptions eval_options() const;
  SyntheticSceneSpec scene_spec() const;
  std::filesystem::path checkpoint_path() const;
};

/// Reads `config_file` (if non-empty), then applies overrides in order, then
/// validates.
RunConfig load_run_config(const std::filesystem::path& config_file,
                          const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace guidedepth
