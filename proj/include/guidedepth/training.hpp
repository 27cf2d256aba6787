#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "guidedepth/blocks.hpp"
#include "guidedepth/data.hpp"
#include "guidedepth/losses.hpp"

namespace guidedepth {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Moment buffers are matched to parameters by position.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;

  static AdamState create(const std::vector<Tensor<T>*>& params, const AdamConfig& config);
};

/// One bias-corrected Adam update using the current config.lr:
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// Throws std::logic_error if any parameter has no gradient.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, AdamState<T>& state);

struct Schedule {
  double base_lr = 1e-4;
  int total_epochs = 20;
  int drop_epoch = 15;
  double drop_factor = 10.0;

  void validate() const;
};

/// base_lr for epochs [0, drop_epoch), base_lr / drop_factor afterwards.
double lr_at(const Schedule& schedule, int epoch);

struct LossRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double dssim = 0;
  double grad = 0;
  double l1 = 0;
};

std::string loss_csv_header();  // step,epoch,lr,loss,dssim,grad,l1
std::string loss_csv_row(const LossRecord& r);
void write_loss_history(const std::filesystem::path& path, const std::vector<LossRecord>& history);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  ModelConfig model = ModelConfig::guidedepth_tiny();
  LossConfig loss;
  /// When true, the SSIM dynamic range (and C1, C2) is set to the largest
  /// normalised target value in the dataset, i.e. max(d_max / depth).
  bool auto_dynamic_range = true;
  Schedule schedule;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  std::uint64_t seed = 0;
  bool augment = true;
  /// Stop after this many optimizer steps (0 = run the full schedule).
  std::int64_t max_steps = 0;
  /// Write a checkpoint every k completed epochs under checkpoint_dir (0 = never).
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  /// Input resolution fed to the network; samples are resized if they differ.
  int input_height = 0;  // 0 = use the sample resolution
  int input_width = 0;
  std::function<void(const LossRecord&)> on_step;

  void validate() const;
};

struct TrainResult {
  Model<float> model;
  std::vector<LossRecord> history;
  LossConfig loss;  // with the resolved dynamic range
};

/// Epoch order is a permutation drawn from (seed, epoch); the last batch of
/// an epoch may be smaller. Each step: augment -> inverse depth norm ->
/// forward (train mode) -> combined loss -> backward -> Adam.
TrainResult train(const TrainOptions& options, const std::vector<DepthSample>& dataset);
/// Continues from an existing model (its config overrides options.model).
TrainResult train(const TrainOptions& options, const std::vector<DepthSample>& dataset,
                  Model<float> initial);

/// Largest normalised target value over a dataset.
double max_normalized_target(const std::vector<DepthSample>& dataset);

/// Deterministic permutation of [0, n) for (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace guidedepth
