#pragma once

#include <filesystem>

#include "headpose/checkpoint.hpp"
#include "headpose/dataset.hpp"
#include "headpose/loss.hpp"
#include "headpose/model.hpp"

namespace headpose {

enum class LossMode { kCombined, kRegressionOnly };

const char* loss_mode_name(LossMode mode);
LossMode loss_mode_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double margin_k = 0.5;
  LossConfig loss;
  LossMode loss_mode = LossMode::kCombined;
  uint64_t seed = 0;
  int checkpoint_interval = 0;  // epochs between snapshots; 0 = final only

  void validate() const;
};

struct StepRecord {
  int64_t step = 0;
  int epoch = 0;
  double total = 0.0;
  std::array<double, 3> classification{};  // L_S per angle (yaw, pitch, roll)
  std::array<double, 3> regression{};      // L_MSE per angle
};

struct EpochRecord {
  int epoch = 0;
  double mean_total = 0.0;
  std::array<double, 3> mean_classification{};
  std::array<double, 3> mean_regression{};
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  TrainHistory history;
};

/// Classical momentum: v <- mu v - lr g, w <- w + v, over every trainable
/// parameter. Velocities live in float, matching the checkpoint format.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<ParamRef<float>> params, double learning_rate,
              double momentum);

  void step();

  std::vector<NamedArray> state_arrays() const;
  void load_state(const std::vector<NamedArray>& arrays);

 private:
  std::vector<ParamRef<float>> params_;
  std::vector<std::vector<float>> velocity_;
  float lr_;
  float momentum_;
};

/// Runs the training loop: shuffled batches at margin K, the per-angle
/// combined loss (or MSE alone) summed over yaw/pitch/roll, one momentum
/// update per batch. Deterministic given the config seed: data order,
/// initialisation and update order never depend on the environment.
/// Writes history.csv plus checkpoints into run_dir.
TrainResult train(Model& model, const Dataset& train_data,
                  const TrainConfig& config,
                  const std::filesystem::path& run_dir);

/// Continues a run from a checkpoint (model, optimizer state, epoch
/// counter). Epochs already covered by the checkpoint are skipped; the
/// shuffle order of each remaining epoch depends only on (seed, epoch), so
/// a split run reproduces a straight run bitwise. When expected_spec is
/// given, a checkpoint built for a different model is rejected.
TrainResult resume(const std::filesystem::path& checkpoint_path,
                   const Dataset& train_data, const TrainConfig& config,
                   const std::filesystem::path& run_dir,
                   const BackboneSpec* expected_spec = nullptr);

/// Shuffle seed of one epoch: a splitmix64 mix of (seed, epoch).
uint64_t epoch_shuffle_seed(uint64_t seed, int epoch);

void write_history_csv(const std::filesystem::path& path,
                       const TrainHistory& history);

}  // namespace headpose
