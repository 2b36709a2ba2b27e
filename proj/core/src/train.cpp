#include "headpose/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace headpose {

const char* loss_mode_name(LossMode mode) {
  return mode == LossMode::kCombined ? "combined" : "regression-only";
}

LossMode loss_mode_from_name(const std::string& name) {
  if (name == "combined") return LossMode::kCombined;
  if (name == "regression-only") return LossMode::kRegressionOnly;
  raise(Errc::invalid_config, "unknown loss mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) raise(Errc::invalid_config, "epochs must be >= 0");
  if (batch_size < 1) raise(Errc::invalid_config, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) {
    raise(Errc::invalid_config, "learning_rate must be > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    raise(Errc::invalid_config, "momentum must lie in [0, 1)");
  }
  if (!(margin_k >= 0.0)) raise(Errc::invalid_config, "K must be >= 0");
  if (checkpoint_interval < 0) {
    raise(Errc::invalid_config, "checkpoint_interval must be >= 0");
  }
  loss.validate();
}

uint64_t epoch_shuffle_seed(uint64_t seed, int epoch) {
  // splitmix64 of the (seed, epoch) pair.
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<uint64_t>(epoch) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SgdMomentum::SgdMomentum(std::vector<ParamRef<float>> params,
                         double learning_rate, double momentum)
    : params_(std::move(params)), lr_(static_cast<float>(learning_rate)),
      momentum_(static_cast<float>(momentum)) {
  std::erase_if(params_, [](const ParamRef<float>& p) { return !p.trainable; });
  velocity_.reserve(params_.size());
  for (const auto& p : params_) {
    velocity_.emplace_back(p.value->size(), 0.0f);
  }
}

void SgdMomentum::step() {
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    std::vector<float>& w = *params_[pi].value;
    const std::vector<float>& g = *params_[pi].grad;
    std::vector<float>& v = velocity_[pi];
    for (size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] - lr_ * g[i];
      w[i] += v[i];
    }
  }
}

std::vector<NamedArray> SgdMomentum::state_arrays() const {
  std::vector<NamedArray> arrays;
  arrays.reserve(params_.size());
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    arrays.push_back(NamedArray{"optimizer.velocity." + params_[pi].name,
                                params_[pi].shape, velocity_[pi]});
  }
  return arrays;
}

void SgdMomentum::load_state(const std::vector<NamedArray>& arrays) {
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    const std::string name = "optimizer.velocity." + params_[pi].name;
    bool found = false;
    for (const NamedArray& array : arrays) {
      if (array.name != name) continue;
      if (array.values.size() != velocity_[pi].size()) {
        raise(Errc::incompatible_checkpoint,
              "optimizer state '" + name + "' has mismatched size");
      }
      velocity_[pi] = array.values;
      found = true;
      break;
    }
    if (!found) {
      raise(Errc::incompatible_checkpoint,
            "checkpoint is missing optimizer state '" + name + "'");
    }
  }
}

namespace {

struct AngleLossTerms {
  std::array<double, 3> classification{};
  std::array<double, 3> regression{};
  double total = 0.0;
};

// One training step: loss + gradients of the summed per-angle objective.
AngleLossTerms apply_loss(const Batch& batch, const PredictionBatchT<float>& pred,
                          const TrainConfig& config, Tensor& d_angles,
                          Tensor& d_logits) {
  const size_t n = batch.target_angles.size();
  AngleLossTerms terms;
  std::vector<double> predicted(n), targets(n);
  std::vector<double> logits(n * kNumAngleBins);
  std::vector<int> classes(n);
  for (int a = 0; a < 3; ++a) {
    for (size_t i = 0; i < n; ++i) {
      predicted[i] = static_cast<double>(pred.angles.data[i * 3 + static_cast<size_t>(a)]);
      targets[i] = batch.target_angles[i][static_cast<size_t>(a)];
      classes[i] = batch.target_classes[i][static_cast<size_t>(a)];
      const float* row =
          pred.logits.data.data() + (i * 3 + static_cast<size_t>(a)) * kNumAngleBins;
      for (int j = 0; j < kNumAngleBins; ++j) {
        logits[i * kNumAngleBins + static_cast<size_t>(j)] =
            static_cast<double>(row[j]);
      }
    }

    std::vector<double> d_pred;
    std::vector<double> d_row;
    const double mse = mse_loss(predicted, targets);
    terms.regression[static_cast<size_t>(a)] = mse;
    if (config.loss_mode == LossMode::kCombined) {
      const double ce = temperature_ce_loss(logits, classes,
                                            config.loss.temperature,
                                            config.loss.n_bins);
      terms.classification[static_cast<size_t>(a)] = ce;
      terms.total += ce + config.loss.alpha * mse;
      d_pred = mse_loss_grad(predicted, targets);
      for (double& g : d_pred) g *= config.loss.alpha;
      d_row = temperature_ce_loss_grad(logits, classes, config.loss.temperature,
                                       config.loss.n_bins);
    } else {
      terms.total += mse;
      d_pred = mse_loss_grad(predicted, targets);
      d_row.assign(logits.size(), 0.0);
    }

    for (size_t i = 0; i < n; ++i) {
      d_angles.data[i * 3 + static_cast<size_t>(a)] =
          static_cast<float>(d_pred[i]);
      float* dst =
          d_logits.data.data() + (i * 3 + static_cast<size_t>(a)) * kNumAngleBins;
      for (int j = 0; j < kNumAngleBins; ++j) {
        dst[j] = static_cast<float>(d_row[i * kNumAngleBins + static_cast<size_t>(j)]);
      }
    }
  }
  return terms;
}

TrainResult run_loop(Model& model, SgdMomentum& optimizer,
                     const Dataset& train_data, const TrainConfig& config,
                     const std::filesystem::path& run_dir, int start_epoch) {
  if (train_data.empty()) {
    raise(Errc::invalid_input, "training dataset is empty");
  }
  std::filesystem::create_directories(run_dir);

  BatchOptions batch_options;
  batch_options.margin_k = config.margin_k;
  batch_options.batch_size = config.batch_size;
  batch_options.out_side = kInputSide;
  batch_options.channel_mean = model.spec().channel_mean;
  batch_options.channel_std = model.spec().channel_std;
  BatchStream stream(train_data, batch_options);

  TrainHistory history;
  int64_t step = static_cast<int64_t>(start_epoch) * static_cast<int64_t>(stream.batch_count());

  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    stream.reset(epoch_shuffle_seed(config.seed, epoch));
    double epoch_total = 0.0;
    std::array<double, 3> epoch_ce{};
    std::array<double, 3> epoch_mse{};
    size_t batches = 0;
    while (auto batch = stream.next()) {
      const int b = batch->images.dim(0);
      PredictionBatchT<float> pred = model.forward(batch->images, true);
      Tensor d_angles({b, 3});
      Tensor d_logits({b, 3, kNumAngleBins});
      const AngleLossTerms terms =
          apply_loss(*batch, pred, config, d_angles, d_logits);
      if (!std::isfinite(terms.total)) {
        raise(Errc::diverged_training,
              "non-finite loss at step " + std::to_string(step) + " (epoch " +
                  std::to_string(epoch) + ")");
      }
      model.zero_grad();
      model.backward(d_angles, d_logits);
      optimizer.step();

      history.steps.push_back(StepRecord{step, epoch, terms.total,
                                         terms.classification,
                                         terms.regression});
      epoch_total += terms.total;
      for (int a = 0; a < 3; ++a) {
        epoch_ce[static_cast<size_t>(a)] += terms.classification[static_cast<size_t>(a)];
        epoch_mse[static_cast<size_t>(a)] += terms.regression[static_cast<size_t>(a)];
      }
      ++batches;
      ++step;
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      epoch_start)
            .count();
    EpochRecord record;
    record.epoch = epoch;
    if (batches) {
      record.mean_total = epoch_total / static_cast<double>(batches);
      for (int a = 0; a < 3; ++a) {
        record.mean_classification[static_cast<size_t>(a)] =
            epoch_ce[static_cast<size_t>(a)] / static_cast<double>(batches);
        record.mean_regression[static_cast<size_t>(a)] =
            epoch_mse[static_cast<size_t>(a)] / static_cast<double>(batches);
      }
    }
    record.wall_seconds = wall;
    history.epochs.push_back(record);

    const bool interval_hit = config.checkpoint_interval > 0 &&
                              (epoch + 1) % config.checkpoint_interval == 0;
    if (interval_hit && epoch + 1 < config.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch + 1);
      write_checkpoint(run_dir / name,
                       snapshot_model(model, epoch + 1, optimizer.state_arrays()));
    }
  }

  const std::filesystem::path final_path = run_dir / "final.ckpt";
  write_checkpoint(final_path,
                   snapshot_model(model, config.epochs, optimizer.state_arrays()));
  write_history_csv(run_dir / "history.csv", history);
  return TrainResult{final_path, std::move(history)};
}

}  // namespace

TrainResult train(Model& model, const Dataset& train_data,
                  const TrainConfig& config,
                  const std::filesystem::path& run_dir) {
  config.validate();
  SgdMomentum optimizer(model.parameters(), config.learning_rate,
                        config.momentum);
  return run_loop(model, optimizer, train_data, config, run_dir, 0);
}

TrainResult resume(const std::filesystem::path& checkpoint_path,
                   const Dataset& train_data, const TrainConfig& config,
                   const std::filesystem::path& run_dir,
                   const BackboneSpec* expected_spec) {
  config.validate();
  const Checkpoint ckpt = read_checkpoint(checkpoint_path);
  if (expected_spec && !expected_spec->compatible_with(ckpt.spec)) {
    raise(Errc::incompatible_checkpoint,
          "checkpoint backbone (" +
              std::string(backbone_kind_name(ckpt.spec.kind)) + ", feature_dim " +
              std::to_string(ckpt.spec.feature_dim) +
              ") does not match the configured model (" +
              backbone_kind_name(expected_spec->kind) + ", feature_dim " +
              std::to_string(expected_spec->feature_dim) + ")");
  }
  if (ckpt.epoch > config.epochs) {
    raise(Errc::incompatible_checkpoint,
          "checkpoint is at epoch " + std::to_string(ckpt.epoch) +
              ", beyond the configured " + std::to_string(config.epochs));
  }
  Model model = model_from_checkpoint(ckpt);
  SgdMomentum optimizer(model.parameters(), config.learning_rate,
                        config.momentum);
  optimizer.load_state(ckpt.arrays);
  return run_loop(model, optimizer, train_data, config, run_dir, ckpt.epoch);
}

void write_history_csv(const std::filesystem::path& path,
                       const TrainHistory& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    raise(Errc::io_failure, path.string() + ": cannot open for writing");
  }
  out << "step,epoch,total,ls_yaw,ls_pitch,ls_roll,"
         "lmse_yaw,lmse_pitch,lmse_roll\n";
  char line[256];
  for (const StepRecord& s : history.steps) {
    std::snprintf(line, sizeof line,
                  "%lld,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(s.step), s.epoch, s.total,
                  s.classification[0], s.classification[1], s.classification[2],
                  s.regression[0], s.regression[1], s.regression[2]);
    out << line;
  }
}

}  // namespace headpose
