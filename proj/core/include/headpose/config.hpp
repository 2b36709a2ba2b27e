#pragma once

#include <filesystem>
#include <string>

#include "headpose/dataset.hpp"
#include "headpose/eval.hpp"
#include "headpose/model.hpp"
#include "headpose/train.hpp"

namespace headpose {

/// Flat run configuration mirroring the training, loss, model and dataset
/// knobs. Loaded from a JSON object of exactly these keys; command-line
/// overrides ("key=value") must name an existing key and win over file
/// values.
struct RunConfig {
  // dataset
  std::string adapter = "synthetic";
  std::string train_data;
  std::string eval_data;  // defaults to train_data when empty
  std::string box_source = "precomputed-file";
  double filter_range = 90.0;
  // model
  std::string backbone = "toy-conv";
  int feature_dim = 32;
  std::string pretrained_weights;
  // training
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double k = 0.5;
  std::string loss_mode = "combined";
  double temperature = 2.0;
  double alpha = 2.0;
  int n_bins = kNumAngleBins;
  uint64_t seed = 0;
  int checkpoint_interval = 0;
  // evaluation
  double bucket_width = 10.0;
  double histogram_bin_width = 1.0;
  // sweeps (comma-separated margin list; the --k flag overrides it)
  std::string sweep_ks;

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_json_text(const std::string& text);

  /// Applies "key=value"; unknown keys or unparseable values are rejected
  /// with Errc::invalid_config.
  void apply_override(const std::string& assignment);

  void save(const std::filesystem::path& path) const;
  std::string to_json_text() const;

  BackboneSpec backbone_spec() const;
  TrainConfig train_config() const;
  EvalOptions eval_options() const;
  DatasetManifest train_manifest() const;
  DatasetManifest eval_manifest() const;
  ExperimentConfig experiment_config() const;
};

}  // namespace headpose
