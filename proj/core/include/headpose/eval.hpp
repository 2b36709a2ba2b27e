#pragma once

#include <filesystem>
#include <span>

#include "headpose/dataset.hpp"
#include "headpose/model.hpp"
#include "headpose/train.hpp"

namespace headpose {

struct BucketStat {
  double center = 0.0;  // truth-angle bucket center, degrees
  size_t count = 0;
  double mean_abs_error = 0.0;  // undefined when count == 0 (flagged empty)
};

struct HistogramBin {
  double center = 0.0;  // signed error, degrees
  size_t count = 0;
};

struct EvalReport {
  std::array<double, 3> per_angle_mae{};  // yaw, pitch, roll
  double mae = 0.0;                       // mean of the three
  size_t sample_count = 0;
  size_t dropped_count = 0;
  double margin_k = 0.0;
  double bucket_width_deg = 10.0;
  std::array<std::vector<BucketStat>, 3> buckets;
  double histogram_bin_width_deg = 1.0;
  std::array<std::vector<HistogramBin>, 3> histograms;
};

struct TruthPrediction {
  double truth = 0.0;
  double predicted = 0.0;
};

/// Mean absolute error per truth-angle bucket of the given width over
/// [-90, +90]; the top edge folds into the last bucket. Empty buckets stay
/// at count 0 and are never zero-filled into means.
std::vector<BucketStat> bucket_errors(std::span<const TruthPrediction> pairs,
                                      double bucket_width_deg);

/// Histogram of signed errors (predicted - truth); bin k is centered at
/// k * bin_width with half-away-from-zero assignment, so mirrored errors
/// land in mirrored bins. Total count equals the sample count.
std::vector<HistogramBin> error_histogram(std::span<const double> signed_errors,
                                          double bin_width_deg);

struct EvalOptions {
  double bucket_width_deg = 10.0;
  double histogram_bin_width_deg = 1.0;
  int batch_size = 32;
  double filter_range_deg = 90.0;
};

/// Filters the dataset to evaluable poses, runs the frozen model on crops
/// at margin K and reports per-angle MAE plus bucket curves and error
/// histograms.
EvalReport evaluate(Model& model, const Dataset& dataset, double margin_k,
                    const EvalOptions& options = {});

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint_path,
                               const Dataset& dataset, double margin_k,
                               const EvalOptions& options = {});

// --- report I/O ---------------------------------------------------------------

void write_report_json(const std::filesystem::path& path,
                       const EvalReport& report);
EvalReport read_report_json(const std::filesystem::path& path);

std::string format_report_text(const EvalReport& report);

/// Bucket curves as CSV: angle,bucket_center,count,mean_abs_error.
void write_bucket_csv(const std::filesystem::path& path,
                      const EvalReport& report);

/// Error histograms as CSV: angle,bin_center,count.
void write_histogram_csv(const std::filesystem::path& path,
                         const EvalReport& report);

// --- sweeps -------------------------------------------------------------------

/// Everything one train+evaluate cycle needs.
struct ExperimentConfig {
  BackboneSpec backbone;
  TrainConfig train;
  EvalOptions eval;
};

struct SweepRow {
  double margin_k = 0.0;
  LossMode loss_mode = LossMode::kCombined;
  EvalReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  size_t best_index = 0;  // lowest overall MAE
};

/// One fresh train+evaluate cycle per K, identical seed across cycles. Rows
/// come back ordered by K; best_index flags the lowest MAE.
SweepResult sweep_k(const ExperimentConfig& config, const Dataset& train_data,
                    const Dataset& eval_data, std::span<const double> k_values,
                    const std::filesystem::path& out_dir);

/// Like sweep_k but runs each K twice, combined loss vs regression alone,
/// with the same seed; rows are paired per K.
SweepResult ablate_loss(const ExperimentConfig& config,
                        const Dataset& train_data, const Dataset& eval_data,
                        std::span<const double> k_values,
                        const std::filesystem::path& out_dir);

std::string format_sweep_text(const SweepResult& result);
void write_sweep_csv(const std::filesystem::path& path,
                     const SweepResult& result);

}  // namespace headpose
