#include "headpose/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

namespace headpose {

using nlohmann::json;

std::vector<BucketStat> bucket_errors(std::span<const TruthPrediction> pairs,
                                      double bucket_width_deg) {
  if (!(bucket_width_deg > 0.0)) {
    raise(Errc::invalid_parameter, "bucket width must be > 0");
  }
  const int n_buckets = std::max(
      1, static_cast<int>(std::ceil(180.0 / bucket_width_deg)));
  std::vector<BucketStat> buckets(static_cast<size_t>(n_buckets));
  std::vector<double> sums(static_cast<size_t>(n_buckets), 0.0);
  for (int i = 0; i < n_buckets; ++i) {
    buckets[static_cast<size_t>(i)].center =
        -90.0 + (i + 0.5) * bucket_width_deg;
  }
  for (const TruthPrediction& p : pairs) {
    int idx = static_cast<int>(std::floor((p.truth + 90.0) / bucket_width_deg));
    idx = std::clamp(idx, 0, n_buckets - 1);  // +90 folds into the last bucket
    buckets[static_cast<size_t>(idx)].count += 1;
    sums[static_cast<size_t>(idx)] += std::abs(p.predicted - p.truth);
  }
  for (int i = 0; i < n_buckets; ++i) {
    if (buckets[static_cast<size_t>(i)].count > 0) {
      buckets[static_cast<size_t>(i)].mean_abs_error =
          sums[static_cast<size_t>(i)] /
          static_cast<double>(buckets[static_cast<size_t>(i)].count);
    }
  }
  return buckets;
}

std::vector<HistogramBin> error_histogram(std::span<const double> signed_errors,
                                          double bin_width_deg) {
  if (!(bin_width_deg > 0.0)) {
    raise(Errc::invalid_parameter, "bin width must be > 0");
  }
  std::map<long, size_t> counts;
  for (double e : signed_errors) {
    counts[std::lround(e / bin_width_deg)] += 1;
  }
  std::vector<HistogramBin> bins;
  bins.reserve(counts.size());
  for (const auto& [k, count] : counts) {
    bins.push_back(HistogramBin{static_cast<double>(k) * bin_width_deg, count});
  }
  return bins;
}

EvalReport evaluate(Model& model, const Dataset& dataset, double margin_k,
                    const EvalOptions& options) {
  auto [kept, dropped] = filter_evaluable(dataset, options.filter_range_deg);
  if (kept.empty()) {
    raise(Errc::empty_evaluation, "no evaluable samples after the +-" +
                                      std::to_string(options.filter_range_deg) +
                                      " deg filter");
  }

  BatchOptions batch_options;
  batch_options.margin_k = margin_k;
  batch_options.batch_size = options.batch_size;
  batch_options.shuffle = false;
  batch_options.out_side = kInputSide;
  batch_options.channel_mean = model.spec().channel_mean;
  batch_options.channel_std = model.spec().channel_std;
  BatchStream stream(kept, batch_options);

  std::array<std::vector<TruthPrediction>, 3> pairs;
  std::array<std::vector<double>, 3> signed_errors;
  for (int a = 0; a < 3; ++a) {
    pairs[static_cast<size_t>(a)].reserve(kept.size());
    signed_errors[static_cast<size_t>(a)].reserve(kept.size());
  }

  while (auto batch = stream.next()) {
    PredictionBatchT<float> pred = model.forward(batch->images, false);
    for (int i = 0; i < pred.size(); ++i) {
      const HeadPose decoded = decode_prediction(pred.at(i));
      const std::array<double, 3> predicted{decoded.yaw, decoded.pitch,
                                            decoded.roll};
      for (int a = 0; a < 3; ++a) {
        const double truth =
            batch->target_angles[static_cast<size_t>(i)][static_cast<size_t>(a)];
        pairs[static_cast<size_t>(a)].push_back(
            TruthPrediction{truth, predicted[static_cast<size_t>(a)]});
        signed_errors[static_cast<size_t>(a)].push_back(
            predicted[static_cast<size_t>(a)] - truth);
      }
    }
  }

  EvalReport report;
  report.sample_count = kept.size();
  report.dropped_count = dropped;
  report.margin_k = margin_k;
  report.bucket_width_deg = options.bucket_width_deg;
  report.histogram_bin_width_deg = options.histogram_bin_width_deg;
  double mae_sum = 0.0;
  for (int a = 0; a < 3; ++a) {
    double abs_sum = 0.0;
    for (const TruthPrediction& p : pairs[static_cast<size_t>(a)]) {
      abs_sum += std::abs(p.predicted - p.truth);
    }
    report.per_angle_mae[static_cast<size_t>(a)] =
        abs_sum / static_cast<double>(kept.size());
    mae_sum += report.per_angle_mae[static_cast<size_t>(a)];
    report.buckets[static_cast<size_t>(a)] =
        bucket_errors(pairs[static_cast<size_t>(a)], options.bucket_width_deg);
    report.histograms[static_cast<size_t>(a)] = error_histogram(
        signed_errors[static_cast<size_t>(a)], options.histogram_bin_width_deg);
  }
  report.mae = mae_sum / 3.0;
  return report;
}

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint_path,
                               const Dataset& dataset, double margin_k,
                               const EvalOptions& options) {
  Model model = model_from_checkpoint(read_checkpoint(checkpoint_path));
  return evaluate(model, dataset, margin_k, options);
}

// --- report I/O ---------------------------------------------------------------

namespace {

json report_to_json(const EvalReport& r) {
  json buckets = json::object();
  json histograms = json::object();
  for (int a = 0; a < 3; ++a) {
    json bucket_rows = json::array();
    for (const BucketStat& b : r.buckets[static_cast<size_t>(a)]) {
      bucket_rows.push_back({{"center", b.center},
                             {"count", b.count},
                             {"mean_abs_error", b.count ? b.mean_abs_error : 0.0},
                             {"empty", b.count == 0}});
    }
    buckets[kAngleNames[static_cast<size_t>(a)]] = std::move(bucket_rows);
    json hist_rows = json::array();
    for (const HistogramBin& b : r.histograms[static_cast<size_t>(a)]) {
      hist_rows.push_back({{"center", b.center}, {"count", b.count}});
    }
    histograms[kAngleNames[static_cast<size_t>(a)]] = std::move(hist_rows);
  }
  return json{{"yaw_mae", r.per_angle_mae[0]},
              {"pitch_mae", r.per_angle_mae[1]},
              {"roll_mae", r.per_angle_mae[2]},
              {"mae", r.mae},
              {"sample_count", r.sample_count},
              {"dropped_count", r.dropped_count},
              {"margin_k", r.margin_k},
              {"bucket_width_deg", r.bucket_width_deg},
              {"histogram_bin_width_deg", r.histogram_bin_width_deg},
              {"buckets", buckets},
              {"histograms", histograms}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.per_angle_mae = {j.at("yaw_mae").get<double>(),
                     j.at("pitch_mae").get<double>(),
                     j.at("roll_mae").get<double>()};
  r.mae = j.at("mae").get<double>();
  r.sample_count = j.at("sample_count").get<size_t>();
  r.dropped_count = j.at("dropped_count").get<size_t>();
  r.margin_k = j.at("margin_k").get<double>();
  r.bucket_width_deg = j.at("bucket_width_deg").get<double>();
  r.histogram_bin_width_deg = j.at("histogram_bin_width_deg").get<double>();
  for (int a = 0; a < 3; ++a) {
    for (const auto& row : j.at("buckets").at(kAngleNames[static_cast<size_t>(a)])) {
      BucketStat b;
      b.center = row.at("center").get<double>();
      b.count = row.at("count").get<size_t>();
      b.mean_abs_error = row.at("mean_abs_error").get<double>();
      r.buckets[static_cast<size_t>(a)].push_back(b);
    }
    for (const auto& row :
         j.at("histograms").at(kAngleNames[static_cast<size_t>(a)])) {
      r.histograms[static_cast<size_t>(a)].push_back(
          HistogramBin{row.at("center").get<double>(),
                       row.at("count").get<size_t>()});
    }
  }
  return r;
}

}  // namespace

void write_report_json(const std::filesystem::path& path,
                       const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    raise(Errc::io_failure, path.string() + ": cannot open for writing");
  }
  out << report_to_json(report).dump(2) << "\n";
}

EvalReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::io_failure, path.string() + ": cannot open");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(Errc::parse_failure, path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

std::string format_report_text(const EvalReport& r) {
  char line[256];
  std::string text;
  std::snprintf(line, sizeof line, "%-8s %10s\n", "angle", "MAE(deg)");
  text += line;
  for (int a = 0; a < 3; ++a) {
    std::snprintf(line, sizeof line, "%-8s %10.3f\n",
                  kAngleNames[static_cast<size_t>(a)],
                  r.per_angle_mae[static_cast<size_t>(a)]);
    text += line;
  }
  std::snprintf(line, sizeof line, "%-8s %10.3f\n", "MAE", r.mae);
  text += line;
  std::snprintf(line, sizeof line,
                "samples %zu  dropped %zu  K %.3f  bucket %.1f deg  bin %.1f deg\n",
                r.sample_count, r.dropped_count, r.margin_k, r.bucket_width_deg,
                r.histogram_bin_width_deg);
  text += line;
  return text;
}

void write_bucket_csv(const std::filesystem::path& path,
                      const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    raise(Errc::io_failure, path.string() + ": cannot open for writing");
  }
  out << "angle,bucket_center,count,mean_abs_error\n";
  char line[128];
  for (int a = 0; a < 3; ++a) {
    for (const BucketStat& b : report.buckets[static_cast<size_t>(a)]) {
      std::snprintf(line, sizeof line, "%s,%.9g,%zu,%.9g\n",
                    kAngleNames[static_cast<size_t>(a)], b.center, b.count,
                    b.count ? b.mean_abs_error : 0.0);
      out << line;
    }
  }
}

void write_histogram_csv(const std::filesystem::path& path,
                         const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    raise(Errc::io_failure, path.string() + ": cannot open for writing");
  }
  out << "angle,bin_center,count\n";
  char line[128];
  for (int a = 0; a < 3; ++a) {
    for (const HistogramBin& b : report.histograms[static_cast<size_t>(a)]) {
      std::snprintf(line, sizeof line, "%s,%.9g,%zu\n",
                    kAngleNames[static_cast<size_t>(a)], b.center, b.count);
      out << line;
    }
  }
}

// --- sweeps -------------------------------------------------------------------

namespace {

SweepRow run_cycle(const ExperimentConfig& config, const Dataset& train_data,
                   const Dataset& eval_data, double k, LossMode mode,
                   const std::filesystem::path& run_dir) {
  TrainConfig train_config = config.train;
  train_config.margin_k = k;
  train_config.loss_mode = mode;
  Model model = build_model<float>(config.backbone, train_config.seed);
  train(model, train_data, train_config, run_dir);
  EvalReport report = evaluate(model, eval_data, k, config.eval);
  write_report_json(run_dir / "report.json", report);
  return SweepRow{k, mode, std::move(report)};
}

std::string k_dir_name(double k, LossMode mode) {
  char name[64];
  std::snprintf(name, sizeof name, "k%.3f%s", k,
                mode == LossMode::kRegressionOnly ? "_regression" : "");
  return name;
}

size_t best_row(const std::vector<SweepRow>& rows) {
  size_t best = 0;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].report.mae < rows[best].report.mae) best = i;
  }
  return best;
}

std::vector<double> sorted_ks(std::span<const double> k_values) {
  if (k_values.empty()) {
    raise(Errc::invalid_parameter, "sweep needs at least one K");
  }
  std::vector<double> ks(k_values.begin(), k_values.end());
  for (double k : ks) {
    if (!(k >= 0.0)) raise(Errc::invalid_parameter, "K must be >= 0");
  }
  std::sort(ks.begin(), ks.end());
  return ks;
}

}  // namespace

SweepResult sweep_k(const ExperimentConfig& config, const Dataset& train_data,
                    const Dataset& eval_data, std::span<const double> k_values,
                    const std::filesystem::path& out_dir) {
  SweepResult result;
  for (double k : sorted_ks(k_values)) {
    result.rows.push_back(
        run_cycle(config, train_data, eval_data, k, config.train.loss_mode,
                  out_dir / k_dir_name(k, config.train.loss_mode)));
  }
  result.best_index = best_row(result.rows);
  return result;
}

SweepResult ablate_loss(const ExperimentConfig& config,
                        const Dataset& train_data, const Dataset& eval_data,
                        std::span<const double> k_values,
                        const std::filesystem::path& out_dir) {
  SweepResult result;
  for (double k : sorted_ks(k_values)) {
    for (LossMode mode : {LossMode::kCombined, LossMode::kRegressionOnly}) {
      result.rows.push_back(run_cycle(config, train_data, eval_data, k, mode,
                                      out_dir / k_dir_name(k, mode)));
    }
  }
  result.best_index = best_row(result.rows);
  return result;
}

std::string format_sweep_text(const SweepResult& result) {
  std::string text;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-16s %8s %8s %8s %8s %s\n", "K",
                "loss", "yaw", "pitch", "roll", "MAE", "best");
  text += line;
  for (size_t i = 0; i < result.rows.size(); ++i) {
    const SweepRow& row = result.rows[i];
    std::snprintf(line, sizeof line, "%-8.3f %-16s %8.3f %8.3f %8.3f %8.3f %s\n",
                  row.margin_k, loss_mode_name(row.loss_mode),
                  row.report.per_angle_mae[0], row.report.per_angle_mae[1],
                  row.report.per_angle_mae[2], row.report.mae,
                  i == result.best_index ? "*" : "");
    text += line;
  }
  return text;
}

void write_sweep_csv(const std::filesystem::path& path,
                     const SweepResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    raise(Errc::io_failure, path.string() + ": cannot open for writing");
  }
  out << "k,loss_mode,yaw_mae,pitch_mae,roll_mae,mae,best\n";
  char line[256];
  for (size_t i = 0; i < result.rows.size(); ++i) {
    const SweepRow& row = result.rows[i];
    std::snprintf(line, sizeof line, "%.9g,%s,%.9g,%.9g,%.9g,%.9g,%d\n",
                  row.margin_k, loss_mode_name(row.loss_mode),
                  row.report.per_angle_mae[0], row.report.per_angle_mae[1],
                  row.report.per_angle_mae[2], row.report.mae,
                  i == result.best_index ? 1 : 0);
    out << line;
  }
}

}  // namespace headpose
