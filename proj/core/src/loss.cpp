#include "headpose/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace headpose {

void LossConfig::validate() const {
  if (!(temperature > 0.0)) {
    raise(Errc::invalid_parameter,
          "temperature must be > 0, got " + std::to_string(temperature));
  }
  if (!(alpha >= 0.0)) {
    raise(Errc::invalid_parameter,
          "alpha must be >= 0, got " + std::to_string(alpha));
  }
  if (n_bins != kNumAngleBins) {
    raise(Errc::invalid_parameter, "n_bins must equal the angle binning (" +
                                       std::to_string(kNumAngleBins) + ")");
  }
}

namespace {

void check_regression_batch(std::span<const double> predicted,
                            std::span<const double> target) {
  if (predicted.empty() || predicted.size() != target.size()) {
    raise(Errc::invalid_batch,
          "regression batch: need equal nonzero lengths, got " +
              std::to_string(predicted.size()) + " vs " +
              std::to_string(target.size()));
  }
}

void check_classification_batch(std::span<const double> logits,
                                std::span<const int> targets, double T,
                                int n_bins) {
  if (!(T > 0.0)) {
    raise(Errc::invalid_parameter,
          "temperature must be > 0, got " + std::to_string(T));
  }
  if (targets.empty() ||
      logits.size() != targets.size() * static_cast<size_t>(n_bins)) {
    raise(Errc::shape_mismatch,
          "classification batch: logits size " + std::to_string(logits.size()) +
              " does not match " + std::to_string(targets.size()) + " rows of " +
              std::to_string(n_bins));
  }
  for (int t : targets) {
    if (t < 0 || t >= n_bins) {
      raise(Errc::out_of_range, "target class " + std::to_string(t) +
                                    " outside {0.." + std::to_string(n_bins - 1) +
                                    "}");
    }
  }
}

// log(sum_j exp(row[j]/T)) and, optionally, softmax(row/T) into `probs`.
double row_log_sum_exp(const double* row, int n_bins, double T,
                       double* probs = nullptr) {
  double max_scaled = row[0] / T;
  for (int j = 1; j < n_bins; ++j) {
    max_scaled = std::max(max_scaled, row[j] / T);
  }
  double sum = 0.0;
  for (int j = 0; j < n_bins; ++j) {
    const double e = std::exp(row[j] / T - max_scaled);
    if (probs) probs[j] = e;
    sum += e;
  }
  if (probs) {
    for (int j = 0; j < n_bins; ++j) probs[j] /= sum;
  }
  return max_scaled + std::log(sum);
}

}  // namespace

double mse_loss(std::span<const double> predicted_angles,
                std::span<const double> target_angles) {
  check_regression_batch(predicted_angles, target_angles);
  double sum = 0.0;
  for (size_t i = 0; i < predicted_angles.size(); ++i) {
    const double diff = target_angles[i] - predicted_angles[i];
    sum += diff * diff;
  }
  return sum / static_cast<double>(predicted_angles.size());
}

std::vector<double> mse_loss_grad(std::span<const double> predicted_angles,
                                  std::span<const double> target_angles) {
  check_regression_batch(predicted_angles, target_angles);
  const double inv_n = 1.0 / static_cast<double>(predicted_angles.size());
  std::vector<double> grad(predicted_angles.size());
  for (size_t i = 0; i < predicted_angles.size(); ++i) {
    grad[i] = 2.0 * (predicted_angles[i] - target_angles[i]) * inv_n;
  }
  return grad;
}

double temperature_ce_loss(std::span<const double> class_logits,
                           std::span<const int> target_classes,
                           double temperature, int n_bins) {
  check_classification_batch(class_logits, target_classes, temperature, n_bins);
  const size_t n = target_classes.size();
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double* row = class_logits.data() + i * static_cast<size_t>(n_bins);
    const double lse = row_log_sum_exp(row, n_bins, temperature);
    sum += lse - row[target_classes[i]] / temperature;
  }
  return sum / static_cast<double>(n);
}

std::vector<double> temperature_ce_loss_grad(
    std::span<const double> class_logits, std::span<const int> target_classes,
    double temperature, int n_bins) {
  check_classification_batch(class_logits, target_classes, temperature, n_bins);
  const size_t n = target_classes.size();
  std::vector<double> grad(class_logits.size());
  std::vector<double> probs(static_cast<size_t>(n_bins));
  const double scale = 1.0 / (static_cast<double>(n) * temperature);
  for (size_t i = 0; i < n; ++i) {
    const double* row = class_logits.data() + i * static_cast<size_t>(n_bins);
    row_log_sum_exp(row, n_bins, temperature, probs.data());
    double* grow = grad.data() + i * static_cast<size_t>(n_bins);
    for (int j = 0; j < n_bins; ++j) {
      grow[j] = probs[static_cast<size_t>(j)] * scale;
    }
    grow[target_classes[i]] -= scale;
  }
  return grad;
}

LossValue combined_loss(const LossBatch& batch, const LossConfig& config) {
  config.validate();
  if (batch.predicted_angles.size() != batch.target_angles.size() ||
      batch.target_classes.size() != batch.target_angles.size()) {
    raise(Errc::invalid_batch, "combined_loss: collections disagree on n");
  }
  LossValue value;
  value.regression = mse_loss(batch.predicted_angles, batch.target_angles);
  value.classification = temperature_ce_loss(
      batch.class_logits, batch.target_classes, config.temperature,
      config.n_bins);
  value.total = value.classification + config.alpha * value.regression;
  return value;
}

LossGradients combined_loss_grad(const LossBatch& batch,
                                 const LossConfig& config) {
  config.validate();
  LossGradients grads;
  grads.d_predicted_angles =
      mse_loss_grad(batch.predicted_angles, batch.target_angles);
  for (double& g : grads.d_predicted_angles) g *= config.alpha;
  grads.d_class_logits =
      temperature_ce_loss_grad(batch.class_logits, batch.target_classes,
                               config.temperature, config.n_bins);
  return grads;
}

}  // namespace headpose
