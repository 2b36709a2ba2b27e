#pragma once

#include <span>
#include <vector>

#include "headpose/geometry.hpp"

namespace headpose {

/// Knobs of the combined training objective. T flattens the classification
/// softmax; alpha weighs the regression term. Both default to the values
/// used for every reported result (T = 2, alpha = 2).
struct LossConfig {
  double temperature = 2.0;
  double alpha = 2.0;
  int n_bins = kNumAngleBins;

  void validate() const;
};

/// One angle's worth of batch data. class_logits is n x n_bins, row-major;
/// target_classes[i] is the bin index of target_angles[i].
struct LossBatch {
  std::vector<double> predicted_angles;
  std::vector<double> target_angles;
  std::vector<double> class_logits;
  std::vector<int> target_classes;

  size_t size() const { return target_angles.size(); }
};

struct LossValue {
  double total = 0.0;
  double classification = 0.0;  // L_S
  double regression = 0.0;      // L_MSE
};

struct LossGradients {
  std::vector<double> d_predicted_angles;  // dL/d yhat_i
  std::vector<double> d_class_logits;      // dL/d z_ij, n x n_bins row-major
};

/// L_MSE = (1/n) sum_i (y_i - yhat_i)^2
double mse_loss(std::span<const double> predicted_angles,
                std::span<const double> target_angles);

/// dL_MSE/d yhat_i = 2 (yhat_i - y_i) / n
std::vector<double> mse_loss_grad(std::span<const double> predicted_angles,
                                  std::span<const double> target_angles);

/// L_S = -(1/n) sum_i log softmax(z_i / T)[t_i], computed with
/// max-subtraction. Rows of `class_logits` have width n_bins.
double temperature_ce_loss(std::span<const double> class_logits,
                           std::span<const int> target_classes,
                           double temperature, int n_bins = kNumAngleBins);

/// dL_S/d z_ij = (softmax(z_i / T)_j - [j == t_i]) / (n T)
std::vector<double> temperature_ce_loss_grad(
    std::span<const double> class_logits, std::span<const int> target_classes,
    double temperature, int n_bins = kNumAngleBins);

/// L = L_S + alpha * L_MSE, all three terms reported.
LossValue combined_loss(const LossBatch& batch, const LossConfig& config = {});

LossGradients combined_loss_grad(const LossBatch& batch,
                                 const LossConfig& config = {});

}  // namespace headpose
