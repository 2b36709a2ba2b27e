#include <doctest.h>

#include <cmath>
#include <numbers>

#include "headpose/loss.hpp"
#include "oracles.hpp"

using namespace headpose;

namespace {

LossBatch random_batch(oracle::Rng& rng, size_t n) {
  LossBatch batch;
  for (size_t i = 0; i < n; ++i) {
    batch.target_angles.push_back(rng.uniform(-60, 60));
    batch.predicted_angles.push_back(rng.uniform(-60, 60));
    batch.target_classes.push_back(angle_to_class(batch.target_angles[i]));
    for (int j = 0; j < kNumAngleBins; ++j) {
      batch.class_logits.push_back(rng.uniform(-3, 3));
    }
  }
  return batch;
}

}  // namespace

TEST_SUITE_BEGIN("loss");

TEST_CASE("mse_loss arithmetic") {
  CHECK(mse_loss(std::vector<double>{12, -24}, std::vector<double>{10, -20}) ==
        10.0);
  CHECK(mse_loss(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) ==
        0.0);
  CHECK(mse_loss(std::vector<double>{3}, std::vector<double>{0}) == 9.0);
}

TEST_CASE("mse_loss rejects bad batches") {
  CHECK_THROWS_AS(mse_loss(std::vector<double>{}, std::vector<double>{}), Error);
  CHECK_THROWS_AS(mse_loss(std::vector<double>{1}, std::vector<double>{1, 2}),
                  Error);
  try {
    mse_loss(std::vector<double>{1}, std::vector<double>{1, 2});
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_batch);
  }
}

TEST_CASE("mse_loss is nonnegative, zero iff equal") {
  oracle::Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y, yhat;
    bool all_equal = true;
    for (int i = 0; i < 6; ++i) {
      y.push_back(rng.uniform(-90, 90));
      const bool same = rng.uniform(0, 1) < 0.5;
      yhat.push_back(same ? y.back() : rng.uniform(-90, 90));
      all_equal = all_equal && yhat.back() == y.back();
    }
    const double loss = mse_loss(yhat, y);
    CHECK(loss >= 0.0);
    CHECK((loss == 0.0) == all_equal);
  }
}

TEST_CASE("uniform logits give ln(181) at any temperature") {
  const std::vector<double> logits(kNumAngleBins, 0.0);
  const std::vector<int> target{42};
  for (double t : {0.5, 1.0, 2.0, 7.0, 100.0}) {
    CHECK(temperature_ce_loss(logits, target, t) ==
          doctest::Approx(std::log(181.0)).epsilon(1e-12));
  }
}

TEST_CASE("temperature CE closed form on a one-hot-ish row") {
  // target logit 20, the rest 0, T = 2: loss = log(1 + 180 e^{-10}).
  std::vector<double> logits(kNumAngleBins, 0.0);
  logits[77] = 20.0;
  const std::vector<int> target{77};
  const double expected = std::log1p(180.0 * std::exp(-10.0));
  CHECK(temperature_ce_loss(logits, target, 2.0) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("temperature identity: CE(z, T) == CE(z / T, 1)") {
  oracle::Rng rng(17);
  for (double t : {0.5, 2.0, 3.7}) {
    std::vector<double> logits;
    std::vector<double> scaled;
    std::vector<int> targets;
    for (int i = 0; i < 5; ++i) {
      targets.push_back(rng.uniform_int(0, 180));
      for (int j = 0; j < kNumAngleBins; ++j) {
        logits.push_back(rng.uniform(-4, 4));
        scaled.push_back(logits.back() / t);
      }
    }
    CHECK(temperature_ce_loss(logits, targets, t) ==
          doctest::Approx(temperature_ce_loss(scaled, targets, 1.0))
              .epsilon(1e-12));
  }
}

TEST_CASE("CE is shift invariant per row") {
  oracle::Rng rng(29);
  std::vector<double> logits;
  std::vector<int> targets{13, 170};
  for (int i = 0; i < 2 * kNumAngleBins; ++i) logits.push_back(rng.uniform(-2, 2));
  const double base = temperature_ce_loss(logits, targets, 2.0);
  std::vector<double> shifted = logits;
  for (int j = 0; j < kNumAngleBins; ++j) {
    shifted[static_cast<size_t>(j)] += 7.25;
    shifted[static_cast<size_t>(kNumAngleBins + j)] -= 3.5;
  }
  CHECK(temperature_ce_loss(shifted, targets, 2.0) ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("CE is nonnegative and bounded by ln(181) when the target holds the max") {
  oracle::Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits;
    std::vector<int> targets;
    double row_max = -1e9;
    for (int j = 0; j < kNumAngleBins; ++j) {
      logits.push_back(rng.uniform(-5, 5));
      row_max = std::max(row_max, logits.back());
    }
    const int target = rng.uniform_int(0, 180);
    logits[static_cast<size_t>(target)] = row_max;  // weak maximum
    targets.push_back(target);
    const double loss = temperature_ce_loss(logits, targets, 2.0);
    CHECK(loss >= 0.0);
    CHECK(loss <= std::log(181.0) + 1e-12);
  }
}

TEST_CASE("CE input validation") {
  const std::vector<double> row(kNumAngleBins, 0.0);
  CHECK_THROWS_AS(temperature_ce_loss(row, std::vector<int>{0}, 0.0), Error);
  CHECK_THROWS_AS(temperature_ce_loss(row, std::vector<int>{0}, -1.0), Error);
  CHECK_THROWS_AS(temperature_ce_loss(row, std::vector<int>{181}, 2.0), Error);
  CHECK_THROWS_AS(
      temperature_ce_loss(std::vector<double>(180, 0.0), std::vector<int>{0}, 2.0),
      Error);
  try {
    temperature_ce_loss(std::vector<double>(180, 0.0), std::vector<int>{0}, 2.0);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::shape_mismatch);
  }
}

TEST_CASE("combined loss composes the two terms") {
  LossBatch batch;
  batch.predicted_angles = {15.0};
  batch.target_angles = {15.0};
  batch.target_classes = {angle_to_class(15.0)};
  batch.class_logits.assign(kNumAngleBins, 0.0);

  const LossConfig config;  // paper defaults: T = 2, alpha = 2
  CHECK(config.temperature == 2.0);
  CHECK(config.alpha == 2.0);

  LossValue v = combined_loss(batch, config);
  CHECK(v.regression == 0.0);
  CHECK(v.classification == doctest::Approx(std::log(181.0)).epsilon(1e-12));
  CHECK(v.total == doctest::Approx(std::log(181.0)).epsilon(1e-12));

  batch.predicted_angles = {17.0};  // 2 deg regression error
  v = combined_loss(batch, config);
  CHECK(v.regression == 4.0);
  CHECK(v.total == doctest::Approx(std::log(181.0) + 8.0).epsilon(1e-12));
}

TEST_CASE("combined loss recomposes exactly from its parts") {
  oracle::Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const LossBatch batch = random_batch(rng, 4);
    LossConfig config;
    config.alpha = rng.uniform(0, 5);
    const LossValue v = combined_loss(batch, config);
    CHECK(v.total ==
          doctest::Approx(v.classification + config.alpha * v.regression)
              .epsilon(1e-15));
  }
}

TEST_CASE("batch loss equals the mean of single-sample losses") {
  oracle::Rng rng(41);
  const size_t n = 6;
  const LossBatch batch = random_batch(rng, n);
  const LossConfig config;
  const LossValue whole = combined_loss(batch, config);
  double total = 0.0, ce = 0.0, mse = 0.0;
  for (size_t i = 0; i < n; ++i) {
    LossBatch one;
    one.predicted_angles = {batch.predicted_angles[i]};
    one.target_angles = {batch.target_angles[i]};
    one.target_classes = {batch.target_classes[i]};
    one.class_logits.assign(batch.class_logits.begin() + static_cast<long>(i) * kNumAngleBins,
                            batch.class_logits.begin() + static_cast<long>(i + 1) * kNumAngleBins);
    const LossValue v = combined_loss(one, config);
    total += v.total;
    ce += v.classification;
    mse += v.regression;
  }
  CHECK(whole.total == doctest::Approx(total / n).epsilon(1e-12));
  CHECK(whole.classification == doctest::Approx(ce / n).epsilon(1e-12));
  CHECK(whole.regression == doctest::Approx(mse / n).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  oracle::Rng rng(43);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    LossBatch batch = random_batch(rng, 1 + static_cast<size_t>(trial));
    const LossConfig config;

    // d combined / d predicted
    {
      const LossGradients grads = combined_loss_grad(batch, config);
      const auto f = [&] { return combined_loss(batch, config).total; };
      worst = std::max(worst, oracle::max_gradient_error(
                                  f, batch.predicted_angles,
                                  grads.d_predicted_angles));
    }
    // d combined / d logits
    {
      const LossGradients grads = combined_loss_grad(batch, config);
      const auto f = [&] { return combined_loss(batch, config).total; };
      worst = std::max(worst,
                       oracle::max_gradient_error(f, batch.class_logits,
                                                  grads.d_class_logits));
    }
    // mse alone
    {
      const auto grad = mse_loss_grad(batch.predicted_angles, batch.target_angles);
      const auto f = [&] {
        return mse_loss(batch.predicted_angles, batch.target_angles);
      };
      worst = std::max(worst, oracle::max_gradient_error(
                                  f, batch.predicted_angles, grad));
    }
    // temperature CE alone
    {
      const auto grad = temperature_ce_loss_grad(batch.class_logits,
                                                 batch.target_classes, 2.0);
      const auto f = [&] {
        return temperature_ce_loss(batch.class_logits, batch.target_classes, 2.0);
      };
      worst = std::max(
          worst, oracle::max_gradient_error(f, batch.class_logits, grad));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("LossConfig validation") {
  LossConfig config;
  config.temperature = 0.0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = {};
  config.alpha = -1.0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = {};
  config.n_bins = 180;
  CHECK_THROWS_AS(config.validate(), Error);
  config = {};
  CHECK_NOTHROW(config.validate());
}

TEST_SUITE_END();
