#include <doctest.h>

#include <chrono>
#include <cmath>
#include <thread>

#include "headpose/checkpoint.hpp"
#include "headpose/loss.hpp"
#include "headpose/model.hpp"
#include "oracles.hpp"

using namespace headpose;

namespace {

template <typename S>
TensorT<S> random_images(oracle::Rng& rng, int n) {
  TensorT<S> images({n, 3, kInputSide, kInputSide});
  for (auto& v : images.data) v = static_cast<S>(rng.uniform(0, 1));
  return images;
}

// Training objective used by the finite-difference checks: combined loss
// summed over the three angles against fixed targets.
template <typename S>
double objective(ModelT<S>& model, const TensorT<S>& images,
                 const std::array<std::vector<double>, 3>& targets,
                 const std::array<std::vector<int>, 3>& classes, bool training,
                 TensorT<S>* d_angles = nullptr, TensorT<S>* d_logits = nullptr) {
  PredictionBatchT<S> pred = model.forward(images, training);
  const int n = pred.size();
  double total = 0.0;
  if (d_angles) *d_angles = TensorT<S>({n, 3});
  if (d_logits) *d_logits = TensorT<S>({n, 3, kNumAngleBins});
  const LossConfig config;
  for (int a = 0; a < 3; ++a) {
    LossBatch batch;
    for (int i = 0; i < n; ++i) {
      batch.predicted_angles.push_back(
          static_cast<double>(pred.angles.data[static_cast<size_t>(i) * 3 + a]));
      batch.target_angles.push_back(targets[static_cast<size_t>(a)][static_cast<size_t>(i)]);
      batch.target_classes.push_back(classes[static_cast<size_t>(a)][static_cast<size_t>(i)]);
      const S* row = pred.logits.data.data() +
                     (static_cast<size_t>(i) * 3 + a) * kNumAngleBins;
      for (int j = 0; j < kNumAngleBins; ++j) {
        batch.class_logits.push_back(static_cast<double>(row[j]));
      }
    }
    total += combined_loss(batch, config).total;
    if (d_angles && d_logits) {
      const LossGradients grads = combined_loss_grad(batch, config);
      for (int i = 0; i < n; ++i) {
        d_angles->data[static_cast<size_t>(i) * 3 + a] =
            static_cast<S>(grads.d_predicted_angles[static_cast<size_t>(i)]);
        for (int j = 0; j < kNumAngleBins; ++j) {
          d_logits->data[(static_cast<size_t>(i) * 3 + a) * kNumAngleBins + j] =
              static_cast<S>(
                  grads.d_class_logits[static_cast<size_t>(i) * kNumAngleBins + j]);
        }
      }
    }
  }
  return total;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("seeded build is bitwise reproducible") {
  Model a = build_model<float>(BackboneSpec::toy(16), 7);
  Model b = build_model<float>(BackboneSpec::toy(16), 7);
  Model c = build_model<float>(BackboneSpec::toy(16), 8);
  auto pa = a.parameters();
  auto pb = b.parameters();
  auto pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true;
  bool differs_from_c = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    all_equal = all_equal && *pa[i].value == *pb[i].value;
    differs_from_c = differs_from_c || *pa[i].value != *pc[i].value;
  }
  CHECK(all_equal);
  CHECK(differs_from_c);
}

TEST_CASE("head parameter counts follow the layer arithmetic") {
  auto head_count = [](Model& model, const std::string& angle) {
    int64_t count = 0;
    for (const auto& p : model.parameters()) {
      if (p.name.rfind("head." + angle, 0) == 0) {
        count += static_cast<int64_t>(p.value->size());
      }
    }
    return count;
  };
  Model toy = build_model<float>(BackboneSpec::toy(32), 1);
  // (F * 1 + 1) + (F * 181 + 181)
  CHECK(head_count(toy, "yaw") == (32 + 1) + (32 * 181 + 181));
  CHECK(head_count(toy, "pitch") == (32 + 1) + (32 * 181 + 181));
  CHECK(head_count(toy, "roll") == (32 + 1) + (32 * 181 + 181));
}

TEST_CASE("forward emits three continuous angles and 3x181 logits") {
  Model model = build_model<float>(BackboneSpec::toy(16), 3);
  oracle::Rng rng(61);
  const Tensor images = random_images<float>(rng, 2);
  const PredictionBatchT<float> pred = model.forward(images, false);
  CHECK(pred.size() == 2);
  CHECK(pred.angles.shape == std::vector<int>{2, 3});
  CHECK(pred.logits.shape == std::vector<int>{2, 3, kNumAngleBins});

  const PosePrediction one = pred.at(1);
  CHECK(one.logits[0].size() == 181);

  // Deterministic in inference mode.
  const PredictionBatchT<float> again = model.forward(images, false);
  CHECK(pred.angles.data == again.angles.data);
  CHECK(pred.logits.data == again.logits.data);
}

TEST_CASE("forward rejects wrong input shapes") {
  Model model = build_model<float>(BackboneSpec::toy(8), 3);
  CHECK_THROWS_AS(model.forward(Tensor({1, 3, 100, 100}), false), Error);
  CHECK_THROWS_AS(model.forward(Tensor({0, 3, kInputSide, kInputSide}), false),
                  Error);
  CHECK_THROWS_AS(model.forward(Tensor({1, 1, kInputSide, kInputSide}), false),
                  Error);
}

TEST_CASE("zeroed heads emit zero outputs and uniform probabilities") {
  Model model = build_model<float>(BackboneSpec::toy(8), 5);
  for (auto& p : model.parameters()) {
    if (p.name.rfind("head.", 0) == 0) {
      std::fill(p.value->begin(), p.value->end(), 0.0f);
    }
  }
  oracle::Rng rng(67);
  const Tensor images = random_images<float>(rng, 1);
  const PredictionBatchT<float> pred = model.forward(images, false);
  const PosePrediction one = pred.at(0);
  for (int a = 0; a < 3; ++a) {
    CHECK(one.continuous_deg[static_cast<size_t>(a)] == 0.0);
    for (double logit : one.logits[static_cast<size_t>(a)]) CHECK(logit == 0.0);
    const auto probs = class_probabilities(one.logits[static_cast<size_t>(a)]);
    for (double p : probs) CHECK(p == doctest::Approx(1.0 / 181).epsilon(1e-12));
  }
}

TEST_CASE("decode_prediction clamps and ignores logits") {
  PosePrediction pred;
  pred.continuous_deg = {12.3, -40.0, 5.5};
  pred.logits[0][3] = 1e6;  // arbitrary, must not matter
  HeadPose pose = decode_prediction(pred);
  CHECK(pose.yaw == 12.3);
  CHECK(pose.pitch == -40.0);
  CHECK(pose.roll == 5.5);

  pred.continuous_deg = {95.2, -123.0, 0.0};
  pose = decode_prediction(pred);
  CHECK(pose.yaw == 90.0);
  CHECK(pose.pitch == -90.0);
  CHECK(pose.roll == 0.0);
}

TEST_CASE("yaw-only loss has exactly zero gradient in the other heads") {
  Model model = build_model<float>(BackboneSpec::toy(8), 5);
  oracle::Rng rng(71);
  const Tensor images = random_images<float>(rng, 2);
  model.forward(images, true);

  Tensor d_angles({2, 3});
  Tensor d_logits({2, 3, kNumAngleBins});
  for (int i = 0; i < 2; ++i) {
    d_angles.data[static_cast<size_t>(i) * 3] = 1.0f;  // yaw slot only
    for (int j = 0; j < kNumAngleBins; ++j) {
      d_logits.data[static_cast<size_t>(i) * 3 * kNumAngleBins + j] = 0.01f;
    }
  }
  model.zero_grad();
  model.backward(d_angles, d_logits);

  bool yaw_nonzero = false;
  bool backbone_nonzero = false;
  for (const auto& p : model.parameters()) {
    if (!p.grad) continue;
    double norm = 0.0;
    for (float g : *p.grad) norm += std::abs(static_cast<double>(g));
    if (p.name.rfind("head.yaw", 0) == 0 && norm > 0) yaw_nonzero = true;
    if (p.name.rfind("backbone.", 0) == 0 && norm > 0) backbone_nonzero = true;
    if (p.name.rfind("head.pitch", 0) == 0 || p.name.rfind("head.roll", 0) == 0) {
      CHECK(norm == 0.0);
    }
  }
  CHECK(yaw_nonzero);
  CHECK(backbone_nonzero);
}

TEST_CASE("end-to-end gradient matches finite differences (double path)") {
  ModelT<double> model = build_model<double>(BackboneSpec::toy(8), 9);
  oracle::Rng rng(73);
  const TensorT<double> images = random_images<double>(rng, 2);
  std::array<std::vector<double>, 3> targets;
  std::array<std::vector<int>, 3> classes;
  // Small targets keep the total loss (and with it the finite-difference
  // roundoff floor) low enough to resolve the smallest head gradients.
  for (int a = 0; a < 3; ++a) {
    for (int i = 0; i < 2; ++i) {
      targets[static_cast<size_t>(a)].push_back(rng.uniform(-3, 3));
      classes[static_cast<size_t>(a)].push_back(
          angle_to_class(targets[static_cast<size_t>(a)].back()));
    }
  }

  TensorT<double> d_angles, d_logits;
  model.zero_grad();
  objective(model, images, targets, classes, true, &d_angles, &d_logits);
  model.backward(d_angles, d_logits);

  auto params = model.parameters();
  // Train-mode forward: batch-norm gradients are defined against the batch
  // statistics, so the probed function must use them too.
  const auto f = [&] {
    return objective(model, images, targets, classes, true);
  };
  double worst = 0.0;
  size_t checked = 0;
  for (auto& p : params) {
    if (!p.grad) continue;
    const size_t n = p.value->size();
    size_t done = 0;
    for (size_t pick = 0; pick < 10 && done < 3; ++pick) {
      const size_t idx = (pick * 7919 + 13) % n;
      // Kink guard: ReLU/maxpool make the loss piecewise smooth, so a
      // coordinate whose finite differences disagree across step sizes
      // straddles a non-differentiable point and is resampled.
      const double fd_a = oracle::central_difference(f, (*p.value)[idx], 1e-4);
      const double fd_b = oracle::central_difference(f, (*p.value)[idx], 5e-5);
      if (oracle::relative_error(fd_a, fd_b, 1e-6) > 1e-5) continue;
      worst = std::max(worst, oracle::relative_error((*p.grad)[idx], fd_a, 1e-6));
      ++checked;
      ++done;
    }
  }
  CHECK(checked > 30);
  CHECK(worst < 1e-4);
}

TEST_CASE("pretrained backbone weights overlay onto a fresh model") {
  const auto dir = std::filesystem::temp_directory_path() / "headpose_model_test";
  std::filesystem::create_directories(dir);
  const auto archive = dir / "backbone.ckpt";

  Model donor = build_model<float>(BackboneSpec::toy(8), 21);
  write_checkpoint(archive, snapshot_model(donor, 0));

  BackboneSpec spec = BackboneSpec::toy(8);
  spec.pretrained_weights = archive.string();
  Model loaded = build_model<float>(spec, 22);

  auto donor_params = donor.parameters();
  auto loaded_params = loaded.parameters();
  bool heads_differ = false;
  for (size_t i = 0; i < donor_params.size(); ++i) {
    if (donor_params[i].name.rfind("backbone.", 0) == 0) {
      CHECK(*donor_params[i].value == *loaded_params[i].value);
    } else if (*donor_params[i].value != *loaded_params[i].value) {
      heads_differ = true;
    }
  }
  CHECK(heads_differ);

  // Missing file is a load error.
  spec.pretrained_weights = (dir / "missing.ckpt").string();
  CHECK_THROWS_AS(build_model<float>(spec, 1), Error);
  try {
    build_model<float>(spec, 1);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::load_failure);
  }
}

TEST_CASE("frozen-model inference is safe from multiple threads") {
  Model model = build_model<float>(BackboneSpec::toy(8), 13);
  oracle::Rng rng(83);
  const Tensor images_a = random_images<float>(rng, 2);
  const Tensor images_b = random_images<float>(rng, 2);
  const PredictionBatchT<float> serial_a = model.forward(images_a, false);
  const PredictionBatchT<float> serial_b = model.forward(images_b, false);

  PredictionBatchT<float> threaded_a, threaded_b;
  std::thread worker_a([&] { threaded_a = model.forward(images_a, false); });
  std::thread worker_b([&] { threaded_b = model.forward(images_b, false); });
  worker_a.join();
  worker_b.join();
  CHECK(threaded_a.angles.data == serial_a.angles.data);
  CHECK(threaded_a.logits.data == serial_a.logits.data);
  CHECK(threaded_b.angles.data == serial_b.angles.data);
  CHECK(threaded_b.logits.data == serial_b.logits.data);
}

TEST_CASE("checkpoint load reproduces forward outputs bitwise") {
  const auto dir = std::filesystem::temp_directory_path() / "headpose_model_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "bitwise.ckpt";

  Model model = build_model<float>(BackboneSpec::toy(8), 31);
  oracle::Rng rng(79);
  const Tensor images = random_images<float>(rng, 2);
  const PredictionBatchT<float> before = model.forward(images, false);

  write_checkpoint(path, snapshot_model(model, 3));
  const Checkpoint ckpt = read_checkpoint(path);
  CHECK(ckpt.epoch == 3);
  CHECK(ckpt.seed == 31);
  Model restored = model_from_checkpoint(ckpt);
  const PredictionBatchT<float> after = restored.forward(images, false);
  CHECK(before.angles.data == after.angles.data);
  CHECK(before.logits.data == after.logits.data);
}

TEST_CASE("toy forward+backward on a batch of 8 stays under a second") {
  Model model = build_model<float>(BackboneSpec::toy(32), 1);
  oracle::Rng rng(97);
  const Tensor images = random_images<float>(rng, 8);
  Tensor d_angles({8, 3});
  Tensor d_logits({8, 3, kNumAngleBins});
  d_angles.fill(0.01f);
  d_logits.fill(0.001f);

  const auto start = std::chrono::steady_clock::now();
  model.forward(images, true);
  model.zero_grad();
  model.backward(d_angles, d_logits);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  CHECK(elapsed < 1.0);
}

TEST_CASE("reference backbone: 2048-wide feature, plausible structure") {
  BackboneSpec spec = BackboneSpec::reference();
  CHECK(spec.feature_dim == 2048);
  spec.feature_dim = 512;
  CHECK_THROWS_AS(spec.validate(), Error);

  Model model = build_model<float>(BackboneSpec::reference(), 2);
  // Heads: (2048 * 1 + 1) + (2048 * 181 + 181) per angle.
  int64_t yaw_head = 0;
  int64_t backbone = 0;
  int stage4_blocks = 0;
  for (const auto& p : model.parameters()) {
    if (p.name.rfind("head.yaw", 0) == 0) {
      yaw_head += static_cast<int64_t>(p.value->size());
    }
    if (p.trainable && p.name.rfind("backbone.", 0) == 0) {
      backbone += static_cast<int64_t>(p.value->size());
    }
    if (p.name == "backbone.layer4.2.conv3.weight") {
      CHECK(p.shape == std::vector<int>{2048, 512, 1, 1});
      ++stage4_blocks;
    }
  }
  CHECK(yaw_head == (2048 + 1) + (2048 * 181 + 181));
  CHECK(stage4_blocks == 1);
  // 50-layer bottleneck backbone: on the order of 23.5M weights.
  CHECK(backbone > 23'000'000);
  CHECK(backbone < 24'500'000);

  // one full-resolution forward: the residual graph composes end to end
  oracle::Rng rng(89);
  const Tensor images = random_images<float>(rng, 1);
  const PredictionBatchT<float> pred = model.forward(images, false);
  CHECK(pred.angles.shape == std::vector<int>{1, 3});
  CHECK(pred.logits.shape == std::vector<int>{1, 3, kNumAngleBins});
  for (float v : pred.angles.data) CHECK(std::isfinite(v));
  for (float v : pred.logits.data) CHECK(std::isfinite(v));
}

TEST_SUITE_END();
