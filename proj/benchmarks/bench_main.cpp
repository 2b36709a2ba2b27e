#include <benchmark/benchmark.h>

#include "headpose/eval.hpp"
#include "headpose/loss.hpp"
#include "headpose/model.hpp"
#include "headpose/train.hpp"

using namespace headpose;

namespace {

Tensor random_batch_images(int n, uint32_t seed) {
  std::mt19937 gen(seed);
  Tensor images({n, 3, kInputSide, kInputSide});
  for (auto& v : images.data) {
    v = static_cast<float>(gen()) / 4294967296.0f;
  }
  return images;
}

void BM_CropPadResize(benchmark::State& state) {
  const Image img = render_synthetic_image(HeadPose{20, -10, 30}, 480);
  const CropRegion region = expand_margin(BoundingBox{96, 96, 288}, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(crop_pad_resize(img, region, kInputSide));
  }
}
BENCHMARK(BM_CropPadResize)->Unit(benchmark::kMillisecond);

void BM_SyntheticRender(benchmark::State& state) {
  const HeadPose pose{12, -35, 48};
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_synthetic_image(pose, 224));
  }
}
BENCHMARK(BM_SyntheticRender)->Unit(benchmark::kMillisecond);

void BM_ToyForward(benchmark::State& state) {
  Model model = build_model<float>(BackboneSpec::toy(32), 1);
  const Tensor images = random_batch_images(static_cast<int>(state.range(0)), 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(images, false));
  }
}
BENCHMARK(BM_ToyForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ToyForwardBackward(benchmark::State& state) {
  Model model = build_model<float>(BackboneSpec::toy(32), 1);
  const int n = static_cast<int>(state.range(0));
  const Tensor images = random_batch_images(n, 7);
  Tensor d_angles({n, 3});
  Tensor d_logits({n, 3, kNumAngleBins});
  d_angles.fill(0.01f);
  d_logits.fill(0.001f);
  for (auto _ : state) {
    model.forward(images, true);
    model.zero_grad();
    model.backward(d_angles, d_logits);
  }
}
BENCHMARK(BM_ToyForwardBackward)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_CombinedLoss(benchmark::State& state) {
  std::mt19937 gen(3);
  LossBatch batch;
  const size_t n = 64;
  for (size_t i = 0; i < n; ++i) {
    const double angle = static_cast<double>(gen()) / 4294967296.0 * 120 - 60;
    batch.target_angles.push_back(angle);
    batch.predicted_angles.push_back(angle + 5.0);
    batch.target_classes.push_back(angle_to_class(angle));
    for (int j = 0; j < kNumAngleBins; ++j) {
      batch.class_logits.push_back(static_cast<double>(gen()) / 4294967296.0);
    }
  }
  const LossConfig config;
  for (auto _ : state) {
    benchmark::DoNotOptimize(combined_loss(batch, config));
    benchmark::DoNotOptimize(combined_loss_grad(batch, config));
  }
}
BENCHMARK(BM_CombinedLoss)->Unit(benchmark::kMicrosecond);

void BM_EulerRoundtrip(benchmark::State& state) {
  const HeadPose pose{31.0, -22.5, 7.25};
  for (auto _ : state) {
    benchmark::DoNotOptimize(rotmat_to_euler(euler_to_rotmat(pose)));
  }
}
BENCHMARK(BM_EulerRoundtrip);

}  // namespace

BENCHMARK_MAIN();
