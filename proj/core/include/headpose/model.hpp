#pragma once

#include <array>
#include <memory>
#include <string>

#include "headpose/geometry.hpp"
#include "headpose/layers.hpp"

namespace headpose {

/// Network input side in pixels; crops are resized to this before the
/// backbone.
inline constexpr int kInputSide = 224;

/// Angle slot order used everywhere a 3-vector of angles appears.
inline constexpr std::array<const char*, 3> kAngleNames{"yaw", "pitch", "roll"};

enum class BackboneKind { kToyConv, kReference50 };

const char* backbone_kind_name(BackboneKind kind);
BackboneKind backbone_kind_from_name(const std::string& name);

/// Description of the feature extractor under the three heads. channel_mean
/// and channel_std normalise the [0, 1] RGB input; the toy backbone uses the
/// identity, the 50-layer residual backbone defaults to the statistics its
/// published pretraining used.
struct BackboneSpec {
  BackboneKind kind = BackboneKind::kToyConv;
  int feature_dim = 32;
  std::string pretrained_weights;  // optional; empty = random initialisation
  std::array<double, 3> channel_mean{0.0, 0.0, 0.0};
  std::array<double, 3> channel_std{1.0, 1.0, 1.0};

  static BackboneSpec toy(int feature_dim = 32);
  static BackboneSpec reference(std::string weights_path = {});

  void validate() const;
  bool compatible_with(const BackboneSpec& other) const;
};

/// One sample's raw network output: a continuous angle plus 181 class
/// logits per angle slot (yaw, pitch, roll). Logits are pre-softmax.
struct PosePrediction {
  std::array<double, 3> continuous_deg{0.0, 0.0, 0.0};
  std::array<std::array<double, kNumAngleBins>, 3> logits{};
};

/// Softmax of one logit row at the given temperature.
std::array<double, kNumAngleBins> class_probabilities(
    const std::array<double, kNumAngleBins>& logits, double temperature = 1.0);

/// Inference decoding: the continuous outputs, clamped to [-90, +90]. The
/// classification heads are a training-time auxiliary and are ignored here.
HeadPose decode_prediction(const PosePrediction& prediction);

template <typename S>
struct PredictionBatchT {
  TensorT<S> angles;  // [N, 3]
  TensorT<S> logits;  // [N, 3, 181]

  int size() const { return angles.shape.empty() ? 0 : angles.dim(0); }

  PosePrediction at(int i) const {
    PosePrediction p;
    for (int a = 0; a < 3; ++a) {
      p.continuous_deg[static_cast<size_t>(a)] =
          static_cast<double>(angles.data[static_cast<size_t>(i) * 3 + a]);
      const S* row = logits.data.data() +
                     (static_cast<size_t>(i) * 3 + a) * kNumAngleBins;
      for (int j = 0; j < kNumAngleBins; ++j) {
        p.logits[static_cast<size_t>(a)][static_cast<size_t>(j)] =
            static_cast<double>(row[j]);
      }
    }
    return p;
  }
};

/// Backbone + three structurally independent heads. Each head maps the
/// shared feature vector to one continuous angle (feature_dim x 1) and 181
/// class logits (feature_dim x 181).
template <typename S>
class ModelT {
 public:
  ModelT(BackboneSpec spec, uint64_t seed);

  /// images: [N, 3, 224, 224]. Caches intermediates when training is true.
  PredictionBatchT<S> forward(const TensorT<S>& images, bool training = false);

  /// d_angles: [N, 3], d_logits: [N, 3, 181]. Accumulates parameter grads.
  void backward(const TensorT<S>& d_angles, const TensorT<S>& d_logits);

  std::vector<ParamRef<S>> parameters();
  void zero_grad();
  int64_t parameter_count();

  const BackboneSpec& spec() const { return spec_; }
  uint64_t seed() const { return seed_; }

 private:
  BackboneSpec spec_;
  uint64_t seed_;
  SequentialT<S> backbone_;
  struct Head {
    std::unique_ptr<LinearT<S>> regression;
    std::unique_ptr<LinearT<S>> classification;
  };
  std::array<Head, 3> heads_;
  TensorT<S> cached_features_;
};

using Model = ModelT<float>;

/// Builds a model with deterministic, seed-driven initialisation. When the
/// spec names a pretrained weight file, the backbone parameters are loaded
/// from it (Errc::load_failure if the file is missing or does not match).
template <typename S>
ModelT<S> build_model(const BackboneSpec& spec, uint64_t seed);

extern template class ModelT<float>;
extern template class ModelT<double>;
extern template ModelT<float> build_model<float>(const BackboneSpec&, uint64_t);
extern template ModelT<double> build_model<double>(const BackboneSpec&, uint64_t);

}  // namespace headpose
