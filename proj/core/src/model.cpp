#include "headpose/model.hpp"

#include <cmath>

#include "headpose/checkpoint.hpp"

namespace headpose {

const char* backbone_kind_name(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::kToyConv: return "toy-conv";
    case BackboneKind::kReference50: return "reference-50-layer-residual";
  }
  return "unknown";
}

BackboneKind backbone_kind_from_name(const std::string& name) {
  if (name == "toy-conv") return BackboneKind::kToyConv;
  if (name == "reference-50-layer-residual") return BackboneKind::kReference50;
  raise(Errc::invalid_config, "unknown backbone kind '" + name + "'");
}

BackboneSpec BackboneSpec::toy(int feature_dim) {
  BackboneSpec spec;
  spec.kind = BackboneKind::kToyConv;
  spec.feature_dim = feature_dim;
  return spec;
}

BackboneSpec BackboneSpec::reference(std::string weights_path) {
  BackboneSpec spec;
  spec.kind = BackboneKind::kReference50;
  spec.feature_dim = 2048;
  spec.pretrained_weights = std::move(weights_path);
  spec.channel_mean = {0.485, 0.456, 0.406};
  spec.channel_std = {0.229, 0.224, 0.225};
  return spec;
}

void BackboneSpec::validate() const {
  if (feature_dim <= 0) {
    raise(Errc::invalid_config, "feature_dim must be positive");
  }
  if (kind == BackboneKind::kReference50 && feature_dim != 2048) {
    raise(Errc::invalid_config,
          "the 50-layer residual backbone emits a 2048-wide feature; got "
          "feature_dim " + std::to_string(feature_dim));
  }
  for (double s : channel_std) {
    if (!(s > 0.0)) raise(Errc::invalid_config, "channel_std must be positive");
  }
}

bool BackboneSpec::compatible_with(const BackboneSpec& other) const {
  return kind == other.kind && feature_dim == other.feature_dim &&
         channel_mean == other.channel_mean && channel_std == other.channel_std;
}

std::array<double, kNumAngleBins> class_probabilities(
    const std::array<double, kNumAngleBins>& logits, double temperature) {
  if (!(temperature > 0.0)) {
    raise(Errc::invalid_parameter, "temperature must be > 0");
  }
  std::array<double, kNumAngleBins> probs{};
  double max_scaled = logits[0] / temperature;
  for (int j = 1; j < kNumAngleBins; ++j) {
    max_scaled = std::max(max_scaled, logits[static_cast<size_t>(j)] / temperature);
  }
  double sum = 0.0;
  for (int j = 0; j < kNumAngleBins; ++j) {
    probs[static_cast<size_t>(j)] =
        std::exp(logits[static_cast<size_t>(j)] / temperature - max_scaled);
    sum += probs[static_cast<size_t>(j)];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

HeadPose decode_prediction(const PosePrediction& prediction) {
  auto clamp = [](double v) { return std::clamp(v, -90.0, 90.0); };
  return HeadPose{clamp(prediction.continuous_deg[0]),
                  clamp(prediction.continuous_deg[1]),
                  clamp(prediction.continuous_deg[2])};
}

namespace {

template <typename S>
void build_toy_backbone(SequentialT<S>& seq, int feature_dim) {
  seq.add("stem_pool", std::make_unique<AvgPool2dT<S>>(4));        // 224 -> 56
  seq.add("conv1", std::make_unique<Conv2dT<S>>(3, 16, 5, 2, 2));  // 56 -> 28
  seq.add("bn1", std::make_unique<BatchNorm2dT<S>>(16));
  seq.add("relu1", std::make_unique<ReLUT<S>>());
  seq.add("pool1", std::make_unique<MaxPool2dT<S>>(2, 2));         // 28 -> 14
  seq.add("conv2", std::make_unique<Conv2dT<S>>(16, 32, 3, 1, 1));
  seq.add("bn2", std::make_unique<BatchNorm2dT<S>>(32));
  seq.add("relu2", std::make_unique<ReLUT<S>>());
  seq.add("pool2", std::make_unique<MaxPool2dT<S>>(2, 2));         // 14 -> 7
  seq.add("conv3", std::make_unique<Conv2dT<S>>(32, feature_dim, 3, 1, 1));
  seq.add("bn3", std::make_unique<BatchNorm2dT<S>>(feature_dim));
  seq.add("relu3", std::make_unique<ReLUT<S>>());
  seq.add("gap", std::make_unique<GlobalAvgPoolT<S>>());
}

template <typename S>
void build_reference_backbone(SequentialT<S>& seq) {
  seq.add("stem.conv", std::make_unique<Conv2dT<S>>(3, 64, 7, 2, 3));
  seq.add("stem.bn", std::make_unique<BatchNorm2dT<S>>(64));
  seq.add("stem.relu", std::make_unique<ReLUT<S>>());
  seq.add("stem.pool", std::make_unique<MaxPool2dT<S>>(3, 2, 1));
  const int blocks[4] = {3, 4, 6, 3};
  int in_ch = 64;
  for (int stage = 0; stage < 4; ++stage) {
    const int mid = 64 << stage;
    const int out = mid * 4;
    for (int b = 0; b < blocks[stage]; ++b) {
      const int stride = (b == 0 && stage > 0) ? 2 : 1;
      seq.add("layer" + std::to_string(stage + 1) + "." + std::to_string(b),
              std::make_unique<BottleneckT<S>>(in_ch, mid, out, stride));
      in_ch = out;
    }
  }
  seq.add("gap", std::make_unique<GlobalAvgPoolT<S>>());
}

}  // namespace

template <typename S>
ModelT<S>::ModelT(BackboneSpec spec, uint64_t seed)
    : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
  switch (spec_.kind) {
    case BackboneKind::kToyConv:
      build_toy_backbone(backbone_, spec_.feature_dim);
      break;
    case BackboneKind::kReference50:
      build_reference_backbone(backbone_);
      break;
  }
  for (int a = 0; a < 3; ++a) {
    heads_[static_cast<size_t>(a)].regression =
        std::make_unique<LinearT<S>>(spec_.feature_dim, 1);
    heads_[static_cast<size_t>(a)].classification =
        std::make_unique<LinearT<S>>(spec_.feature_dim, kNumAngleBins);
  }
  InitRng rng(seed);
  backbone_.init(rng);
  for (auto& head : heads_) {
    head.regression->init(rng);
    head.classification->init(rng);
  }
}

template <typename S>
PredictionBatchT<S> ModelT<S>::forward(const TensorT<S>& images,
                                       bool training) {
  if (images.shape.size() != 4 || images.dim(0) < 1 || images.dim(1) != 3 ||
      images.dim(2) != kInputSide || images.dim(3) != kInputSide) {
    raise(Errc::shape_mismatch,
          "model input must be [N, 3, " + std::to_string(kInputSide) + ", " +
              std::to_string(kInputSide) + "], got " + images.shape_string());
  }
  TensorT<S> features = backbone_.forward(images, training);
  const int n = features.dim(0);

  PredictionBatchT<S> out;
  out.angles = TensorT<S>({n, 3});
  out.logits = TensorT<S>({n, 3, kNumAngleBins});
  for (int a = 0; a < 3; ++a) {
    auto& head = heads_[static_cast<size_t>(a)];
    TensorT<S> reg = head.regression->forward(features, training);
    TensorT<S> cls = head.classification->forward(features, training);
    for (int i = 0; i < n; ++i) {
      out.angles.data[static_cast<size_t>(i) * 3 + a] =
          reg.data[static_cast<size_t>(i)];
      const S* src = cls.data.data() + static_cast<size_t>(i) * kNumAngleBins;
      S* dst = out.logits.data.data() +
               (static_cast<size_t>(i) * 3 + a) * kNumAngleBins;
      std::copy(src, src + kNumAngleBins, dst);
    }
  }
  if (training) cached_features_ = std::move(features);
  return out;
}

template <typename S>
void ModelT<S>::backward(const TensorT<S>& d_angles,
                         const TensorT<S>& d_logits) {
  const int n = cached_features_.dim(0);
  if (d_angles.shape != std::vector<int>{n, 3} ||
      d_logits.shape != std::vector<int>{n, 3, kNumAngleBins}) {
    raise(Errc::shape_mismatch, "gradient shapes do not match the last forward");
  }
  TensorT<S> d_features(cached_features_.shape);
  TensorT<S> reg_dy({n, 1});
  TensorT<S> cls_dy({n, kNumAngleBins});
  for (int a = 0; a < 3; ++a) {
    auto& head = heads_[static_cast<size_t>(a)];
    for (int i = 0; i < n; ++i) {
      reg_dy.data[static_cast<size_t>(i)] =
          d_angles.data[static_cast<size_t>(i) * 3 + a];
      const S* src = d_logits.data.data() +
                     (static_cast<size_t>(i) * 3 + a) * kNumAngleBins;
      std::copy(src, src + kNumAngleBins,
                cls_dy.data.data() + static_cast<size_t>(i) * kNumAngleBins);
    }
    TensorT<S> d_feat_reg = head.regression->backward(reg_dy);
    TensorT<S> d_feat_cls = head.classification->backward(cls_dy);
    for (size_t i = 0; i < d_features.data.size(); ++i) {
      d_features.data[i] += d_feat_reg.data[i] + d_feat_cls.data[i];
    }
  }
  backbone_.backward(d_features);
}

template <typename S>
std::vector<ParamRef<S>> ModelT<S>::parameters() {
  std::vector<ParamRef<S>> params;
  backbone_.collect_params("backbone", params);
  for (int a = 0; a < 3; ++a) {
    const std::string prefix = std::string("head.") + kAngleNames[static_cast<size_t>(a)];
    heads_[static_cast<size_t>(a)].regression->collect_params(
        prefix + ".regression", params);
    heads_[static_cast<size_t>(a)].classification->collect_params(
        prefix + ".classification", params);
  }
  return params;
}

template <typename S>
void ModelT<S>::zero_grad() {
  for (auto& p : parameters()) {
    if (p.grad) std::fill(p.grad->begin(), p.grad->end(), S(0));
  }
}

template <typename S>
int64_t ModelT<S>::parameter_count() {
  int64_t count = 0;
  for (const auto& p : parameters()) {
    if (p.trainable) count += static_cast<int64_t>(p.value->size());
  }
  return count;
}

template <typename S>
ModelT<S> build_model(const BackboneSpec& spec, uint64_t seed) {
  ModelT<S> model(spec, seed);
  if (!spec.pretrained_weights.empty()) {
    const std::filesystem::path path = spec.pretrained_weights;
    if (!std::filesystem::exists(path)) {
      raise(Errc::load_failure,
            "pretrained weight file not found: " + path.string());
    }
    const std::vector<NamedArray> arrays = read_array_archive(path);
    auto params = model.parameters();
    size_t loaded = 0;
    for (const NamedArray& array : arrays) {
      if (array.name.rfind("backbone.", 0) != 0) continue;
      bool found = false;
      for (auto& p : params) {
        if (p.name != array.name) continue;
        if (p.shape != array.shape || p.value->size() != array.values.size()) {
          raise(Errc::load_failure, "pretrained array '" + array.name +
                                        "' has mismatched shape");
        }
        for (size_t i = 0; i < array.values.size(); ++i) {
          (*p.value)[i] = static_cast<S>(array.values[i]);
        }
        found = true;
        ++loaded;
        break;
      }
      if (!found) {
        raise(Errc::load_failure, "pretrained array '" + array.name +
                                      "' does not exist in this backbone");
      }
    }
    if (loaded == 0) {
      raise(Errc::load_failure, "pretrained archive " + path.string() +
                                    " contains no backbone arrays");
    }
  }
  return model;
}

template class ModelT<float>;
template class ModelT<double>;
template ModelT<float> build_model<float>(const BackboneSpec&, uint64_t);
template ModelT<double> build_model<double>(const BackboneSpec&, uint64_t);

}  // namespace headpose
