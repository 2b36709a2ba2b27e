#include "headpose/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "headpose/model.hpp"

namespace headpose {

using nlohmann::json;

const char* adapter_kind_name(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::kSynthetic: return "synthetic";
    case AdapterKind::kW300Lp: return "w300lp";
    case AdapterKind::kAflw2000: return "aflw2000";
    case AdapterKind::kBiwi: return "biwi";
  }
  return "unknown";
}

AdapterKind adapter_kind_from_name(const std::string& name) {
  if (name == "synthetic") return AdapterKind::kSynthetic;
  if (name == "w300lp") return AdapterKind::kW300Lp;
  if (name == "aflw2000") return AdapterKind::kAflw2000;
  if (name == "biwi") return AdapterKind::kBiwi;
  raise(Errc::invalid_config, "unknown dataset adapter '" + name + "'");
}

const char* box_source_name(BoxSource source) {
  return source == BoxSource::kPrecomputedFile ? "precomputed-file"
                                               : "landmark-extent";
}

BoxSource box_source_from_name(const std::string& name) {
  if (name == "precomputed-file") return BoxSource::kPrecomputedFile;
  if (name == "landmark-extent") return BoxSource::kLandmarkExtent;
  raise(Errc::invalid_config, "unknown box source '" + name + "'");
}

Image Dataset::image(size_t i) const {
  const Entry& e = entries_[i];
  if (e.inline_index >= 0) {
    return inline_images_[static_cast<size_t>(e.inline_index)];
  }
  try {
    return read_image(e.image_path);
  } catch (const Error& err) {
    raise(err.code(), "sample '" + e.source_id + "': " + err.what());
  }
}

Sample Dataset::sample(size_t i) const {
  const Entry& e = entries_[i];
  return Sample{image(i), e.pose, e.box, e.source_id};
}

void Dataset::add(Entry entry) { entries_.push_back(std::move(entry)); }

void Dataset::add_inline(Entry entry, Image image) {
  entry.inline_index = static_cast<int>(inline_images_.size());
  inline_images_.push_back(std::move(image));
  entries_.push_back(std::move(entry));
}

// --- pose parsing -----------------------------------------------------------

HeadPose load_pose_from_mat_params(double pitch_rad, double yaw_rad,
                                   double roll_rad) {
  if (!std::isfinite(pitch_rad) || !std::isfinite(yaw_rad) ||
      !std::isfinite(roll_rad)) {
    raise(Errc::parse_failure, "pose parameters must be finite");
  }
  return HeadPose{degrees_from_radians(yaw_rad),
                  degrees_from_radians(pitch_rad),
                  degrees_from_radians(roll_rad)};
}

HeadPose load_biwi_pose(const std::string& pose_file_text) {
  std::istringstream in(pose_file_text);
  RotationMatrix rotation;
  for (int i = 0; i < 9; ++i) {
    if (!(in >> rotation.m[static_cast<size_t>(i)])) {
      raise(Errc::parse_failure,
            "pose file holds fewer than 9 rotation entries");
    }
  }
  return rotmat_to_euler(rotation, GimbalPolicy::kThrow, 1e-3);
}

BoundingBox box_from_landmarks(
    std::span<const std::array<double, 2>> landmarks) {
  if (landmarks.size() < 2) {
    raise(Errc::invalid_landmarks, "need at least 2 landmark points, got " +
                                       std::to_string(landmarks.size()));
  }
  double min_x = landmarks[0][0], max_x = landmarks[0][0];
  double min_y = landmarks[0][1], max_y = landmarks[0][1];
  for (const auto& p : landmarks) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  if (!(max_x > min_x) || !(max_y > min_y)) {
    raise(Errc::invalid_landmarks, "landmark extent is degenerate");
  }
  return squarify_box(min_x, min_y, max_x - min_x, max_y - min_y);
}

// --- adapters ----------------------------------------------------------------

namespace {

std::vector<std::filesystem::path> sorted_files_with_suffix(
    const std::filesystem::path& root, const std::vector<std::string>& suffixes) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    for (const auto& suffix : suffixes) {
      if (name.size() > suffix.size() &&
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        files.push_back(entry.path());
        break;
      }
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::map<std::string, BoundingBox> read_box_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::io_failure, path.string() + ": cannot open box file");
  }
  std::map<std::string, BoundingBox> boxes;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      raise(Errc::parse_failure, path.string() + ":" + std::to_string(line_no) +
                                     ": " + e.what());
    }
    const auto id = record.at("id").get<std::string>();
    boxes[id] = squarify_box(record.at("left").get<double>(),
                             record.at("top").get<double>(),
                             record.at("width").get<double>(),
                             record.at("height").get<double>());
  }
  return boxes;
}

struct AnnotationSidecar {
  HeadPose pose;
  std::vector<std::array<double, 2>> landmarks;
};

AnnotationSidecar read_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::io_failure, path.string() + ": cannot open annotation");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(Errc::parse_failure, path.string() + ": " + e.what());
  }
  const auto params = j.at("pose_params").get<std::vector<double>>();
  if (params.size() < 3) {
    raise(Errc::parse_failure, path.string() + ": pose_params needs 3 values");
  }
  AnnotationSidecar ann;
  ann.pose = load_pose_from_mat_params(params[0], params[1], params[2]);
  if (j.contains("landmarks")) {
    for (const auto& point : j.at("landmarks")) {
      ann.landmarks.push_back({point.at(0).get<double>(), point.at(1).get<double>()});
    }
  }
  return ann;
}

Dataset load_annotated_images(const DatasetManifest& manifest) {
  Dataset ds;
  std::map<std::string, BoundingBox> boxes;
  if (manifest.box_source == BoxSource::kPrecomputedFile) {
    boxes = read_box_file(manifest.root / "boxes.jsonl");
  }
  const auto images =
      sorted_files_with_suffix(manifest.root, {".jpg", ".jpeg", ".png", ".ppm"});
  for (const auto& image_path : images) {
    const std::string id = image_path.stem().string();
    std::filesystem::path ann_path = image_path;
    ann_path.replace_extension(".json");
    if (!std::filesystem::exists(ann_path)) {
      raise(Errc::load_failure,
            "sample '" + id + "': missing annotation " + ann_path.string());
    }
    AnnotationSidecar ann = read_annotation(ann_path);
    BoundingBox box;
    if (manifest.box_source == BoxSource::kPrecomputedFile) {
      auto it = boxes.find(id);
      if (it == boxes.end()) {
        raise(Errc::load_failure, "sample '" + id + "': no box in boxes.jsonl");
      }
      box = it->second;
    } else {
      if (ann.landmarks.empty()) {
        raise(Errc::invalid_landmarks,
              "sample '" + id + "': landmark box requested but no landmarks");
      }
      box = box_from_landmarks(ann.landmarks);
    }
    ds.add(Dataset::Entry{ann.pose, box, id, image_path, -1});
  }
  return ds;
}

Dataset load_biwi(const DatasetManifest& manifest) {
  Dataset ds;
  const auto boxes = read_box_file(manifest.root / "boxes.jsonl");
  const auto images =
      sorted_files_with_suffix(manifest.root, {"_rgb.png", "_rgb.ppm", "_rgb.jpg"});
  for (const auto& image_path : images) {
    std::string id = image_path.filename().string();
    id = id.substr(0, id.rfind("_rgb."));
    const std::filesystem::path pose_path =
        image_path.parent_path() / (id + "_pose.txt");
    std::ifstream pose_in(pose_path);
    if (!pose_in) {
      raise(Errc::load_failure,
            "sample '" + id + "': missing pose file " + pose_path.string());
    }
    std::stringstream buffer;
    buffer << pose_in.rdbuf();
    HeadPose pose;
    try {
      pose = load_biwi_pose(buffer.str());
    } catch (const Error& err) {
      raise(err.code(), "sample '" + id + "': " + err.what());
    }
    auto it = boxes.find(id);
    if (it == boxes.end()) {
      raise(Errc::load_failure, "sample '" + id + "': no box in boxes.jsonl");
    }
    ds.add(Dataset::Entry{pose, it->second, id, image_path, -1});
  }
  return ds;
}

Dataset load_synthetic_dir(const DatasetManifest& manifest) {
  const std::filesystem::path manifest_path = manifest.root / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) {
    raise(Errc::io_failure, manifest_path.string() + ": cannot open");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(Errc::parse_failure, manifest_path.string() + ": " + e.what());
  }
  Dataset ds;
  for (const auto& rec : j.at("samples")) {
    Dataset::Entry entry;
    entry.source_id = rec.at("id").get<std::string>();
    entry.pose = HeadPose{rec.at("yaw").get<double>(),
                          rec.at("pitch").get<double>(),
                          rec.at("roll").get<double>()};
    entry.box = BoundingBox{rec.at("box_left").get<double>(),
                            rec.at("box_top").get<double>(),
                            rec.at("box_side").get<double>()};
    entry.image_path = manifest.root / rec.at("file").get<std::string>();
    ds.add(std::move(entry));
  }
  return ds;
}

}  // namespace

Dataset load_dataset(const DatasetManifest& manifest) {
  if (!std::filesystem::exists(manifest.root)) {
    raise(Errc::io_failure,
          "dataset root does not exist: " + manifest.root.string());
  }
  switch (manifest.adapter) {
    case AdapterKind::kSynthetic:
      return load_synthetic_dir(manifest);
    case AdapterKind::kW300Lp:
    case AdapterKind::kAflw2000:
      return load_annotated_images(manifest);
    case AdapterKind::kBiwi:
      if (manifest.box_source != BoxSource::kPrecomputedFile) {
        raise(Errc::invalid_config,
              "the biwi adapter has no landmarks; use a precomputed box file");
      }
      return load_biwi(manifest);
  }
  raise(Errc::invalid_config, "unhandled adapter");
}

Dataset dataset_from_samples(std::span<const Sample> samples) {
  Dataset ds;
  for (const Sample& sample : samples) {
    ds.add_inline(Dataset::Entry{sample.pose, sample.box, sample.source_id,
                                 {}, -1},
                  sample.image);
  }
  return ds;
}

std::pair<Dataset, size_t> filter_evaluable(const Dataset& dataset,
                                            double range_deg) {
  Dataset kept;
  size_t dropped = 0;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const auto& entry = dataset.entry(i);
    if (entry.pose.in_range(range_deg)) {
      if (entry.inline_index >= 0) {
        kept.add_inline(entry, dataset.image(i));
      } else {
        kept.add(entry);
      }
    } else {
      ++dropped;
    }
  }
  return {std::move(kept), dropped};
}

// --- batching -----------------------------------------------------------------

void deterministic_shuffle(std::vector<size_t>& indices, uint64_t seed) {
  std::mt19937 gen(static_cast<uint32_t>(seed ^ (seed >> 32)));
  for (size_t i = indices.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(gen()) % i;
    std::swap(indices[i - 1], indices[j]);
  }
}

BatchStream::BatchStream(const Dataset& dataset, BatchOptions options)
    : dataset_(dataset), options_(std::move(options)) {
  if (options_.batch_size < 1) {
    raise(Errc::invalid_parameter, "batch_size must be >= 1");
  }
  if (!(options_.margin_k >= 0.0)) {
    raise(Errc::invalid_parameter, "margin K must be >= 0");
  }
  order_.resize(dataset_.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (options_.shuffle) deterministic_shuffle(order_, options_.shuffle_seed);
}

void BatchStream::reset(uint64_t shuffle_seed) {
  options_.shuffle_seed = shuffle_seed;
  cursor_ = 0;
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (options_.shuffle) deterministic_shuffle(order_, shuffle_seed);
}

size_t BatchStream::batch_count() const {
  const size_t b = static_cast<size_t>(options_.batch_size);
  return (dataset_.size() + b - 1) / b;
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const size_t remaining = order_.size() - cursor_;
  const size_t b =
      std::min(remaining, static_cast<size_t>(options_.batch_size));
  const int side = options_.out_side;

  Batch batch;
  batch.images = Tensor({static_cast<int>(b), 3, side, side});
  batch.target_angles.resize(b);
  batch.target_classes.resize(b);

  for (size_t s = 0; s < b; ++s) {
    const size_t idx = order_[cursor_ + s];
    const auto& entry = dataset_.entry(idx);
    Image patch;
    try {
      const CropRegion region = expand_margin(entry.box, options_.margin_k);
      patch = crop_pad_resize(dataset_.image(idx), region, side);
    } catch (const Error& err) {
      raise(err.code(), "sample '" + entry.source_id + "': " + err.what());
    }
    float* dst = batch.images.data.data() +
                 s * static_cast<size_t>(3) * side * side;
    for (int c = 0; c < 3; ++c) {
      const double mean = options_.channel_mean[static_cast<size_t>(c)];
      const double inv_std = 1.0 / options_.channel_std[static_cast<size_t>(c)];
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          dst[(static_cast<size_t>(c) * side + y) * side + x] =
              static_cast<float>((patch.at(x, y, c) - mean) * inv_std);
        }
      }
    }
    const HeadPose& pose = entry.pose;
    batch.target_angles[s] = {pose.yaw, pose.pitch, pose.roll};
    try {
      batch.target_classes[s] = {angle_to_class(pose.yaw),
                                 angle_to_class(pose.pitch),
                                 angle_to_class(pose.roll)};
    } catch (const Error& err) {
      raise(err.code(), "sample '" + entry.source_id +
                            "': pose outside the binning; filter first (" +
                            err.what() + ")");
    }
  }
  cursor_ += b;
  return batch;
}

}  // namespace headpose
