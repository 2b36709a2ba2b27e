#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "headpose/geometry.hpp"
#include "headpose/image.hpp"
#include "headpose/tensor.hpp"

namespace headpose {

/// One annotated face: pixels, ground-truth pose, square face box.
struct Sample {
  Image image;
  HeadPose pose;
  BoundingBox box;
  std::string source_id;
};

enum class AdapterKind { kSynthetic, kW300Lp, kAflw2000, kBiwi };
enum class BoxSource { kPrecomputedFile, kLandmarkExtent };

const char* adapter_kind_name(AdapterKind kind);
AdapterKind adapter_kind_from_name(const std::string& name);
const char* box_source_name(BoxSource source);
BoxSource box_source_from_name(const std::string& name);

struct DatasetManifest {
  std::filesystem::path root;
  AdapterKind adapter = AdapterKind::kSynthetic;
  BoxSource box_source = BoxSource::kPrecomputedFile;
  double filter_range_deg = 90.0;
};

/// Loaded dataset. Synthetic data keeps pixels in memory; disk adapters
/// record paths and decode lazily, so large datasets stay cheap to hold.
class Dataset {
 public:
  struct Entry {
    HeadPose pose;
    BoundingBox box;
    std::string source_id;
    std::filesystem::path image_path;  // empty when the image is inline
    int inline_index = -1;
  };

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry& entry(size_t i) const { return entries_[i]; }

  /// Decoded pixels for sample i (reads from disk for path-backed entries).
  Image image(size_t i) const;

  /// Full sample value (copies the image).
  Sample sample(size_t i) const;

  void add(Entry entry);
  void add_inline(Entry entry, Image image);

 private:
  std::vector<Entry> entries_;
  std::vector<Image> inline_images_;
};

// --- pose parsing -----------------------------------------------------------

/// Annotation pose parameters (radians, ordered pitch, yaw, roll) to degrees.
HeadPose load_pose_from_mat_params(double pitch_rad, double yaw_rad,
                                   double roll_rad);

/// Parses the per-frame pose text shipped with RGB-D recordings: nine
/// rotation-matrix entries row-major (a trailing translation is ignored) and
/// converts under the library's Euler convention. Matrices further than 1e-3
/// from orthonormal are rejected.
HeadPose load_biwi_pose(const std::string& pose_file_text);

/// Tight axis-aligned extent of the landmarks, squarified. Needs at least
/// two distinct points with nonzero extent in both directions.
BoundingBox box_from_landmarks(std::span<const std::array<double, 2>> landmarks);

// --- loading and filtering ---------------------------------------------------

Dataset load_dataset(const DatasetManifest& manifest);

/// In-memory dataset from already-materialised samples (copies the images).
Dataset dataset_from_samples(std::span<const Sample> samples);

/// Keeps samples whose three angles all lie within [-range, +range]
/// (inclusive); returns the kept dataset and the dropped count.
std::pair<Dataset, size_t> filter_evaluable(const Dataset& dataset,
                                            double range_deg = 90.0);

// --- synthetic data -----------------------------------------------------------

struct SyntheticDataset {
  uint64_t seed = 0;
  int image_side = 224;
  std::vector<Sample> samples;
};

/// Deterministic desk-scale dataset: poses uniform in (+-60 deg)^3; each
/// image is a pose-coded pattern (horizontal shading ~ yaw, vertical
/// shading ~ pitch, a two-tone disc rotated by roll) with a fixed centered
/// box at 60% of the image side. Same (n, seed, side) reproduces identical
/// bytes; an image-hash collision between distinct poses is rejected.
SyntheticDataset make_synthetic_dataset(int n, uint64_t seed,
                                        int image_side = 224);

/// Renders the pattern for one pose (already quantised to the 8-bit grid).
Image render_synthetic_image(const HeadPose& pose, int image_side);

/// Writes one PPM per sample plus manifest.json; loadable through the
/// synthetic adapter.
void save_synthetic_dataset(const std::filesystem::path& dir,
                            const SyntheticDataset& dataset);

// --- batching -----------------------------------------------------------------

struct Batch {
  Tensor images;                                     // [B, 3, side, side]
  std::vector<std::array<double, 3>> target_angles;  // yaw, pitch, roll
  std::vector<std::array<int, 3>> target_classes;
};

struct BatchOptions {
  double margin_k = 0.5;
  int batch_size = 64;
  uint64_t shuffle_seed = 0;
  bool shuffle = true;
  int out_side = 224;
  std::array<double, 3> channel_mean{0.0, 0.0, 0.0};
  std::array<double, 3> channel_std{1.0, 1.0, 1.0};
};

/// Deterministic batch stream: a seeded Fisher-Yates shuffle fixes the
/// order, every batch applies crop(expand_margin(box, K)) -> resize ->
/// normalise, and the final partial batch is yielded.
class BatchStream {
 public:
  BatchStream(const Dataset& dataset, BatchOptions options);

  std::optional<Batch> next();
  void reset(uint64_t shuffle_seed);
  size_t batch_count() const;

 private:
  const Dataset& dataset_;
  BatchOptions options_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
};

/// Seeded in-place Fisher-Yates; the permutation depends only on the seed
/// and length, not on any library distribution.
void deterministic_shuffle(std::vector<size_t>& indices, uint64_t seed);

}  // namespace headpose
