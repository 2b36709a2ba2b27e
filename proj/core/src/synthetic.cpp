#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "headpose/dataset.hpp"

namespace headpose {

namespace {

constexpr double kPoseRangeDeg = 60.0;
constexpr double kDiscRadius = 0.30;  // in units of the image side

double uniform01(std::mt19937& gen) {
  return static_cast<double>(gen()) * (1.0 / 4294967296.0);
}

uint64_t fnv1a(const void* data, size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  uint64_t hash = 1469598103934665603ULL;
  for (size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 1099511628211ULL;
  }
  return hash;
}

}  // namespace

Image render_synthetic_image(const HeadPose& pose, int image_side) {
  Image img(image_side, image_side);
  const double roll_rad = radians_from_degrees(pose.roll);
  const double yaw_gain = pose.yaw / kPoseRangeDeg;
  const double pitch_gain = pose.pitch / kPoseRangeDeg;
  for (int y = 0; y < image_side; ++y) {
    const double v = (y + 0.5) / image_side - 0.5;
    for (int x = 0; x < image_side; ++x) {
      const double u = (x + 0.5) / image_side - 0.5;
      // Horizontal shading follows yaw, vertical shading follows pitch.
      img.at(x, y, 0) = static_cast<float>(0.5 + 0.8 * yaw_gain * u);
      img.at(x, y, 1) = static_cast<float>(0.5 + 0.8 * pitch_gain * v);
      // Two-tone disc: bright half faces the roll direction.
      const double r2 = u * u + v * v;
      double b = 0.15;
      if (r2 <= kDiscRadius * kDiscRadius) {
        const double phi = std::atan2(v, u);
        b = 0.5 + 0.45 * std::cos(phi - roll_rad);
      }
      img.at(x, y, 2) = static_cast<float>(b);
    }
  }
  quantize_to_8bit(img);
  return img;
}

SyntheticDataset make_synthetic_dataset(int n, uint64_t seed, int image_side) {
  if (n < 1) {
    raise(Errc::invalid_parameter,
          "synthetic dataset needs n >= 1, got " + std::to_string(n));
  }
  if (image_side < 8) {
    raise(Errc::invalid_parameter, "image_side too small");
  }
  SyntheticDataset ds;
  ds.seed = seed;
  ds.image_side = image_side;

  const BoundingBox box{0.2 * image_side, 0.2 * image_side, 0.6 * image_side};
  std::mt19937 gen(static_cast<uint32_t>(seed ^ (seed >> 32)));
  std::unordered_map<uint64_t, size_t> seen;
  for (int i = 0; i < n; ++i) {
    HeadPose pose;
    pose.yaw = (2.0 * uniform01(gen) - 1.0) * kPoseRangeDeg;
    pose.pitch = (2.0 * uniform01(gen) - 1.0) * kPoseRangeDeg;
    pose.roll = (2.0 * uniform01(gen) - 1.0) * kPoseRangeDeg;

    Sample sample;
    sample.image = render_synthetic_image(pose, image_side);
    sample.pose = pose;
    sample.box = box;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%05d", i);
    sample.source_id = id;

    const uint64_t hash = fnv1a(sample.image.pixels.data(),
                                sample.image.pixels.size() * sizeof(float));
    auto [it, inserted] = seen.emplace(hash, static_cast<size_t>(i));
    if (!inserted) {
      const HeadPose& other = ds.samples[it->second].pose;
      const double dist = std::max({std::abs(other.yaw - pose.yaw),
                                    std::abs(other.pitch - pose.pitch),
                                    std::abs(other.roll - pose.roll)});
      if (dist > 1.0) {
        raise(Errc::invalid_input,
              "pose-to-image map collision between samples " +
                  std::to_string(it->second) + " and " + std::to_string(i));
      }
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

void save_synthetic_dataset(const std::filesystem::path& dir,
                            const SyntheticDataset& dataset) {
  std::filesystem::create_directories(dir);
  nlohmann::json samples = nlohmann::json::array();
  for (const Sample& sample : dataset.samples) {
    const std::string file = sample.source_id + ".ppm";
    write_ppm(dir / file, sample.image);
    samples.push_back({{"id", sample.source_id},
                       {"file", file},
                       {"yaw", sample.pose.yaw},
                       {"pitch", sample.pose.pitch},
                       {"roll", sample.pose.roll},
                       {"box_left", sample.box.left},
                       {"box_top", sample.box.top},
                       {"box_side", sample.box.side}});
  }
  const nlohmann::json manifest{{"adapter", "synthetic"},
                                {"seed", dataset.seed},
                                {"image_side", dataset.image_side},
                                {"n", dataset.samples.size()},
                                {"samples", samples}};
  std::ofstream out(dir / "manifest.json");
  if (!out) {
    raise(Errc::io_failure, (dir / "manifest.json").string() + ": cannot write");
  }
  out << manifest.dump(2) << "\n";
}

}  // namespace headpose
