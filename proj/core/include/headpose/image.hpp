#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "headpose/geometry.hpp"

namespace headpose {

/// Interleaved RGB image, float values in [0, 1], row-major
/// (y, x, channel). Channel order is fixed: 0 = R, 1 = G, 2 = B.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // width * height * 3

  static constexpr int kChannels = 3;

  Image() = default;
  Image(int w, int h) : width(w), height(h) {
    pixels.assign(static_cast<size_t>(w) * static_cast<size_t>(h) * kChannels,
                  0.0f);
  }

  bool empty() const { return width <= 0 || height <= 0 || pixels.empty(); }

  float at(int x, int y, int channel) const {
    return pixels[(static_cast<size_t>(y) * static_cast<size_t>(width) +
                   static_cast<size_t>(x)) * kChannels +
                  static_cast<size_t>(channel)];
  }
  float& at(int x, int y, int channel) {
    return pixels[(static_cast<size_t>(y) * static_cast<size_t>(width) +
                   static_cast<size_t>(x)) * kChannels +
                  static_cast<size_t>(channel)];
  }
};

/// Extracts `region` from `image`, zero-filling anything outside the image
/// bounds, and resizes the result to out_side x out_side with bilinear
/// interpolation (pixel-center sampling). Values pass through unscaled.
Image crop_pad_resize(const Image& image, const CropRegion& region,
                      int out_side = 224);

/// Reads PPM (P6/P5), PNG or JPEG, dispatching on the file signature.
/// 8-bit samples map to value / 255; grayscale is replicated to RGB.
Image read_image(const std::filesystem::path& path);

/// Writes a binary PPM (P6). Float values are clamped to [0, 1] and
/// quantised with round-to-nearest; the byte stream is a pure function of
/// the pixel values.
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Quantises to the 8-bit grid used by write_ppm, in place. An image that
/// went through this survives a PPM write/read cycle bit-exactly.
void quantize_to_8bit(Image& image);

}  // namespace headpose
