#include "headpose/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace headpose {

namespace {

// Bilinear sample with zero outside the image: the padding rule of
// crop_pad_resize. sx/sy are continuous pixel-center coordinates.
inline void sample_bilinear(const Image& img, double sx, double sy,
                            float out[3]) {
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0;
  const double fy = sy - y0;

  const double w00 = (1.0 - fx) * (1.0 - fy);
  const double w10 = fx * (1.0 - fy);
  const double w01 = (1.0 - fx) * fy;
  const double w11 = fx * fy;

  const bool in00 = x0 >= 0 && x0 < img.width && y0 >= 0 && y0 < img.height;
  const bool in10 = x0 + 1 >= 0 && x0 + 1 < img.width && y0 >= 0 && y0 < img.height;
  const bool in01 = x0 >= 0 && x0 < img.width && y0 + 1 >= 0 && y0 + 1 < img.height;
  const bool in11 = x0 + 1 >= 0 && x0 + 1 < img.width && y0 + 1 >= 0 && y0 + 1 < img.height;

  for (int c = 0; c < Image::kChannels; ++c) {
    double acc = 0.0;
    if (in00) acc += w00 * img.at(x0, y0, c);
    if (in10) acc += w10 * img.at(x0 + 1, y0, c);
    if (in01) acc += w01 * img.at(x0, y0 + 1, c);
    if (in11) acc += w11 * img.at(x0 + 1, y0 + 1, c);
    out[c] = static_cast<float>(acc);
  }
}

}  // namespace

Image crop_pad_resize(const Image& image, const CropRegion& region,
                      int out_side) {
  if (image.empty()) {
    raise(Errc::invalid_input, "crop_pad_resize: empty image");
  }
  if (!(region.width() > 0.0) || !(region.height() > 0.0)) {
    raise(Errc::invalid_geometry, "crop_pad_resize: region has no area");
  }
  if (out_side <= 0) {
    raise(Errc::invalid_parameter, "crop_pad_resize: out_side must be > 0");
  }

  Image out(out_side, out_side);
  const double scale_x = region.width() / out_side;
  const double scale_y = region.height() / out_side;
  float rgb[3];
  for (int oy = 0; oy < out_side; ++oy) {
    const double sy = region.top + (oy + 0.5) * scale_y - 0.5;
    for (int ox = 0; ox < out_side; ++ox) {
      const double sx = region.left + (ox + 0.5) * scale_x - 0.5;
      sample_bilinear(image, sx, sy, rgb);
      for (int c = 0; c < Image::kChannels; ++c) out.at(ox, oy, c) = rgb[c];
    }
  }
  return out;
}

void quantize_to_8bit(Image& image) {
  for (float& v : image.pixels) {
    const double clamped = std::clamp(static_cast<double>(v), 0.0, 1.0);
    v = static_cast<float>(std::lround(clamped * 255.0) / 255.0);
  }
}

}  // namespace headpose
