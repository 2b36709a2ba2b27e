#include <cstddef>
#include <cstdio>

#include <jpeglib.h>
#include <png.h>

#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "headpose/image.hpp"

namespace headpose {

namespace {

Image from_rgb8(const std::vector<unsigned char>& bytes, int width, int height,
                int channels) {
  Image img(width, height);
  const size_t n = static_cast<size_t>(width) * static_cast<size_t>(height);
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < Image::kChannels; ++c) {
      const unsigned char b =
          channels == 1 ? bytes[i] : bytes[i * static_cast<size_t>(channels) +
                                           static_cast<size_t>(c)];
      img.pixels[i * 3 + static_cast<size_t>(c)] =
          static_cast<float>(b) / 255.0f;
    }
  }
  return img;
}

// --- PPM / PGM ------------------------------------------------------------

int next_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns the next integer.
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  return in ? value : -1;
}

Image read_pnm(const std::filesystem::path& path, std::ifstream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  const bool gray = magic[1] == '5';
  const int width = next_pnm_token(in);
  const int height = next_pnm_token(in);
  const int maxval = next_pnm_token(in);
  if (width <= 0 || height <= 0 || maxval != 255) {
    raise(Errc::parse_failure,
          path.string() + ": unsupported or malformed PNM header");
  }
  in.get();  // single whitespace byte before the raster
  const int channels = gray ? 1 : 3;
  std::vector<unsigned char> bytes(static_cast<size_t>(width) *
                                   static_cast<size_t>(height) *
                                   static_cast<size_t>(channels));
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (static_cast<size_t>(in.gcount()) != bytes.size()) {
    raise(Errc::parse_failure, path.string() + ": truncated PNM raster");
  }
  return from_rgb8(bytes, width, height, channels);
}

// --- PNG ------------------------------------------------------------------

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    raise(Errc::parse_failure, path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    raise(Errc::parse_failure, path.string() + ": " + message);
  }
  return from_rgb8(bytes, static_cast<int>(png.width),
                   static_cast<int>(png.height), 3);
}

// --- JPEG -----------------------------------------------------------------

struct JpegErrorTrap {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* trap = reinterpret_cast<JpegErrorTrap*>(cinfo->err);
  std::longjmp(trap->jump, 1);
}

Image read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(
      std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) {
    raise(Errc::io_failure, path.string() + ": cannot open");
  }

  jpeg_decompress_struct cinfo;
  JpegErrorTrap trap;
  cinfo.err = jpeg_std_error(&trap.mgr);
  trap.mgr.error_exit = jpeg_error_exit;
  if (setjmp(trap.jump)) {
    jpeg_destroy_decompress(&cinfo);
    raise(Errc::parse_failure, path.string() + ": JPEG decode failed");
  }

  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  const int width = static_cast<int>(cinfo.output_width);
  const int height = static_cast<int>(cinfo.output_height);
  std::vector<unsigned char> bytes(static_cast<size_t>(width) *
                                   static_cast<size_t>(height) * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row =
        bytes.data() + static_cast<size_t>(cinfo.output_scanline) *
                           static_cast<size_t>(width) * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_rgb8(bytes, width, height, 3);
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    raise(Errc::io_failure, path.string() + ": cannot open");
  }
  unsigned char sig[2] = {0, 0};
  in.read(reinterpret_cast<char*>(sig), 2);
  if (!in) {
    raise(Errc::parse_failure, path.string() + ": file too short");
  }
  in.seekg(0);
  if (sig[0] == 'P' && (sig[1] == '6' || sig[1] == '5')) {
    return read_pnm(path, in);
  }
  in.close();
  if (sig[0] == 0x89 && sig[1] == 'P') {
    return read_png(path);
  }
  if (sig[0] == 0xFF && sig[1] == 0xD8) {
    return read_jpeg(path);
  }
  raise(Errc::parse_failure,
        path.string() + ": unrecognised image signature (expect PPM/PNG/JPEG)");
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  if (image.empty()) {
    raise(Errc::invalid_input, "write_ppm: empty image");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    raise(Errc::io_failure, path.string() + ": cannot open for writing");
  }
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v =
            std::clamp(static_cast<double>(image.at(x, y, c)), 0.0, 1.0);
        row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) {
    raise(Errc::io_failure, path.string() + ": write failed");
  }
}

}  // namespace headpose
