#pragma once

// 8-bit images and their PNG / binary PGM (P5) / PPM (P6) encodings.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mwdcnn {

/// Interleaved 8-bit samples, row-major, 1 (gray) or 3 (RGB) channels.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  static ImageBuffer blank(std::size_t width, std::size_t height, std::size_t channels);

  std::size_t sample_count() const { return width * height * channels; }
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }

  bool operator==(const ImageBuffer&) const = default;
};

enum class ImageErrc {
  unreadable,
  unsupported_format,
  unsupported_bit_depth,
  write_failed,
  invalid_argument,
};

class ImageError : public std::runtime_error {
 public:
  ImageError(ImageErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ImageErrc code() const { return code_; }

 private:
  ImageErrc code_;
};

/// Decodes PNG or P5/P6 by content signature. Only 8-bit samples are
/// accepted; alpha is composited away and palettes are expanded to RGB.
ImageBuffer load_image(const std::filesystem::path& path);
ImageBuffer decode_image(std::span<const std::uint8_t> bytes, const std::string& origin);

/// Format follows the extension: .png, .pgm or .ppm (.pnm picks by channels).
void save_image(const ImageBuffer& image, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_pnm(const ImageBuffer& image);
std::vector<std::uint8_t> encode_png(const ImageBuffer& image);

/// Images with a supported extension in `dir`, sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Luminance Y = 0.299 R + 0.587 G + 0.114 B, quantized; gray input is copied.
ImageBuffer to_gray(const ImageBuffer& image);

/// Rounds half away from zero and clamps to [0, 255].
inline std::uint8_t quantize_unit(double value) {
  const double scaled = std::round(value * 255.0);
  return static_cast<std::uint8_t>(scaled < 0.0 ? 0.0 : (scaled > 255.0 ? 255.0 : scaled));
}

/// Planar C x H x W samples normalized by x / 255.
template <typename T>
std::vector<T> to_planar(const ImageBuffer& image) {
  std::vector<T> out(image.sample_count());
  const std::size_t area = image.width * image.height;
  for (std::size_t p = 0; p < area; ++p) {
    for (std::size_t c = 0; c < image.channels; ++c) {
      out[c * area + p] = static_cast<T>(image.pixels[p * image.channels + c]) / T(255);
    }
  }
  return out;
}

/// Inverse of to_planar with quantization.
template <typename T>
ImageBuffer from_planar(std::span<const T> planar, std::size_t width, std::size_t height,
                        std::size_t channels) {
  auto image = ImageBuffer::blank(width, height, channels);
  const std::size_t area = width * height;
  if (planar.size() != area * channels) {
    throw ImageError(ImageErrc::invalid_argument, "from_planar: sample count mismatch");
  }
  for (std::size_t p = 0; p < area; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      image.pixels[p * channels + c] = quantize_unit(static_cast<double>(planar[c * area + p]));
    }
  }
  return image;
}

}  // namespace mwdcnn
