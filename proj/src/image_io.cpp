#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mwdcnn/image.hpp"

namespace mwdcnn {
namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && std::equal(kPngSignature, kPngSignature + 8, bytes.begin());
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes, const std::string& origin) {
  // IHDR is always the first chunk: length, "IHDR", width, height, depth, color type.
  // The simplified libpng API hides the source bit depth, so check it here.
  if (bytes.size() < 33 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
    throw ImageError(ImageErrc::unsupported_format, origin + ": malformed PNG header");
  }
  const int bit_depth = bytes[24];
  const int color_type = bytes[25];
  if (bit_depth != 8) {
    throw ImageError(ImageErrc::unsupported_bit_depth,
                     origin + ": PNG bit depth " + std::to_string(bit_depth) +
                         " is not supported (8-bit only)");
  }
  if (read_be32(bytes.data() + 16) == 0 || read_be32(bytes.data() + 20) == 0) {
    throw ImageError(ImageErrc::unsupported_format, origin + ": empty PNG image");
  }
  const bool gray = color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA;

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw ImageError(ImageErrc::unsupported_format,
                     origin + ": cannot decode PNG (" + image.message + ")");
  }
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  auto out = ImageBuffer::blank(image.width, image.height, gray ? 1 : 3);
  // Composite any alpha over black so samples stay unscaled where opaque.
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&image, &background, out.pixels.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw ImageError(ImageErrc::unsupported_format, origin + ": cannot decode PNG (" + message + ")");
  }
  return out;
}

// Skips whitespace and '#' comments, then reads an unsigned decimal.
std::size_t read_pnm_number(std::span<const std::uint8_t> bytes, std::size_t& pos,
                            const std::string& origin) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
    throw ImageError(ImageErrc::unsupported_format, origin + ": malformed PNM header");
  }
  std::size_t value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > (std::size_t(1) << 31)) {
      throw ImageError(ImageErrc::unsupported_format, origin + ": PNM dimension too large");
    }
    ++pos;
  }
  return value;
}

ImageBuffer decode_pnm(std::span<const std::uint8_t> bytes, const std::string& origin) {
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const std::size_t width = read_pnm_number(bytes, pos, origin);
  const std::size_t height = read_pnm_number(bytes, pos, origin);
  const std::size_t maxval = read_pnm_number(bytes, pos, origin);
  if (maxval > 255) {
    throw ImageError(ImageErrc::unsupported_bit_depth,
                     origin + ": PNM maxval " + std::to_string(maxval) + " implies 16-bit samples");
  }
  if (maxval != 255) {
    throw ImageError(ImageErrc::unsupported_format,
                     origin + ": PNM maxval " + std::to_string(maxval) + " (only 255 supported)");
  }
  if (width == 0 || height == 0) {
    throw ImageError(ImageErrc::unsupported_format, origin + ": empty PNM image");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw ImageError(ImageErrc::unsupported_format, origin + ": malformed PNM header");
  }
  ++pos;  // single whitespace before the raster
  auto out = ImageBuffer::blank(width, height, channels);
  if (bytes.size() - pos < out.sample_count()) {
    throw ImageError(ImageErrc::unreadable, origin + ": PNM raster is truncated");
  }
  std::copy_n(bytes.begin() + pos, out.sample_count(), out.pixels.begin());
  return out;
}

std::string lower_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

void validate(const ImageBuffer& image) {
  if ((image.channels != 1 && image.channels != 3) || image.width == 0 || image.height == 0 ||
      image.pixels.size() != image.sample_count()) {
    throw ImageError(ImageErrc::invalid_argument, "invalid image buffer");
  }
}

}  // namespace

ImageBuffer ImageBuffer::blank(std::size_t width, std::size_t height, std::size_t channels) {
  ImageBuffer image;
  image.width = width;
  image.height = height;
  image.channels = channels;
  image.pixels.assign(width * height * channels, 0);
  return image;
}

ImageBuffer to_gray(const ImageBuffer& image) {
  if (image.channels == 1) return image;
  validate(image);
  auto out = ImageBuffer::blank(image.width, image.height, 1);
  for (std::size_t p = 0; p < out.pixels.size(); ++p) {
    const auto* rgb = image.pixels.data() + 3 * p;
    const double y = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
    out.pixels[p] = quantize_unit(y / 255.0);
  }
  return out;
}

ImageBuffer decode_image(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (is_png(bytes)) return decode_png(bytes, origin);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return decode_pnm(bytes, origin);
  }
  throw ImageError(ImageErrc::unsupported_format,
                   origin + ": not a PNG, binary PGM (P5) or binary PPM (P6) file");
}

ImageBuffer load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(ImageErrc::unreadable, path.string() + ": cannot open file");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw ImageError(ImageErrc::unreadable, path.string() + ": read failed");
  return decode_image(bytes, path.string());
}

std::vector<std::uint8_t> encode_pnm(const ImageBuffer& image) {
  validate(image);
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
  validate(image);
  png_image info;
  std::memset(&info, 0, sizeof(info));
  info.version = PNG_IMAGE_VERSION;
  info.width = static_cast<png_uint_32>(image.width);
  info.height = static_cast<png_uint_32>(image.height);
  info.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&info, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw ImageError(ImageErrc::write_failed, std::string("PNG encode failed: ") + info.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&info, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw ImageError(ImageErrc::write_failed, std::string("PNG encode failed: ") + info.message);
  }
  out.resize(size);
  return out;
}

void save_image(const ImageBuffer& image, const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  std::vector<std::uint8_t> bytes;
  if (ext == ".png") {
    bytes = encode_png(image);
  } else if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    if ((ext == ".pgm" && image.channels != 1) || (ext == ".ppm" && image.channels != 3)) {
      throw ImageError(ImageErrc::invalid_argument,
                       path.string() + ": extension does not match channel count");
    }
    bytes = encode_pnm(image);
  } else {
    throw ImageError(ImageErrc::unsupported_format,
                     path.string() + ": unsupported output extension (use .png, .pgm or .ppm)");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError(ImageErrc::write_failed, path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw ImageError(ImageErrc::write_failed, path.string() + ": write failed");
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw ImageError(ImageErrc::unreadable, dir.string() + ": not a readable directory");
  }
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = lower_extension(entry.path());
    if (ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mwdcnn
