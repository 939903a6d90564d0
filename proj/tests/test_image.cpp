#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "doctest.h"
#include "mwdcnn/data.hpp"
#include "mwdcnn/image.hpp"

using namespace mwdcnn;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

ImageErrc error_of(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_image(bytes, "test");
  } catch (const ImageError& e) {
    return e.code();
  }
  FAIL("decode unexpectedly succeeded");
  return ImageErrc::invalid_argument;
}

// 4x4 gray checker of 2x2 blocks, encoded independently with zlib.
const std::vector<std::uint8_t> kCheckerPng{
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44,
    0x52, 0x00, 0x00, 0x00, 0x04, 0x00, 0x00, 0x00, 0x04, 0x08, 0x00, 0x00, 0x00, 0x00, 0x8c,
    0x9a, 0xc1, 0xa2, 0x00, 0x00, 0x00, 0x12, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x60,
    0x60, 0xf8, 0xff, 0x9f, 0x01, 0x4c, 0xc0, 0x68, 0x06, 0x00, 0x4f, 0xc4, 0x07, 0xf9, 0xd4,
    0x67, 0x42, 0x06, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("mwdcnn_img_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("2x2 binary PGM") {
  auto bytes = bytes_of("P5\n2 2\n255\n");
  for (std::uint8_t v : {0, 255, 128, 64}) bytes.push_back(v);
  const auto img = decode_image(bytes, "inline");
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.channels == 1);
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 255, 128, 64});
  CHECK(encode_pnm(img) == bytes);
}

TEST_CASE("PNM headers may carry comments") {
  auto bytes = bytes_of("P6 # rgb\n1 # width\n1\n255\n");
  for (std::uint8_t v : {1, 2, 3}) bytes.push_back(v);
  const auto img = decode_image(bytes, "inline");
  CHECK(img.channels == 3);
  CHECK(img.pixels == std::vector<std::uint8_t>{1, 2, 3});
}

TEST_CASE("independently encoded PNG matches the PGM equivalent") {
  auto pgm = bytes_of("P5 4 4 255\n");
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) pgm.push_back((x / 2 + y / 2) % 2 ? 255 : 0);
  }
  const auto from_png = decode_image(kCheckerPng, "checker.png");
  CHECK(from_png == decode_image(pgm, "checker.pgm"));
  CHECK(from_png.at(2, 0) == 255);
  CHECK(from_png.at(2, 2) == 0);
}

TEST_CASE("PNG and PNM round trips for gray and RGB") {
  for (std::size_t c : {1u, 3u}) {
    const auto img = synthetic_scene(13, 7, c, 4);
    CHECK(decode_image(encode_png(img), "rt.png") == img);
    CHECK(decode_image(encode_pnm(img), "rt.pnm") == img);
  }
}

TEST_CASE("files on disk: extension picks the format and listing is sorted") {
  TempDir dir;
  const auto gray = synthetic_scene(10, 6, 1, 1);
  const auto rgb = synthetic_scene(6, 10, 3, 2);
  save_image(gray, dir.path / "b.png");
  save_image(gray, dir.path / "a.pgm");
  save_image(rgb, dir.path / "c.ppm");
  save_image(rgb, dir.path / "d.pnm");
  std::ofstream(dir.path / "notes.txt") << "x";
  CHECK(load_image(dir.path / "b.png") == gray);
  CHECK(load_image(dir.path / "a.pgm") == gray);
  CHECK(load_image(dir.path / "d.pnm") == rgb);
  const auto listed = list_images(dir.path);
  REQUIRE(listed.size() == 4);
  CHECK(listed[0].filename() == "a.pgm");
  CHECK(listed[3].filename() == "d.pnm");
  CHECK_THROWS_AS(save_image(gray, dir.path / "x.jpg"), ImageError);
  CHECK_THROWS_AS(save_image(rgb, dir.path / "x.pgm"), ImageError);
}

TEST_CASE("16-bit sources are rejected") {
  auto png = kCheckerPng;
  png[24] = 16;
  CHECK(error_of(png) == ImageErrc::unsupported_bit_depth);
  auto pgm = bytes_of("P5\n1 1\n65535\n");
  pgm.push_back(0);
  pgm.push_back(0);
  CHECK(error_of(pgm) == ImageErrc::unsupported_bit_depth);
}

TEST_CASE("malformed input error codes") {
  CHECK(error_of(bytes_of("GIF89a")) == ImageErrc::unsupported_format);
  CHECK(error_of(bytes_of("P5\n2 2\n")) == ImageErrc::unsupported_format);
  CHECK(error_of(bytes_of("P5\n2 2\n100\n....")) == ImageErrc::unsupported_format);
  CHECK(error_of(bytes_of("P5\n2 2\n255\n..")) == ImageErrc::unreadable);
  auto png = kCheckerPng;
  png.resize(50);
  CHECK(error_of(png) == ImageErrc::unsupported_format);
  try {
    load_image("/nonexistent/file.png");
    FAIL("expected ImageError");
  } catch (const ImageError& e) {
    CHECK(e.code() == ImageErrc::unreadable);
  }
}

TEST_CASE("planar conversion and quantization") {
  const auto img = synthetic_scene(5, 4, 3, 8);
  const auto planar = to_planar<double>(img);
  CHECK(planar[0] == img.at(0, 0, 0) / 255.0);
  CHECK(planar[20] == img.at(0, 0, 1) / 255.0);
  CHECK(from_planar<double>(planar, 5, 4, 3) == img);
  CHECK(quantize_unit(-0.5) == 0);
  CHECK(quantize_unit(2.0) == 255);
  CHECK(quantize_unit(0.5) == 128);
  CHECK_THROWS_AS(from_planar<double>(planar, 5, 4, 1), ImageError);
}

TEST_CASE("luminance conversion") {
  auto rgb = ImageBuffer::blank(2, 1, 3);
  rgb.pixels = {255, 0, 0, 10, 200, 30};
  const auto gray = to_gray(rgb);
  CHECK(gray.channels == 1);
  CHECK(gray.pixels[0] == 76);   // 0.299 * 255 = 76.245
  CHECK(gray.pixels[1] == 124);  // 2.99 + 117.4 + 3.42 = 123.81
  const auto g = synthetic_scene(4, 4, 1, 3);
  CHECK(to_gray(g) == g);
}
