#include "mwdcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"

namespace mwdcnn {
namespace {

// Stream tags for derive_key.
constexpr std::uint64_t kTagPlacement = 0x706c616365ULL;
constexpr std::uint64_t kTagAugment = 0x6175676dULL;
constexpr std::uint64_t kTagNoise = 0x6e6f697365ULL;
constexpr std::uint64_t kTagSigma = 0x7369676dULL;
constexpr std::uint64_t kTagScene = 0x7363656eULL;

ImageBuffer rotate_ccw(const ImageBuffer& in) {
  auto out = ImageBuffer::blank(in.height, in.width, in.channels);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t c = 0; c < in.channels; ++c) {
        out.at(x, y, c) = in.at(in.width - 1 - y, x, c);
      }
    }
  }
  return out;
}

ImageBuffer flip_horizontal(const ImageBuffer& in) {
  auto out = ImageBuffer::blank(in.width, in.height, in.channels);
  for (std::size_t y = 0; y < in.height; ++y) {
    for (std::size_t x = 0; x < in.width; ++x) {
      for (std::size_t c = 0; c < in.channels; ++c) out.at(x, y, c) = in.at(in.width - 1 - x, y, c);
    }
  }
  return out;
}

void check_mode(int mode) {
  if (mode < 0 || mode >= kAugmentationModes) {
    throw ImageError(ImageErrc::invalid_argument,
                     "augmentation mode must be in 0..7, got " + std::to_string(mode));
  }
}

}  // namespace

std::vector<PatchLocation> extract_patches(const ImageBuffer& image, std::size_t count,
                                           std::size_t size, std::uint64_t seed) {
  if (size == 0 || image.width < size || image.height < size) {
    throw ImageError(ImageErrc::invalid_argument,
                     "image of " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + " is smaller than a " +
                         std::to_string(size) + "x" + std::to_string(size) + " patch");
  }
  CounterRng rng(derive_key(seed, {kTagPlacement}));
  std::vector<PatchLocation> out(count);
  for (auto& loc : out) {
    loc.x = rng.below(image.width - size + 1);
    loc.y = rng.below(image.height - size + 1);
  }
  return out;
}

ImageBuffer crop(const ImageBuffer& image, std::size_t x, std::size_t y, std::size_t width,
                 std::size_t height) {
  if (x + width > image.width || y + height > image.height) {
    throw ImageError(ImageErrc::invalid_argument, "crop window exceeds image bounds");
  }
  auto out = ImageBuffer::blank(width, height, image.channels);
  const std::size_t row = width * image.channels;
  for (std::size_t r = 0; r < height; ++r) {
    const auto* src = image.pixels.data() + ((y + r) * image.width + x) * image.channels;
    std::copy(src, src + row, out.pixels.data() + r * row);
  }
  return out;
}

ImageBuffer augment(const ImageBuffer& image, int mode) {
  check_mode(mode);
  ImageBuffer out = image;
  for (int r = 0; r < mode % 4; ++r) out = rotate_ccw(out);
  if (mode >= 4) out = flip_horizontal(out);
  return out;
}

int inverse_augmentation(int mode) {
  check_mode(mode);
  // Reflections are involutions; rotations invert to the opposite turn.
  return mode >= 4 ? mode : (4 - mode) % 4;
}

int compose_augmentations(int first, int second) {
  check_mode(first);
  check_mode(second);
  // Mode m is F^f R^r with r = m % 4, f = m / 4, and F R = R^-1 F.
  const int r1 = first % 4, f1 = first / 4;
  const int r2 = second % 4, f2 = second / 4;
  const int r = ((r1 + (f1 ? -r2 : r2)) % 4 + 4) % 4;
  return ((f1 ^ f2) << 2) | r;
}

template <typename T>
void add_awgn(std::span<T> samples, double sigma, std::uint64_t key) {
  if (sigma < 0.0) throw std::invalid_argument("add_awgn: sigma must be non-negative");
  if (sigma == 0.0) return;
  CounterRng rng(key);
  const double scale = sigma / 255.0;
  for (auto& s : samples) s = static_cast<T>(static_cast<double>(s) + scale * rng.normal());
}

template void add_awgn(std::span<float>, double, std::uint64_t);
template void add_awgn(std::span<double>, double, std::uint64_t);

PatchDataset PatchDataset::build(std::vector<ImageBuffer> images, std::vector<std::string> names,
                                 std::size_t patches_per_image, std::size_t patch_size,
                                 NoiseRecipe noise, std::uint64_t seed) {
  if (images.empty()) throw ImageError(ImageErrc::invalid_argument, "no training images");
  if (names.size() != images.size()) names.resize(images.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].empty()) names[i] = "image" + std::to_string(i);
  }
  PatchDataset ds;
  ds.patch_size_ = patch_size;
  ds.channels_ = images.front().channels;
  ds.noise_ = noise;
  ds.seed_ = seed;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].channels != ds.channels_) {
      throw ImageError(ImageErrc::invalid_argument,
                       names[i] + ": channel count differs from the first training image");
    }
    const auto locations =
        extract_patches(images[i], patches_per_image, patch_size, derive_key(seed, {i}));
    for (const auto& loc : locations) {
      CounterRng pick(derive_key(seed, {kTagAugment, ds.records_.size()}));
      ds.records_.push_back({i, loc, static_cast<int>(pick.below(kAugmentationModes))});
    }
  }
  ds.images_ = std::move(images);
  ds.names_ = std::move(names);
  return ds;
}

template <typename T>
void PatchDataset::clean_into(std::size_t index, std::span<T> out) const {
  const auto& rec = records_.at(index);
  if (out.size() != patch_samples()) {
    throw std::invalid_argument("clean_into: output span has wrong size");
  }
  const auto patch = augment(crop(images_[rec.image], rec.location.x, rec.location.y,
                                  patch_size_, patch_size_),
                             rec.augmentation);
  const auto planar = to_planar<T>(patch);
  std::copy(planar.begin(), planar.end(), out.begin());
}

double PatchDataset::sigma(std::size_t index, std::uint64_t draw) const {
  if (noise_.mode == NoiseRecipe::Mode::fixed) return noise_.sigma;
  CounterRng rng(derive_key(seed_, {kTagSigma, index, draw}));
  return rng.uniform(noise_.blind_min, noise_.blind_max);
}

template <typename T>
void PatchDataset::noisy_into(std::size_t index, std::uint64_t draw, std::span<T> out) const {
  clean_into(index, out);
  add_awgn(out, sigma(index, draw), derive_key(seed_, {kTagNoise, index, draw}));
}

template void PatchDataset::clean_into(std::size_t, std::span<float>) const;
template void PatchDataset::clean_into(std::size_t, std::span<double>) const;
template void PatchDataset::noisy_into(std::size_t, std::uint64_t, std::span<float>) const;
template void PatchDataset::noisy_into(std::size_t, std::uint64_t, std::span<double>) const;

std::string PatchDataset::manifest() const {
  nlohmann::json doc;
  doc["seed"] = seed_;
  doc["patch_size"] = patch_size_;
  doc["channels"] = channels_;
  doc["noise"] = {
      {"mode", noise_.mode == NoiseRecipe::Mode::fixed ? "fixed" : "blind"},
      {"sigma", noise_.sigma},
      {"blind_range", {noise_.blind_min, noise_.blind_max}},
  };
  auto& patches = doc["patches"] = nlohmann::json::array();
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    patches.push_back({
        {"index", i},
        {"source", names_[r.image]},
        {"x", r.location.x},
        {"y", r.location.y},
        {"augmentation", r.augmentation},
        {"sigma", sigma(i, 0)},
    });
  }
  return doc.dump(2) + "\n";
}

ImageBuffer synthetic_scene(std::size_t width, std::size_t height, std::size_t channels,
                            std::uint64_t seed) {
  CounterRng rng(derive_key(seed, {kTagScene}));
  std::vector<double> canvas(width * height * channels);

  // Smooth background: a linear ramp per channel.
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double dx = std::cos(angle) / double(width), dy = std::sin(angle) / double(height);
  for (std::size_t c = 0; c < channels; ++c) {
    const double base = rng.uniform(40.0, 200.0);
    const double slope = rng.uniform(-80.0, 80.0);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        canvas[(y * width + x) * channels + c] = base + slope * (double(x) * dx + double(y) * dy);
      }
    }
  }

  // Flat shapes with hard edges.
  const std::size_t shapes = 6 + rng.below(6);
  for (std::size_t s = 0; s < shapes; ++s) {
    const bool ellipse = rng.uniform() < 0.5;
    const double cx = rng.uniform(0.0, double(width)), cy = rng.uniform(0.0, double(height));
    const double rx = rng.uniform(0.05, 0.3) * double(width);
    const double ry = rng.uniform(0.05, 0.3) * double(height);
    std::vector<double> color(channels);
    for (auto& v : color) v = rng.uniform(10.0, 245.0);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double u = (double(x) - cx) / rx, v = (double(y) - cy) / ry;
        const bool inside = ellipse ? (u * u + v * v <= 1.0) : (std::abs(u) <= 1.0 && std::abs(v) <= 1.0);
        if (!inside) continue;
        for (std::size_t c = 0; c < channels; ++c) canvas[(y * width + x) * channels + c] = color[c];
      }
    }
  }

  // Low-amplitude oriented texture.
  const double fx = rng.uniform(0.05, 0.4), fy = rng.uniform(0.05, 0.4);
  const double amplitude = rng.uniform(3.0, 10.0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double t = amplitude * std::sin(fx * double(x) + fy * double(y));
      for (std::size_t c = 0; c < channels; ++c) canvas[(y * width + x) * channels + c] += t;
    }
  }

  auto out = ImageBuffer::blank(width, height, channels);
  for (std::size_t i = 0; i < canvas.size(); ++i) out.pixels[i] = quantize_unit(canvas[i] / 255.0);
  return out;
}

}  // namespace mwdcnn
