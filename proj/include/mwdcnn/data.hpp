#pragma once

// Training data: seeded patch extraction, dihedral augmentation and additive
// white Gaussian noise. Every random choice is drawn from a counter-based
// stream keyed by (seed, purpose, index), so any patch can be regenerated on
// its own.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mwdcnn/image.hpp"
#include "mwdcnn/rng.hpp"

namespace mwdcnn {

struct PatchLocation {
  std::size_t x = 0;
  std::size_t y = 0;
  bool operator==(const PatchLocation&) const = default;
};

/// `count` uniformly placed top-left corners of size x size patches.
/// Throws ImageError(invalid_argument) when the image is smaller than a patch.
std::vector<PatchLocation> extract_patches(const ImageBuffer& image, std::size_t count,
                                           std::size_t size, std::uint64_t seed);

ImageBuffer crop(const ImageBuffer& image, std::size_t x, std::size_t y, std::size_t width,
                 std::size_t height);

/// The eight elements of the dihedral group of the square. Mode r in 0..3
/// rotates counter-clockwise by r quarter turns; mode 4 + r applies that
/// rotation and then a horizontal flip.
constexpr int kAugmentationModes = 8;

ImageBuffer augment(const ImageBuffer& image, int mode);

/// Mode whose transform undoes `mode`.
int inverse_augmentation(int mode);

/// Mode equivalent to applying `first` and then `second`.
int compose_augmentations(int first, int second);

/// noisy = clean + sigma / 255 * N(0, 1), i.i.d. per sample, unclipped.
/// `sigma` is on the 8-bit scale.
template <typename T>
void add_awgn(std::span<T> samples, double sigma, std::uint64_t key);

template <typename T>
std::vector<T> add_awgn(std::span<const T> clean, double sigma, std::uint64_t key) {
  std::vector<T> out(clean.begin(), clean.end());
  add_awgn<T>(std::span<T>(out), sigma, key);
  return out;
}

struct NoiseRecipe {
  enum class Mode { fixed, blind };
  Mode mode = Mode::fixed;
  double sigma = 25.0;
  double blind_min = 0.0;
  double blind_max = 55.0;

  static NoiseRecipe fixed_sigma(double sigma) { return {Mode::fixed, sigma, 0.0, 55.0}; }
  static NoiseRecipe blind(double lo = 0.0, double hi = 55.0) { return {Mode::blind, 0.0, lo, hi}; }
};

struct PatchRecord {
  std::size_t image = 0;
  PatchLocation location;
  int augmentation = 0;
};

class PatchDataset {
 public:
  /// Cuts `patches_per_image` patches from each image. Images must share a
  /// channel count.
  static PatchDataset build(std::vector<ImageBuffer> images, std::vector<std::string> names,
                            std::size_t patches_per_image, std::size_t patch_size,
                            NoiseRecipe noise, std::uint64_t seed);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t patch_size() const { return patch_size_; }
  std::size_t channels() const { return channels_; }
  std::size_t patch_samples() const { return channels_ * patch_size_ * patch_size_; }
  std::uint64_t seed() const { return seed_; }
  const NoiseRecipe& noise() const { return noise_; }
  const PatchRecord& record(std::size_t index) const { return records_.at(index); }
  const std::vector<std::string>& image_names() const { return names_; }

  /// Clean augmented patch as planar C x S x S in [0, 1].
  template <typename T>
  void clean_into(std::size_t index, std::span<T> out) const;

  /// Noise level of patch `index` for noise draw `draw`.
  double sigma(std::size_t index, std::uint64_t draw = 0) const;

  /// Clean patch plus its Gaussian noise for draw `draw`.
  template <typename T>
  void noisy_into(std::size_t index, std::uint64_t draw, std::span<T> out) const;

  /// JSON listing of every patch: source, coordinate, augmentation, sigma of
  /// draw 0, and the dataset seed.
  std::string manifest() const;

 private:
  std::vector<ImageBuffer> images_;
  std::vector<std::string> names_;
  std::vector<PatchRecord> records_;
  std::size_t patch_size_ = 48;
  std::size_t channels_ = 1;
  NoiseRecipe noise_;
  std::uint64_t seed_ = 0;
};

/// Deterministic procedural scene (smooth shading, flat shapes, a little
/// texture) for demos and tests when no photographs are at hand.
ImageBuffer synthetic_scene(std::size_t width, std::size_t height, std::size_t channels,
                            std::uint64_t seed);

}  // namespace mwdcnn
