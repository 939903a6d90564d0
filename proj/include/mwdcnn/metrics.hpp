#pragma once

// PSNR and SSIM on 8-bit images.

#include <string>
#include <vector>

#include "mwdcnn/image.hpp"

namespace mwdcnn {

inline constexpr double kPsnrCapDb = 100.0;

/// 10 log10(max^2 / mse), capped at 100 dB.
double psnr_from_mse(double mse, double max_value = 255.0);

/// Mean squared error over every sample. Throws ImageError on shape mismatch.
double mse(const ImageBuffer& a, const ImageBuffer& b);

double psnr(const ImageBuffer& a, const ImageBuffer& b, double max_value = 255.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;
};

/// Mean SSIM over every fully contained Gaussian window. Color images are
/// compared on their BT.601 luminance. Images smaller than the window are
/// rejected.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimOptions& options = {});

/// Unquantized BT.601 luminance, row-major.
std::vector<double> luminance(const ImageBuffer& image);

struct QualityRow {
  std::string image;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct QualityReport {
  std::vector<QualityRow> rows;

  void add(std::string image, double psnr_db, double ssim_value);
  double mean_psnr() const;
  double mean_ssim() const;
  /// `image,psnr_db,ssim`, one row per image, then a `MEAN` row.
  std::string csv() const;
};

}  // namespace mwdcnn
