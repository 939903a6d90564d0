#include "mwdcnn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace mwdcnn {
namespace {

void require_same_geometry(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels ||
      a.pixels.size() != a.sample_count() || b.pixels.size() != b.sample_count()) {
    throw ImageError(ImageErrc::invalid_argument,
                     std::string(what) + ": images differ in size (" + std::to_string(a.width) +
                         "x" + std::to_string(a.height) + "x" + std::to_string(a.channels) +
                         " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                         std::to_string(b.channels) + ")");
  }
}

std::vector<double> gaussian_taps(std::size_t size, double sigma) {
  std::vector<double> taps(size);
  const double center = double(size - 1) / 2.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = double(i) - center;
    taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (auto& t : taps) t /= total;
  return taps;
}

// Separable "valid" filtering: output is (w - k + 1) x (h - k + 1).
std::vector<double> filter_valid(const std::vector<double>& in, std::size_t w, std::size_t h,
                                 const std::vector<double>& taps) {
  const std::size_t k = taps.size();
  const std::size_t ow = w - k + 1, oh = h - k + 1;
  std::vector<double> rows(ow * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += taps[i] * in[y * w + x + i];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += taps[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

double psnr_from_mse(double mse_value, double max_value) {
  if (mse_value <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(max_value * max_value / mse_value));
}

double mse(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_geometry(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    acc += d * d;
  }
  return acc / double(a.pixels.size());
}

double psnr(const ImageBuffer& a, const ImageBuffer& b, double max_value) {
  return psnr_from_mse(mse(a, b), max_value);
}

std::vector<double> luminance(const ImageBuffer& image) {
  const std::size_t area = image.width * image.height;
  std::vector<double> out(area);
  for (std::size_t p = 0; p < area; ++p) {
    if (image.channels == 1) {
      out[p] = image.pixels[p];
    } else {
      const auto* rgb = image.pixels.data() + 3 * p;
      out[p] = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
    }
  }
  return out;
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimOptions& opt) {
  require_same_geometry(a, b, "ssim");
  if (a.width < opt.window || a.height < opt.window) {
    throw ImageError(ImageErrc::invalid_argument,
                     "ssim: images must be at least " + std::to_string(opt.window) + " pixels on each side");
  }
  if (a.pixels == b.pixels) return 1.0;
  const auto x = luminance(a), y = luminance(b);
  const std::size_t w = a.width, h = a.height;
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto taps = gaussian_taps(opt.window, opt.sigma);
  const auto mx = filter_valid(x, w, h, taps), my = filter_valid(y, w, h, taps);
  const auto sxx = filter_valid(xx, w, h, taps), syy = filter_valid(yy, w, h, taps);
  const auto sxy = filter_valid(xy, w, h, taps);
  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / double(mx.size());
}

void QualityReport::add(std::string image, double psnr_db, double ssim_value) {
  rows.push_back({std::move(image), psnr_db, ssim_value});
}

double QualityReport::mean_psnr() const {
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& r : rows) acc += r.psnr_db;
  return acc / double(rows.size());
}

double QualityReport::mean_ssim() const {
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& r : rows) acc += r.ssim;
  return acc / double(rows.size());
}

std::string QualityReport::csv() const {
  std::string out = "image,psnr_db,ssim\n";
  for (const auto& r : rows) out += r.image + ',' + fixed(r.psnr_db, 4) + ',' + fixed(r.ssim, 6) + '\n';
  out += "MEAN," + fixed(mean_psnr(), 4) + ',' + fixed(mean_ssim(), 6) + '\n';
  return out;
}

}  // namespace mwdcnn
