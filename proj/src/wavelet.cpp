#include "mwdcnn/wavelet.hpp"

#include <string>
#include <vector>

namespace mwdcnn {
namespace {

struct Layout {
  std::size_t batch;
  std::size_t channels;  // source channels C
  std::size_t half_h;
  std::size_t half_w;
};

// Image-domain N x C x 2h x 2w -> subbands N x 4C x h x w, accumulated into out.
template <typename T>
void analysis_add(const Layout& l, const T* x, T* out) {
  const std::size_t w2 = 2 * l.half_w;
  const std::size_t band_area = l.half_h * l.half_w;
  for (std::size_t n = 0; n < l.batch; ++n) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const T* plane = x + (n * l.channels + c) * 4 * band_area;
      T* base = out + n * 4 * l.channels * band_area;
      T* ll = base + subband_channel(Subband::LL, c, l.channels) * band_area;
      T* lh = base + subband_channel(Subband::LH, c, l.channels) * band_area;
      T* hl = base + subband_channel(Subband::HL, c, l.channels) * band_area;
      T* hh = base + subband_channel(Subband::HH, c, l.channels) * band_area;
      for (std::size_t i = 0; i < l.half_h; ++i) {
        const T* top = plane + (2 * i) * w2;
        const T* bottom = top + w2;
        for (std::size_t j = 0; j < l.half_w; ++j) {
          const T a = top[2 * j], b = top[2 * j + 1];
          const T c2 = bottom[2 * j], d = bottom[2 * j + 1];
          const std::size_t o = i * l.half_w + j;
          ll[o] += (a + b + c2 + d) / T(2);
          lh[o] += (-a - b + c2 + d) / T(2);
          hl[o] += (-a + b - c2 + d) / T(2);
          hh[o] += (a - b - c2 + d) / T(2);
        }
      }
    }
  }
}

// Subbands N x 4C x h x w -> image domain N x C x 2h x 2w, accumulated into out.
template <typename T>
void synthesis_add(const Layout& l, const T* bands, T* out) {
  const std::size_t w2 = 2 * l.half_w;
  const std::size_t band_area = l.half_h * l.half_w;
  for (std::size_t n = 0; n < l.batch; ++n) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      T* plane = out + (n * l.channels + c) * 4 * band_area;
      const T* base = bands + n * 4 * l.channels * band_area;
      const T* ll = base + subband_channel(Subband::LL, c, l.channels) * band_area;
      const T* lh = base + subband_channel(Subband::LH, c, l.channels) * band_area;
      const T* hl = base + subband_channel(Subband::HL, c, l.channels) * band_area;
      const T* hh = base + subband_channel(Subband::HH, c, l.channels) * band_area;
      for (std::size_t i = 0; i < l.half_h; ++i) {
        T* top = plane + (2 * i) * w2;
        T* bottom = top + w2;
        for (std::size_t j = 0; j < l.half_w; ++j) {
          const std::size_t o = i * l.half_w + j;
          const T s = ll[o], v = lh[o], h = hl[o], d = hh[o];
          top[2 * j] += (s - v - h + d) / T(2);
          top[2 * j + 1] += (s - v + h - d) / T(2);
          bottom[2 * j] += (s + v - h - d) / T(2);
          bottom[2 * j + 1] += (s + v + h + d) / T(2);
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> dwt2d(const Tensor<T>& input) {
  if (input.rank() != 4) {
    throw ShapeError("dwt2d: expected N x C x H x W, got " + shape_string(input.shape()));
  }
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("dwt2d: height and width must be even, got " + std::to_string(h) + "x" +
                     std::to_string(w) + "; pad the input to even size first");
  }
  const Layout l{input.dim(0), input.dim(1), h / 2, w / 2};
  std::vector<T> out(input.numel(), T(0));
  analysis_add(l, input.data().data(), out.data());
  return make_result<T>("dwt2d", Shape{l.batch, 4 * l.channels, l.half_h, l.half_w},
                        std::move(out), {input},
                        [l](std::span<const T> gy, detail::GradSink<T>& sink) {
                          synthesis_add(l, gy.data(), sink[0].data());
                        });
}

template <typename T>
Tensor<T> idwt2d(const Tensor<T>& subbands) {
  if (subbands.rank() != 4) {
    throw ShapeError("idwt2d: expected N x 4C x h x w, got " + shape_string(subbands.shape()));
  }
  if (subbands.dim(1) % 4 != 0) {
    throw ShapeError("idwt2d: channel count " + std::to_string(subbands.dim(1)) +
                     " is not divisible by 4");
  }
  const Layout l{subbands.dim(0), subbands.dim(1) / 4, subbands.dim(2), subbands.dim(3)};
  std::vector<T> out(subbands.numel(), T(0));
  synthesis_add(l, subbands.data().data(), out.data());
  return make_result<T>("idwt2d", Shape{l.batch, l.channels, 2 * l.half_h, 2 * l.half_w},
                        std::move(out), {subbands},
                        [l](std::span<const T> gy, detail::GradSink<T>& sink) {
                          analysis_add(l, gy.data(), sink[0].data());
                        });
}

template Tensor<float> dwt2d(const Tensor<float>&);
template Tensor<double> dwt2d(const Tensor<double>&);
template Tensor<float> idwt2d(const Tensor<float>&);
template Tensor<double> idwt2d(const Tensor<double>&);

}  // namespace mwdcnn
