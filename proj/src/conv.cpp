#include "conv.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "mwdcnn/kernels.hpp"
#include "mwdcnn/ops.hpp"

namespace mwdcnn {
namespace {
std::atomic<ConvAlgorithm> g_algorithm{ConvAlgorithm::gemm};
}  // namespace

void set_conv_algorithm(ConvAlgorithm algo) { g_algorithm.store(algo); }
ConvAlgorithm conv_algorithm() { return g_algorithm.load(); }

}  // namespace mwdcnn

namespace mwdcnn::conv {
namespace {

using kernels::Trans;

// Upper bound on the im2col buffer, in elements.
constexpr std::size_t kColumnBudget = std::size_t(1) << 19;

template <typename T>
void forward_direct(const Geometry& g, const T* x, const T* w, const T* b, T* y) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = b ? b[o] : T(0);
        for (std::size_t c = 0; c < g.in_channels; ++c) {
          for (std::size_t dy = 0; dy < k; ++dy) {
            const std::ptrdiff_t iy = std::ptrdiff_t(oy + dy) - std::ptrdiff_t(g.padding);
            if (iy < 0 || iy >= std::ptrdiff_t(g.height)) continue;
            for (std::size_t dx = 0; dx < k; ++dx) {
              const std::ptrdiff_t ix = std::ptrdiff_t(ox + dx) - std::ptrdiff_t(g.padding);
              if (ix < 0 || ix >= std::ptrdiff_t(g.width)) continue;
              acc += x[(c * g.height + iy) * g.width + ix] *
                     w[((o * g.in_channels + c) * k + dy) * k + dx];
            }
          }
        }
        y[(o * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

template <typename T>
void backward_direct(const Geometry& g, const T* x, const T* w, const T* gy, T* gx, T* gw,
                     T* gb) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T go = gy[(o * oh + oy) * ow + ox];
        if (gb) gb[o] += go;
        for (std::size_t c = 0; c < g.in_channels; ++c) {
          for (std::size_t dy = 0; dy < k; ++dy) {
            const std::ptrdiff_t iy = std::ptrdiff_t(oy + dy) - std::ptrdiff_t(g.padding);
            if (iy < 0 || iy >= std::ptrdiff_t(g.height)) continue;
            for (std::size_t dx = 0; dx < k; ++dx) {
              const std::ptrdiff_t ix = std::ptrdiff_t(ox + dx) - std::ptrdiff_t(g.padding);
              if (ix < 0 || ix >= std::ptrdiff_t(g.width)) continue;
              const std::size_t xi = (c * g.height + iy) * g.width + ix;
              const std::size_t wi = ((o * g.in_channels + c) * k + dy) * k + dx;
              if (gw) gw[wi] += go * x[xi];
              if (gx) gx[xi] += go * w[wi];
            }
          }
        }
      }
    }
  }
}

// Visits the output pixels [p0, p1) of one im2col row as contiguous runs
// within a single output row: fn(offset_in_chunk, count, source_row or -1,
// first_source_column). Source columns outside the image are reported with
// their (possibly negative) coordinate; callers clip.
template <typename Fn>
void for_each_run(const Geometry& g, std::size_t dy, std::size_t p0, std::size_t p1, Fn&& fn) {
  const std::size_t ow = g.out_width();
  std::size_t p = p0;
  while (p < p1) {
    const std::size_t oy = p / ow;
    const std::size_t ox0 = p % ow;
    const std::size_t run = std::min(p1 - p, ow - ox0);
    const std::ptrdiff_t iy = std::ptrdiff_t(oy + dy) - std::ptrdiff_t(g.padding);
    fn(p - p0, run, iy, ox0);
    p += run;
  }
}

// Offsets i in [0, run) whose source column ox0 + i + dx - padding lies
// inside the image.
std::pair<std::size_t, std::size_t> valid_span(const Geometry& g, std::size_t ox0,
                                               std::size_t dx, std::size_t run) {
  const std::ptrdiff_t first = std::ptrdiff_t(ox0 + dx) - std::ptrdiff_t(g.padding);
  const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-first, 0, std::ptrdiff_t(run));
  const std::ptrdiff_t hi =
      std::clamp<std::ptrdiff_t>(std::ptrdiff_t(g.width) - first, lo, std::ptrdiff_t(run));
  return {std::size_t(lo), std::size_t(hi)};
}

template <typename T>
void im2col_runs(const Geometry& g, const T* x, std::size_t p0, std::size_t p1, T* col) {
  const std::size_t len = p1 - p0, k = g.kernel;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (std::size_t dy = 0; dy < k; ++dy) {
      for (std::size_t dx = 0; dx < k; ++dx) {
        T* row = col + ((c * k + dy) * k + dx) * len;
        for_each_run(g, dy, p0, p1,
                     [&](std::size_t off, std::size_t run, std::ptrdiff_t iy, std::size_t ox0) {
                       T* dst = row + off;
                       if (iy < 0 || iy >= std::ptrdiff_t(g.height)) {
                         for (std::size_t i = 0; i < run; ++i) dst[i] = T(0);
                         return;
                       }
                       const auto [lo, hi] = valid_span(g, ox0, dx, run);
                       const T* src = plane + iy * g.width;
                       const std::ptrdiff_t first = std::ptrdiff_t(ox0 + dx) - std::ptrdiff_t(g.padding);
                       for (std::size_t i = 0; i < lo; ++i) dst[i] = T(0);
                       for (std::size_t i = lo; i < hi; ++i) dst[i] = src[first + std::ptrdiff_t(i)];
                       for (std::size_t i = hi; i < run; ++i) dst[i] = T(0);
                     });
      }
    }
  }
}

template <typename T>
void col2im_add_runs(const Geometry& g, const T* col, std::size_t p0, std::size_t p1, T* gx) {
  const std::size_t len = p1 - p0, k = g.kernel;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = gx + c * g.height * g.width;
    for (std::size_t dy = 0; dy < k; ++dy) {
      for (std::size_t dx = 0; dx < k; ++dx) {
        const T* row = col + ((c * k + dy) * k + dx) * len;
        for_each_run(g, dy, p0, p1,
                     [&](std::size_t off, std::size_t run, std::ptrdiff_t iy, std::size_t ox0) {
                       if (iy < 0 || iy >= std::ptrdiff_t(g.height)) return;
                       const auto [lo, hi] = valid_span(g, ox0, dx, run);
                       T* dst = plane + iy * g.width;
                       const std::ptrdiff_t first = std::ptrdiff_t(ox0 + dx) - std::ptrdiff_t(g.padding);
                       const T* src = row + off;
                       for (std::size_t i = lo; i < hi; ++i) dst[first + std::ptrdiff_t(i)] += src[i];
                     });
      }
    }
  }
}

// For a convolution whose columns fit in one chunk, the source index of
// every column entry (-1 on padding). Small images go through the same
// geometries over and over, so the tables are cached per thread.
const std::vector<std::int32_t>& column_index(const Geometry& g) {
  using Key = std::array<std::size_t, 5>;
  thread_local std::map<Key, std::vector<std::int32_t>> cache;
  thread_local std::size_t cached = 0;
  const Key key{g.in_channels, g.height, g.width, g.kernel, g.padding};
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const std::size_t k = g.kernel, pixels = g.out_height() * g.out_width();
  std::vector<std::int32_t> index(g.in_channels * k * k * pixels, -1);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t dy = 0; dy < k; ++dy) {
      for (std::size_t dx = 0; dx < k; ++dx) {
        std::int32_t* row = index.data() + ((c * k + dy) * k + dx) * pixels;
        for_each_run(g, dy, 0, pixels,
                     [&](std::size_t off, std::size_t run, std::ptrdiff_t iy, std::size_t ox0) {
                       if (iy < 0 || iy >= std::ptrdiff_t(g.height)) return;
                       const auto [lo, hi] = valid_span(g, ox0, dx, run);
                       const std::ptrdiff_t base = std::ptrdiff_t((c * g.height + iy) * g.width +
                                                                  ox0 + dx) -
                                                   std::ptrdiff_t(g.padding);
                       for (std::size_t i = lo; i < hi; ++i) {
                         row[off + i] = std::int32_t(base + std::ptrdiff_t(i));
                       }
                     });
      }
    }
  }
  constexpr std::size_t kCacheBudget = std::size_t(1) << 23;
  if (cached + index.size() > kCacheBudget) {
    cache.clear();
    cached = 0;
  }
  cached += index.size();
  return cache.emplace(key, std::move(index)).first->second;
}

bool whole_image(const Geometry& g, std::size_t p0, std::size_t p1) {
  return p0 == 0 && p1 == g.out_height() * g.out_width() &&
         g.in_channels * g.height * g.width < (std::size_t(1) << 31);
}

template <typename T>
void im2col(const Geometry& g, const T* x, std::size_t p0, std::size_t p1, T* col) {
  if (!whole_image(g, p0, p1)) return im2col_runs(g, x, p0, p1, col);
  const auto& index = column_index(g);
  for (std::size_t j = 0; j < index.size(); ++j) col[j] = index[j] < 0 ? T(0) : x[index[j]];
}

template <typename T>
void col2im_add(const Geometry& g, const T* col, std::size_t p0, std::size_t p1, T* gx) {
  if (!whole_image(g, p0, p1)) return col2im_add_runs(g, col, p0, p1, gx);
  const auto& index = column_index(g);
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] >= 0) gx[index[j]] += col[j];
  }
}

// Scratch buffers only grow, so alternating layer sizes do not refill them.
template <typename T>
void reserve_at_least(std::vector<T>& buffer, std::size_t size) {
  if (buffer.size() < size) buffer.resize(size);
}

bool is_pointwise(const Geometry& g) { return g.kernel == 1 && g.padding == 0; }

std::size_t chunk_length(const Geometry& g) {
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  const std::size_t pixels = g.out_height() * g.out_width();
  return std::min(pixels, std::max<std::size_t>(16, kColumnBudget / std::max<std::size_t>(rows, 1)));
}

template <typename T>
void forward_gemm(const Geometry& g, const T* x, const T* w, const T* b, T* y) {
  const std::size_t pixels = g.out_height() * g.out_width();
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  if (is_pointwise(g)) {
    kernels::gemm<T>(Trans::no, Trans::no, g.out_channels, pixels, rows, w, rows, x, pixels,
                     T(0), y, pixels);
  } else {
    thread_local std::vector<T> col;
    const std::size_t chunk = chunk_length(g);
    reserve_at_least(col, rows * chunk);
    for (std::size_t p0 = 0; p0 < pixels; p0 += chunk) {
      const std::size_t p1 = std::min(pixels, p0 + chunk);
      im2col(g, x, p0, p1, col.data());
      kernels::gemm<T>(Trans::no, Trans::no, g.out_channels, p1 - p0, rows, w, rows,
                       col.data(), p1 - p0, T(0), y + p0, pixels);
    }
  }
  if (b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      T* plane = y + o * pixels;
      for (std::size_t p = 0; p < pixels; ++p) plane[p] += b[o];
    }
  }
}

template <typename T>
void backward_gemm(const Geometry& g, const T* x, const T* w, const T* gy, T* gx, T* gw,
                   T* gb) {
  const std::size_t pixels = g.out_height() * g.out_width();
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  if (gb) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const T* plane = gy + o * pixels;
      T acc = 0;
      for (std::size_t p = 0; p < pixels; ++p) acc += plane[p];
      gb[o] += acc;
    }
  }
  if (!gx && !gw) return;
  if (is_pointwise(g)) {
    if (gw) {
      kernels::gemm<T>(Trans::no, Trans::yes, g.out_channels, rows, pixels, gy, pixels, x,
                       pixels, T(1), gw, rows);
    }
    if (gx) {
      kernels::gemm<T>(Trans::yes, Trans::no, rows, pixels, g.out_channels, w, rows, gy,
                       pixels, T(1), gx, pixels);
    }
    return;
  }
  thread_local std::vector<T> col;
  thread_local std::vector<T> gcol;
  const std::size_t chunk = chunk_length(g);
  reserve_at_least(col, rows * chunk);
  if (gx) reserve_at_least(gcol, rows * chunk);
  for (std::size_t p0 = 0; p0 < pixels; p0 += chunk) {
    const std::size_t p1 = std::min(pixels, p0 + chunk);
    const std::size_t len = p1 - p0;
    if (gw) {
      im2col(g, x, p0, p1, col.data());
      kernels::gemm<T>(Trans::no, Trans::yes, g.out_channels, rows, len, gy + p0, pixels,
                       col.data(), len, T(1), gw, rows);
    }
    if (gx) {
      kernels::gemm<T>(Trans::yes, Trans::no, rows, len, g.out_channels, w, rows, gy + p0,
                       pixels, T(0), gcol.data(), len);
      col2im_add(g, gcol.data(), p0, p1, gx);
    }
  }
}

}  // namespace

template <typename T>
void forward(const Geometry& g, const T* x, const T* w, const T* b, T* y) {
  if (conv_algorithm() == ConvAlgorithm::direct) {
    forward_direct(g, x, w, b, y);
  } else {
    forward_gemm(g, x, w, b, y);
  }
}

template <typename T>
void backward(const Geometry& g, const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb) {
  if (conv_algorithm() == ConvAlgorithm::direct) {
    backward_direct(g, x, w, gy, gx, gw, gb);
  } else {
    backward_gemm(g, x, w, gy, gx, gw, gb);
  }
}

template void forward(const Geometry&, const float*, const float*, const float*, float*);
template void forward(const Geometry&, const double*, const double*, const double*, double*);
template void backward(const Geometry&, const float*, const float*, const float*, float*,
                       float*, float*);
template void backward(const Geometry&, const double*, const double*, const double*,
                       double*, double*, double*);

}  // namespace mwdcnn::conv
