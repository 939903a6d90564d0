#include "mwdcnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "conv.hpp"
#include "mwdcnn/kernels.hpp"

namespace mwdcnn {
namespace {

using kernels::Trans;

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     (t.defined() ? ", got shape " + shape_string(t.shape()) : ""));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename T>
void add_into(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  const std::size_t k = weight.dim(2);
  if (weight.dim(3) != k) {
    throw ShapeError("conv2d: kernel must be square, got " + shape_string(weight.shape()));
  }
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) +
                     " channels but weight expects " + std::to_string(weight.dim(1)) +
                     " (input " + shape_string(input.shape()) + ", weight " +
                     shape_string(weight.shape()) + ")");
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw ShapeError("conv2d: bias shape " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(weight.dim(0)) + " output channels");
  }
  if (input.dim(2) + 2 * padding < k || input.dim(3) + 2 * padding < k) {
    throw ShapeError("conv2d: kernel larger than padded input " + shape_string(input.shape()));
  }
  const conv::Geometry g{input.dim(1), input.dim(2), input.dim(3), weight.dim(0), k, padding};
  const std::size_t n = input.dim(0);
  const std::size_t in_size = g.in_channels * g.height * g.width;
  const std::size_t out_size = g.out_channels * g.out_height() * g.out_width();

  std::vector<T> out(n * out_size);
  const auto x = input.data();
  const auto w = weight.data();
  const T* b = has_bias ? bias.data().data() : nullptr;
  for (std::size_t s = 0; s < n; ++s) {
    conv::forward(g, x.data() + s * in_size, w.data(), b, out.data() + s * out_size);
  }

  std::vector<Tensor<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(
      "conv2d", Shape{n, g.out_channels, g.out_height(), g.out_width()}, std::move(out), inputs,
      [g, n, in_size, out_size, has_bias](std::span<const T> gy, detail::GradSink<T>& sink) {
        const auto x = sink.input(0);
        const auto w = sink.input(1);
        auto gx = sink[0];
        auto gw = sink[1];
        std::span<T> gb = has_bias ? sink[2] : std::span<T>{};
        for (std::size_t s = 0; s < n; ++s) {
          conv::backward(g, x.data() + s * in_size, w.data(), gy.data() + s * out_size,
                         gx.empty() ? nullptr : gx.data() + s * in_size,
                         gw.empty() ? nullptr : gw.data(), gb.empty() ? nullptr : gb.data());
        }
      });
}

template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(weight, 4, "conv2d", "weight");
  const std::size_t k = weight.dim(2);
  if (k % 2 == 0) {
    throw ShapeError("conv2d: 'same' padding needs an odd kernel, got " + std::to_string(k));
  }
  return conv2d(input, weight, bias, (k - 1) / 2);
}

template <typename T>
Tensor<T> conv2d_per_sample(const Tensor<T>& input, const Tensor<T>& weight,
                            const Tensor<T>& bias) {
  require_rank(input, 4, "conv2d_per_sample", "input");
  require_rank(weight, 5, "conv2d_per_sample", "weight");
  require_rank(bias, 2, "conv2d_per_sample", "bias");
  const std::size_t n = input.dim(0);
  const std::size_t k = weight.dim(3);
  if (weight.dim(0) != n || bias.dim(0) != n) {
    throw ShapeError("conv2d_per_sample: batch of " + std::to_string(n) +
                     " needs one kernel per sample, got weight " +
                     shape_string(weight.shape()) + " and bias " + shape_string(bias.shape()));
  }
  if (weight.dim(2) != input.dim(1) || weight.dim(4) != k || k % 2 == 0 ||
      bias.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d_per_sample: incompatible input " + shape_string(input.shape()) +
                     ", weight " + shape_string(weight.shape()) + ", bias " +
                     shape_string(bias.shape()));
  }
  const conv::Geometry g{input.dim(1), input.dim(2), input.dim(3), weight.dim(1), k, (k - 1) / 2};
  const std::size_t in_size = g.in_channels * g.height * g.width;
  const std::size_t out_size = g.out_channels * g.out_height() * g.out_width();
  const std::size_t w_size = g.weight_size();

  std::vector<T> out(n * out_size);
  const auto x = input.data();
  const auto w = weight.data();
  const auto b = bias.data();
  for (std::size_t s = 0; s < n; ++s) {
    conv::forward(g, x.data() + s * in_size, w.data() + s * w_size,
                  b.data() + s * g.out_channels, out.data() + s * out_size);
  }
  return make_result<T>(
      "conv2d_per_sample", Shape{n, g.out_channels, g.out_height(), g.out_width()},
      std::move(out), {input, weight, bias},
      [g, n, in_size, out_size, w_size](std::span<const T> gy, detail::GradSink<T>& sink) {
        const auto x = sink.input(0);
        const auto w = sink.input(1);
        auto gx = sink[0];
        auto gw = sink[1];
        auto gb = sink[2];
        for (std::size_t s = 0; s < n; ++s) {
          conv::backward(g, x.data() + s * in_size, w.data() + s * w_size,
                         gy.data() + s * out_size,
                         gx.empty() ? nullptr : gx.data() + s * in_size,
                         gw.empty() ? nullptr : gw.data() + s * w_size,
                         gb.empty() ? nullptr : gb.data() + s * g.out_channels);
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  if (auto* pattern = ActivationPattern::current()) pattern->record(x);
  return make_result<T>("relu", input.shape(), std::move(out), {input},
                        [](std::span<const T> gy, detail::GradSink<T>& sink) {
                          const auto x = sink.input(0);
                          auto gx = sink[0];
                          const T pass = active_fault() == Fault::relu_backward ? T(2) : T(1);
                          for (std::size_t i = 0; i < gx.size(); ++i) {
                            if (x[i] > T(0)) gx[i] += pass * gy[i];
                          }
                        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& input) {
  require_rank(input, 2, "softmax", "input");
  const std::size_t rows = input.dim(0), cols = input.dim(1);
  if (cols == 0) throw ShapeError("softmax: rows must be non-empty");
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * cols;
    T* yr = out.data() + r * cols;
    const T peak = *std::max_element(xr, xr + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - peak);
      total += yr[c];
    }
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= total;
  }
  return make_result<T>("softmax", input.shape(), std::move(out), {input},
                        [rows, cols](std::span<const T> gy, detail::GradSink<T>& sink) {
                          const auto y = sink.output();
                          auto gx = sink[0];
                          for (std::size_t r = 0; r < rows; ++r) {
                            const std::size_t o = r * cols;
                            T inner = 0;
                            for (std::size_t c = 0; c < cols; ++c) inner += gy[o + c] * y[o + c];
                            for (std::size_t c = 0; c < cols; ++c) {
                              gx[o + c] += y[o + c] * (gy[o + c] - inner);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  require_rank(input, 4, "global_avg_pool", "input");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t area = input.dim(2) * input.dim(3);
  if (area == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  const auto x = input.data();
  std::vector<T> out(n * c);
  for (std::size_t i = 0; i < n * c; ++i) {
    T acc = 0;
    const T* plane = x.data() + i * area;
    for (std::size_t p = 0; p < area; ++p) acc += plane[p];
    out[i] = acc / T(area);
  }
  return make_result<T>("global_avg_pool", Shape{n, c}, std::move(out), {input},
                        [area](std::span<const T> gy, detail::GradSink<T>& sink) {
                          auto gx = sink[0];
                          for (std::size_t i = 0; i < gy.size(); ++i) {
                            const T share = gy[i] / T(area);
                            T* plane = gx.data() + i * area;
                            for (std::size_t p = 0; p < area; ++p) plane[p] += share;
                          }
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b},
                        [](std::span<const T> gy, detail::GradSink<T>& sink) {
                          for (std::size_t in = 0; in < 2; ++in) {
                            if (sink.wants(in)) add_into(sink[in], gy);
                          }
                        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result<T>("sub", a.shape(), std::move(out), {a, b},
                        [](std::span<const T> gy, detail::GradSink<T>& sink) {
                          if (sink.wants(0)) add_into(sink[0], gy);
                          if (sink.wants(1)) {
                            auto gb = sink[1];
                            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b},
                        [](std::span<const T> gy, detail::GradSink<T>& sink) {
                          const auto x = sink.input(0), y = sink.input(1);
                          if (sink.wants(0)) {
                            auto ga = sink[0];
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * y[i];
                          }
                          if (sink.wants(1)) {
                            auto gb = sink[1];
                            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * x[i];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make_result<T>("scale", a.shape(), std::move(out), {a},
                        [factor](std::span<const T> gy, detail::GradSink<T>& sink) {
                          auto gx = sink[0];
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * factor;
                        });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: nothing to concatenate");
  for (const auto& p : parts) require_rank(p, 4, "concat_channels", "every part");
  const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  const std::size_t area = h * w;
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w) {
      throw ShapeError("concat_channels: " + shape_string(p.shape()) + " incompatible with " +
                       shape_string(parts[0].shape()));
    }
    channels.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<T> out(n * total * area);
  for (std::size_t s = 0; s < n; ++s) {
    T* dst = out.data() + s * total * area;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const std::size_t block = channels[i] * area;
      const T* src = parts[i].data().data() + s * block;
      dst = std::copy(src, src + block, dst);
    }
  }
  return make_result<T>("concat_channels", Shape{n, total, h, w}, std::move(out), parts,
                        [n, total, area, channels](std::span<const T> gy,
                                                   detail::GradSink<T>& sink) {
                          std::size_t offset = 0;
                          for (std::size_t i = 0; i < channels.size(); ++i) {
                            const std::size_t block = channels[i] * area;
                            if (sink.wants(i)) {
                              auto gx = sink[i];
                              for (std::size_t s = 0; s < n; ++s) {
                                const T* src = gy.data() + s * total * area + offset;
                                T* dst = gx.data() + s * block;
                                for (std::size_t j = 0; j < block; ++j) dst[j] += src[j];
                              }
                            }
                            offset += block;
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  }
  const auto x = a.data();
  return make_result<T>("reshape", std::move(shape), std::vector<T>(x.begin(), x.end()), {a},
                        [](std::span<const T> gy, detail::GradSink<T>& sink) {
                          add_into(sink[0], gy);
                        });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul", "left operand");
  require_rank(b, 2, "matmul", "right operand");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " . " +
                     shape_string(b.shape()));
  }
  std::vector<T> out(m * n);
  kernels::gemm<T>(Trans::no, Trans::no, m, n, k, a.data().data(), k, b.data().data(), n, T(0),
                   out.data(), n);
  return make_result<T>("matmul", Shape{m, n}, std::move(out), {a, b},
                        [m, k, n](std::span<const T> gy, detail::GradSink<T>& sink) {
                          const auto x = sink.input(0), y = sink.input(1);
                          if (sink.wants(0)) {
                            kernels::gemm<T>(Trans::no, Trans::yes, m, k, n, gy.data(), n,
                                             y.data(), n, T(1), sink[0].data(), k);
                          }
                          if (sink.wants(1)) {
                            kernels::gemm<T>(Trans::yes, Trans::no, k, n, m, x.data(), k,
                                             gy.data(), n, T(1), sink[1].data(), n);
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (const T v : a.data()) acc += v;
  return make_result<T>("sum", Shape{1}, std::vector<T>{acc}, {a},
                        [](std::span<const T> gy, detail::GradSink<T>& sink) {
                          for (auto& g : sink[0]) g += gy[0];
                        });
}

#define MWDCNN_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                            std::size_t);                                                  \
  template Tensor<T> conv2d_same(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> conv2d_per_sample(const Tensor<T>&, const Tensor<T>&,                 \
                                       const Tensor<T>&);                                  \
  template Tensor<T> relu(const Tensor<T>&);                                               \
  template Tensor<T> softmax(const Tensor<T>&);                                            \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                       \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> sum(const Tensor<T>&);

MWDCNN_INSTANTIATE_OPS(float)
MWDCNN_INSTANTIATE_OPS(double)

#undef MWDCNN_INSTANTIATE_OPS

}  // namespace mwdcnn
