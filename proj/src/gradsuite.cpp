#include "mwdcnn/gradsuite.hpp"

#include <cmath>
#include <cstdio>

#include "mwdcnn/layers.hpp"
#include "mwdcnn/model.hpp"
#include "mwdcnn/ops.hpp"
#include "mwdcnn/training.hpp"
#include "mwdcnn/wavelet.hpp"

namespace mwdcnn {
namespace {

using T = Tensor<double>;

class Builder {
 public:
  explicit Builder(std::uint64_t seed) : rng_(derive_key(seed, {0x73756974ULL})) {}

  T random(Shape shape, bool grad = true, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng_.uniform(lo, hi);
    return T::from(std::move(shape), std::move(v), grad);
  }

  // Like random(), but no entry lies within 0.05 of zero.
  T off_kink(Shape shape) {
    auto t = random(std::move(shape));
    for (auto& v : t.mutable_data()) {
      if (std::abs(v) < 0.05) v += v < 0 ? -0.05 : 0.05;
    }
    return t;
  }

  // Fixed weights for reducing an output of this shape to a scalar.
  T weights(Shape shape) { return random(std::move(shape), false, 0.5, 1.5); }

  void fill(T& t, double lo, double hi) {
    for (auto& v : t.mutable_data()) v = rng_.uniform(lo, hi);
  }

  void randomize_biases(const NamedParameters<double>& params) {
    for (auto [name, p] : params) {
      if (name.ends_with("bias") || name.ends_with("biases")) {
        for (auto& v : p.mutable_data()) v = rng_.uniform(-0.1, 0.1);
      }
    }
  }

 private:
  CounterRng rng_;
};

T probe(const T& y, const T& w) { return sum(mul(y, w)); }

std::vector<NamedTensor> named(const NamedParameters<double>& params) {
  return {params.begin(), params.end()};
}

std::vector<NamedTensor> with_input(const T& x, const NamedParameters<double>& params) {
  auto out = named(params);
  out.insert(out.begin(), {"input", x});
  return out;
}

}  // namespace

std::vector<GradSuiteCase> run_gradient_suite(const GradSuiteOptions& options) {
  GradCheckOptions gc;
  gc.step = options.step;
  gc.tolerance = options.tolerance;
  gc.max_entries_per_tensor = options.max_entries_per_tensor;
  gc.seed = options.seed;
  gc.richardson = options.richardson;
  Builder b(options.seed);
  std::vector<GradSuiteCase> out;
  auto run = [&](std::string name, const std::function<T()>& build, std::vector<NamedTensor> params,
                 std::size_t entries) {
    auto opts = gc;
    opts.max_entries_per_tensor = entries;
    out.push_back({std::move(name), grad_check(build, std::move(params), opts)});
  };
  const std::size_t all = options.max_entries_per_tensor;

  // Primitives.
  {
    auto x = b.random({2, 3, 6, 5}), w = b.random({4, 3, 3, 3}), bias = b.random({4});
    const auto pw = b.weights({2, 4, 6, 5});
    run("conv2d", [&] { return probe(conv2d_same(x, w, bias), pw); },
        {{"input", x}, {"weight", w}, {"bias", bias}}, all);
  }
  {
    auto x = b.random({2, 2, 5, 5}), w = b.random({2, 3, 2, 3, 3}), bias = b.random({2, 3});
    const auto pw = b.weights({2, 3, 5, 5});
    run("conv2d_per_sample", [&] { return probe(conv2d_per_sample(x, w, bias), pw); },
        {{"input", x}, {"weight", w}, {"bias", bias}}, all);
  }
  {
    auto x = b.off_kink({3, 7});
    const auto pw = b.weights({3, 7});
    run("relu", [&] { return probe(relu(x), pw); }, {{"input", x}}, all);
  }
  {
    auto x = b.random({3, 4}, true, -2.0, 2.0);
    const auto pw = b.weights({3, 4});
    run("softmax", [&] { return probe(softmax(x), pw); }, {{"input", x}}, all);
  }
  {
    auto x = b.random({2, 3, 4, 5});
    const auto pw = b.weights({2, 3});
    run("global_avg_pool", [&] { return probe(global_avg_pool(x), pw); }, {{"input", x}}, all);
  }
  {
    auto x = b.random({2, 3, 4, 4}), y = b.random({2, 3, 4, 4});
    const auto pw = b.weights({2, 3, 4, 4});
    run("elementwise", [&] { return probe(scale(mul(add(x, y), sub(x, y)), 0.7), pw); },
        {{"a", x}, {"b", y}}, all);
  }
  {
    auto x = b.random({1, 2, 3, 3}), y = b.random({1, 3, 3, 3}), m = b.random({15, 4});
    const auto pw = b.weights({3, 4});
    run("concat_reshape_matmul",
        [&] { return probe(matmul(reshape(concat_channels<double>({x, y}), {3, 15}), m), pw); },
        {{"a", x}, {"b", y}, {"m", m}}, all);
  }
  {
    auto x = b.random({2, 3, 6, 4});
    const auto pw = b.weights({2, 12, 3, 2});
    run("dwt2d", [&] { return probe(dwt2d(x), pw); }, {{"input", x}}, all);
    auto s = b.random({2, 12, 3, 2});
    const auto pi = b.weights({2, 3, 6, 4});
    run("idwt2d", [&] { return probe(idwt2d(s), pi); }, {{"input", s}}, all);
  }
  {
    // Residuals of at least 0.05 keep the charbonnier curvature resolvable.
    auto p = b.random({3, 1, 4, 4}), t = b.off_kink({3, 1, 4, 4});
    for (std::size_t i = 0; i < t.numel(); ++i) t.mutable_data()[i] += p.data()[i];
    run("mse_loss", [&] { return mse_loss(p, t); }, {{"prediction", p}, {"target", t}}, all);
    run("charbonnier_loss", [&] { return charbonnier_loss(p, t); }, {{"prediction", p}, {"target", t}}, all);
  }

  // Blocks.
  const std::size_t base = options.base_channels;
  CounterRng init(derive_key(options.seed, {0x626c6f636bULL}));
  {
    auto wg = WeightGenerator<double>::create(base, 4, init);
    NamedParameters<double> params;
    wg.collect("wg", params);
    b.randomize_biases(params);
    auto x = b.random({2, base, 4, 4});
    const auto pw = b.weights({2, 4});
    run("weight_generator", [&] { return probe(wg.forward(x, 0.7), pw); }, with_input(x, params), all);
  }
  {
    auto dc = DynamicConv<double>::create(base, base, 3, 4, init);
    NamedParameters<double> params;
    dc.collect("dynamic", params);
    b.randomize_biases(params);
    auto x = b.random({2, base, 4, 4});
    const auto pw = b.weights({2, base, 4, 4});
    run("dynamic_conv", [&] { return probe(dc.forward(x), pw); }, with_input(x, params), all);
  }
  {
    auto rdb = ResidualDenseBlock<double>::create(base, base, 3, init);
    NamedParameters<double> params;
    rdb.collect("rdb", params);
    b.randomize_biases(params);
    auto x = b.random({1, base, 4, 4});
    const auto pw = b.weights({1, base, 4, 4});
    run("residual_dense_block", [&] { return probe(rdb.forward(x), pw); }, with_input(x, params), all);
  }

  // The full model and its three stages, sharing one instance.
  ModelConfig config;
  config.in_channels = 1;
  config.base_channels = base;
  config.seed = options.seed;
  auto model = Mwdcnn<double>::create(config);
  b.randomize_biases(model.parameters());
  // The final convolution starts at zero, which would hide every upstream gradient.
  b.fill(model.rb.reconstruct.weight, -0.05, 0.05);
  const std::size_t s = options.image_size;
  {
    NamedParameters<double> params;
    model.dcb.conv_in.collect("dcb.conv_in", params);
    model.dcb.dynamic.collect("dcb.dynamic", params);
    model.dcb.refine.collect("dcb.refine", params);
    auto x = b.random({1, 1, s, s}, true, 0.0, 1.0);
    const auto pw = b.weights({1, base, s, s});
    run("dcb", [&] { return probe(model.dcb_forward(x), pw); }, with_input(x, params), all);
  }
  {
    NamedParameters<double> params;
    model.web[0].enhance.collect("web1.enhance", params);
    auto x = b.random({1, base, s, s});
    const auto pw = b.weights({1, base, s, s});
    run("web", [&] { return probe(model.web_forward(1, x), pw); }, with_input(x, params), all);
  }
  {
    NamedParameters<double> params;
    model.rb.rdb1.collect("rb.rdb1", params);
    model.rb.rdb2.collect("rb.rdb2", params);
    model.rb.refine.collect("rb.refine", params);
    model.rb.reconstruct.collect("rb.reconstruct", params);
    auto x = b.random({1, base, s, s});
    auto noisy = b.random({1, 1, s, s}, true, 0.0, 1.0);
    const auto pw = b.weights({1, 1, s, s});
    auto tensors = with_input(x, params);
    tensors.insert(tensors.begin() + 1, {"noisy", noisy});
    run("rb", [&] { return probe(model.rb_forward(x, noisy), pw); }, std::move(tensors), all);
  }
  {
    const auto noisy = b.random({1, 1, s, s}, false, 0.0, 1.0);
    const auto clean = b.random({1, 1, s, s}, false, 0.0, 1.0);
    run("mwdcnn", [&] { return mse_loss(model.forward(noisy), clean); }, named(model.parameters()),
        options.model_entries_per_tensor);
  }
  return out;
}

bool suite_passed(const std::vector<GradSuiteCase>& cases) {
  for (const auto& c : cases) {
    if (!c.report.passed()) return false;
  }
  return !cases.empty();
}

std::string format_suite_report(const std::vector<GradSuiteCase>& cases) {
  std::string out;
  char line[256];
  for (const auto& c : cases) {
    for (const auto& e : c.report.entries) {
      std::snprintf(line, sizeof line, "%-24s %-34s %6zu/%-6zu rel %.3e abs %.3e reduced %zu %s\n",
                    c.name.c_str(), e.name.c_str(), e.checked, e.total, e.max_rel_error,
                    e.max_abs_error, e.reduced_steps,
                    e.max_rel_error < c.report.tolerance ? "ok" : "FAIL");
      out += line;
    }
  }
  return out;
}

}  // namespace mwdcnn
