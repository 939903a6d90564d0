#include "mwdcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mwdcnn/rng.hpp"

namespace mwdcnn {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(),
                     [&](const GradCheckEntry& e) { return e.max_rel_error < tolerance; });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& build,
                           std::vector<NamedTensor> params, const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;

  ActivationPattern pattern;
  for (auto& [name, p] : params) p.zero_grad();
  {
    const auto loss = build();
    backward(loss);
  }
  const std::uint64_t reference = pattern.fingerprint();
  auto evaluate = [&](bool& same) {
    pattern.reset();
    const double value = build().item();
    same = same && pattern.fingerprint() == reference;
    return value;
  };

  CounterRng picker(derive_key(options.seed, {0x6772616443686bULL}));
  for (auto& [name, p] : params) {
    GradCheckEntry entry;
    entry.name = name;
    entry.total = p.numel();
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());

    std::vector<std::size_t> order(p.numel());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::size_t count = order.size();
    if (options.max_entries_per_tensor != 0 && options.max_entries_per_tensor < count) {
      count = options.max_entries_per_tensor;
      for (std::size_t i = 0; i < count; ++i) {
        std::swap(order[i], order[i + picker.below(order.size() - i)]);
      }
    }

    auto values = p.mutable_data();
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t i = order[c];
      const double original = values[i];
      // Stops evaluating as soon as one point leaves the activation pattern.
      auto central = [&](double h, bool& same) {
        values[i] = original + h;
        const double plus = evaluate(same);
        values[i] = original - h;
        const double minus = same ? evaluate(same) : 0.0;
        values[i] = original;
        return (plus - minus) / (2.0 * h);
      };
      double step = options.step, numeric = 0.0;
      for (;;) {
        bool same = true;
        numeric = central(step, same);
        if (same && options.richardson) {
          numeric = (4.0 * central(0.5 * step, same) - numeric) / 3.0;
        }
        if (same) break;
        if (step * 0.5 < options.min_step) {
          ++entry.unresolved;
          break;
        }
        step *= 0.5;
      }
      if (step < options.step) ++entry.reduced_steps;
      const double ad = analytic.empty() ? 0.0 : analytic[i];
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(ad, numeric));
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(ad - numeric));
    }
    entry.checked = count;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace mwdcnn
