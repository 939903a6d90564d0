#pragma once

// Central finite-difference verification of reverse-mode gradients, run in
// double precision.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mwdcnn/tensor.hpp"

namespace mwdcnn {

struct GradCheckOptions {
  /// Central-difference step. When a perturbation moves some relu input
  /// across zero the difference quotient no longer measures the derivative,
  /// so the step for that entry is halved until the activation pattern
  /// holds, down to min_step.
  double step = 1e-4;
  double min_step = 1e-9;
  /// Combine the central differences at h and h/2 as (4 D(h/2) - D(h)) / 3,
  /// which cancels the h^2 error term. Costs four evaluations per entry and
  /// allows a larger step, which keeps cancellation error down.
  bool richardson = false;
  double tolerance = 1e-5;
  /// Entries checked per tensor; 0 checks every entry. When limited, the
  /// entries are drawn without replacement from a seeded stream.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  std::size_t total = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  /// Entries evaluated with a step smaller than GradCheckOptions::step.
  std::size_t reduced_steps = 0;
  /// Entries whose activation pattern changed even at min_step.
  std::size_t unresolved = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
  double max_rel_error() const;
};

/// |ad - fd| / max(1e-8, |ad| + |fd|)
double relative_error(double analytic, double numeric);

using NamedTensor = std::pair<std::string, Tensor<double>>;

/// `build` must rebuild the scalar loss from the current values of `params`
/// on every call. Parameter gradients are reset before the analytic pass.
GradCheckReport grad_check(const std::function<Tensor<double>()>& build,
                           std::vector<NamedTensor> params, const GradCheckOptions& options = {});

}  // namespace mwdcnn
