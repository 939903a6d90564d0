#pragma once
// The finite-difference suite: every differentiable primitive, every block
// and a small full model, all in 64-bit.

#include <cstdint>
#include <string>
#include <vector>

#include "mwdcnn/gradcheck.hpp"

namespace mwdcnn {

struct GradSuiteOptions {
  std::size_t base_channels = 8;
  /// Height and width of the full-model input (1 x 1 x s x s).
  std::size_t image_size = 8;
  /// Entries checked per tensor in the primitive and block cases; 0 checks
  /// every entry.
  std::size_t max_entries_per_tensor = 0;
  /// Entries checked per tensor of the full model. Every parameter entry is
  /// already covered by the block cases; this checks their composition.
  std::size_t model_entries_per_tensor = 48;
  double step = 3e-3;
  bool richardson = true;
  double tolerance = 1e-5;
  std::uint64_t seed = 0;
};

struct GradSuiteCase {
  std::string name;
  GradCheckReport report;
};

std::vector<GradSuiteCase> run_gradient_suite(const GradSuiteOptions& options = {});

bool suite_passed(const std::vector<GradSuiteCase>& cases);

/// One line per checked tensor: case, tensor, entries checked, max relative error.
std::string format_suite_report(const std::vector<GradSuiteCase>& cases);

}  // namespace mwdcnn
