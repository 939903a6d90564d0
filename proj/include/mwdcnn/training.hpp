#pragma once

// Losses, Adam, the staged learning-rate schedule and the training loop.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mwdcnn/data.hpp"
#include "mwdcnn/model.hpp"

namespace mwdcnn {

/// Half squared error summed over all elements and divided by the number of
/// images `n` (the leading extent of `pred`): 1/(2n) * sum ||pred - target||^2.
/// With `per_pixel` the sum is divided by 2 * element count instead.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target, bool per_pixel = false);

/// Mean over elements of sqrt((pred - target)^2 + eps^2).
template <typename T>
Tensor<T> charbonnier_loss(const Tensor<T>& pred, const Tensor<T>& target, T eps = T(1e-3));

template <typename T>
struct AdamState {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  std::uint64_t step = 0;
  /// First and second moments, one buffer per parameter tensor.
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  static AdamState for_parameters(const NamedParameters<T>& params);
};

/// One bias-corrected Adam update of `params` from `grads`.
template <typename T>
void adam_step(AdamState<T>& state, std::span<const std::span<T>> params,
               std::span<const std::span<const T>> grads, T lr);

/// Adam update using the gradients accumulated in each parameter tensor.
template <typename T>
void adam_step(AdamState<T>& state, const NamedParameters<T>& params, T lr);

/// Piecewise-constant learning rate by epoch: stage i covers epochs
/// (last_epoch of stage i-1, last_epoch of stage i].
struct LrSchedule {
  struct Stage {
    std::size_t last_epoch;
    double lr;
    bool operator==(const Stage&) const = default;
  };
  std::vector<Stage> stages;

  /// 1e-4 for epochs 1-30, 1e-5 for 31-60, 1e-6 for 61-90.
  static LrSchedule staged_default();
  static LrSchedule constant(double lr, std::size_t epochs);
  /// Parses "30:1e-4,60:1e-5,90:1e-6".
  static LrSchedule parse(const std::string& text);
  std::string to_string() const;

  std::size_t last_epoch() const { return stages.empty() ? 0 : stages.back().last_epoch; }
  bool operator==(const LrSchedule&) const = default;
};

enum class LossKind { mse, charbonnier };

std::string to_string(LossKind kind);
LossKind parse_loss(const std::string& name);

struct TrainPlan {
  std::size_t batch_size = 64;
  std::size_t epochs = 90;
  /// Stop after this many iterations; 0 means run every epoch to completion.
  std::size_t max_iterations = 0;
  LrSchedule schedule = LrSchedule::staged_default();
  LossKind loss = LossKind::mse;
  double charbonnier_eps = 1e-3;
  bool per_pixel_loss = false;
  std::uint64_t seed = 0;
  /// Draw fresh noise for every epoch instead of reusing draw 0.
  bool resample_noise = true;

  /// Throws std::invalid_argument when the plan is inconsistent.
  void validate() const;
  bool operator==(const TrainPlan&) const = default;
};

/// Learning rate for a 1-based epoch; throws std::out_of_range outside the plan.
double lr_for_epoch(const TrainPlan& plan, std::size_t epoch);

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  std::size_t epoch = 0;      // 1-based
  double lr = 0.0;
  double loss = 0.0;
};

/// Raised when the loss stops being finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct TrainHooks {
  std::function<void(const IterationRecord&)> on_iteration;
  std::function<void(std::size_t epoch, const Mwdcnn<T>&, const AdamState<T>&)> on_epoch_end;
};

template <typename T>
struct TrainResult {
  std::vector<IterationRecord> log;
  AdamState<T> optimizer;
};

/// Seeded mini-batch Adam over shuffled patches. The batch order, noise and
/// parameter updates are bitwise reproducible for a fixed seed, build and
/// precision. `resume` continues from existing optimizer moments.
template <typename T>
TrainResult<T> train(const TrainPlan& plan, Mwdcnn<T>& model, const PatchDataset& dataset,
                     const TrainHooks<T>& hooks = {}, const AdamState<T>* resume = nullptr);

/// CSV with header `iter,epoch,lr,loss` and LF line endings.
std::string training_log_csv(const std::vector<IterationRecord>& log);
std::string training_log_header();
std::string training_log_row(const IterationRecord& record);

}  // namespace mwdcnn
