#include "mwdcnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mwdcnn/kernels.hpp"

namespace mwdcnn {
namespace {

constexpr std::uint64_t kTagShuffle = 0x73687566ULL;

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + shape_string(a.shape()) +
                     " and target " + shape_string(b.shape()) + " differ");
  }
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target, bool per_pixel) {
  require_same(pred, target, "mse_loss");
  const auto p = pred.data(), t = target.data();
  const double images = pred.rank() > 0 ? double(pred.dim(0)) : 1.0;
  const double divisor = per_pixel ? 2.0 * double(p.size()) : 2.0 * images;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = double(p[i]) - double(t[i]);
    acc += d * d;
  }
  const T grad_scale = static_cast<T>(2.0 / divisor);
  return make_result<T>("mse_loss", Shape{1}, std::vector<T>{static_cast<T>(acc / divisor)},
                        {pred, target},
                        [grad_scale](std::span<const T> gy, detail::GradSink<T>& sink) {
                          const auto p = sink.input(0), t = sink.input(1);
                          const T g = gy[0] * grad_scale;
                          if (sink.wants(0)) {
                            auto gp = sink[0];
                            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * (p[i] - t[i]);
                          }
                          if (sink.wants(1)) {
                            auto gt = sink[1];
                            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= g * (p[i] - t[i]);
                          }
                        });
}

template <typename T>
Tensor<T> charbonnier_loss(const Tensor<T>& pred, const Tensor<T>& target, T eps) {
  require_same(pred, target, "charbonnier_loss");
  const auto p = pred.data(), t = target.data();
  const double count = double(p.size());
  const double eps2 = double(eps) * double(eps);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = double(p[i]) - double(t[i]);
    acc += std::sqrt(d * d + eps2);
  }
  return make_result<T>(
      "charbonnier_loss", Shape{1}, std::vector<T>{static_cast<T>(acc / count)}, {pred, target},
      [count, eps](std::span<const T> gy, detail::GradSink<T>& sink) {
        const auto p = sink.input(0), t = sink.input(1);
        const T g = gy[0] / static_cast<T>(count);
        auto gp = sink[0];
        auto gt = sink[1];
        for (std::size_t i = 0; i < p.size(); ++i) {
          const T d = p[i] - t[i];
          const T dl = g * d / std::sqrt(d * d + eps * eps);
          if (!gp.empty()) gp[i] += dl;
          if (!gt.empty()) gt[i] -= dl;
        }
      });
}

template <typename T>
AdamState<T> AdamState<T>::for_parameters(const NamedParameters<T>& params) {
  AdamState state;
  for (const auto& [name, p] : params) {
    state.m.emplace_back(p.numel(), T(0));
    state.v.emplace_back(p.numel(), T(0));
  }
  return state;
}

template <typename T>
void adam_step(AdamState<T>& state, std::span<const std::span<T>> params,
               std::span<const std::span<const T>> grads, T lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || params[i].size() != state.m[i].size() ||
        params[i].size() != state.v[i].size()) {
      throw std::invalid_argument("adam_step: size mismatch for parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = double(state.step);
  kernels::AdamCoefficients<T> coeff{
      state.beta1,
      state.beta2,
      state.eps,
      lr,
      static_cast<T>(1.0 / (1.0 - std::pow(double(state.beta1), t))),
      static_cast<T>(1.0 / (1.0 - std::pow(double(state.beta2), t))),
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    kernels::adam_update<T>(params[i].size(), coeff, grads[i].data(), state.m[i].data(),
                            state.v[i].data(), params[i].data());
  }
}

template <typename T>
void adam_step(AdamState<T>& state, const NamedParameters<T>& params, T lr) {
  std::vector<std::span<T>> values;
  std::vector<std::span<const T>> grads;
  std::vector<std::vector<T>> zeros;
  zeros.reserve(params.size());
  for (auto [name, p] : params) {
    values.push_back(p.mutable_data());
    if (p.grad().size() == p.numel()) {
      grads.push_back(p.grad());
    } else {
      zeros.emplace_back(p.numel(), T(0));
      grads.push_back(zeros.back());
    }
  }
  adam_step<T>(state, values, grads, lr);
}

LrSchedule LrSchedule::staged_default() { return {{{30, 1e-4}, {60, 1e-5}, {90, 1e-6}}}; }

LrSchedule LrSchedule::constant(double lr, std::size_t epochs) { return {{{epochs, lr}}}; }

LrSchedule LrSchedule::parse(const std::string& text) {
  LrSchedule schedule;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("learning-rate stage '" + item + "' is not 'epoch:lr'");
    }
    try {
      schedule.stages.push_back(
          {std::stoul(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::logic_error&) {
      throw std::invalid_argument("learning-rate stage '" + item + "' is not 'epoch:lr'");
    }
  }
  if (schedule.stages.empty()) throw std::invalid_argument("empty learning-rate schedule");
  for (std::size_t i = 1; i < schedule.stages.size(); ++i) {
    if (schedule.stages[i].last_epoch <= schedule.stages[i - 1].last_epoch) {
      throw std::invalid_argument("learning-rate stages must end at increasing epochs");
    }
  }
  return schedule;
}

std::string LrSchedule::to_string() const {
  std::string out;
  for (const auto& s : stages) {
    if (!out.empty()) out += ',';
    out += std::to_string(s.last_epoch) + ':' + format_double(s.lr);
  }
  return out;
}

std::string to_string(LossKind kind) { return kind == LossKind::mse ? "mse" : "charbonnier"; }

LossKind parse_loss(const std::string& name) {
  if (name == "mse") return LossKind::mse;
  if (name == "charbonnier") return LossKind::charbonnier;
  throw std::invalid_argument("unknown loss '" + name + "' (expected mse or charbonnier)");
}

void TrainPlan::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (epochs == 0) throw std::invalid_argument("epochs must be at least 1");
  if (schedule.last_epoch() < epochs) {
    throw std::invalid_argument("learning-rate schedule ends at epoch " +
                                std::to_string(schedule.last_epoch()) + " but the plan runs " +
                                std::to_string(epochs) + " epochs");
  }
  if (!(charbonnier_eps > 0.0)) throw std::invalid_argument("charbonnier eps must be positive");
}

double lr_for_epoch(const TrainPlan& plan, std::size_t epoch) {
  if (epoch < 1 || epoch > plan.epochs) {
    throw std::out_of_range("epoch " + std::to_string(epoch) + " outside 1.." +
                            std::to_string(plan.epochs));
  }
  for (const auto& stage : plan.schedule.stages) {
    if (epoch <= stage.last_epoch) return stage.lr;
  }
  throw std::out_of_range("learning-rate schedule does not cover epoch " + std::to_string(epoch));
}

template <typename T>
TrainResult<T> train(const TrainPlan& plan, Mwdcnn<T>& model, const PatchDataset& dataset,
                     const TrainHooks<T>& hooks, const AdamState<T>* resume) {
  plan.validate();
  if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
  if (dataset.channels() != model.config().in_channels) {
    throw std::invalid_argument("dataset has " + std::to_string(dataset.channels()) +
                                " channels but the model expects " +
                                std::to_string(model.config().in_channels));
  }
  const auto params = model.parameters();
  TrainResult<T> result;
  result.optimizer = resume ? *resume : AdamState<T>::for_parameters(params);

  const std::size_t s = dataset.patch_size();
  const std::size_t c = dataset.channels();
  const std::size_t per_patch = dataset.patch_samples();
  std::vector<std::size_t> order(dataset.size());
  std::size_t iteration = 0;

  for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t(0));
    CounterRng shuffle(derive_key(plan.seed, {kTagShuffle, epoch}));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    const double lr = lr_for_epoch(plan, epoch);
    const std::uint64_t draw = plan.resample_noise ? epoch - 1 : 0;
    bool stop = false;

    for (std::size_t start = 0; start < order.size(); start += plan.batch_size) {
      const std::size_t n = std::min(plan.batch_size, order.size() - start);
      std::vector<T> noisy(n * per_patch), clean(n * per_patch);
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t index = order[start + b];
        dataset.noisy_into<T>(index, draw, std::span<T>(noisy).subspan(b * per_patch, per_patch));
        dataset.clean_into<T>(index, std::span<T>(clean).subspan(b * per_patch, per_patch));
      }
      const auto input = Tensor<T>::from(Shape{n, c, s, s}, std::move(noisy));
      const auto target = Tensor<T>::from(Shape{n, c, s, s}, std::move(clean));

      for (auto [name, p] : params) p.zero_grad();
      const auto pred = model.forward(input);
      const auto loss = plan.loss == LossKind::mse
                            ? mse_loss(pred, target, plan.per_pixel_loss)
                            : charbonnier_loss(pred, target, static_cast<T>(plan.charbonnier_eps));
      const double value = static_cast<double>(loss.item());
      ++iteration;
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite loss " + format_double(value) + " at iteration " +
                             std::to_string(iteration) + " (epoch " + std::to_string(epoch) +
                             ")");
      }
      backward(loss);
      adam_step(result.optimizer, params, static_cast<T>(lr));

      const IterationRecord record{iteration, epoch, lr, value};
      result.log.push_back(record);
      if (hooks.on_iteration) hooks.on_iteration(record);
      if (plan.max_iterations != 0 && iteration >= plan.max_iterations) {
        stop = true;
        break;
      }
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model, result.optimizer);
    if (stop) break;
  }
  return result;
}

std::string training_log_header() { return "iter,epoch,lr,loss\n"; }

std::string training_log_row(const IterationRecord& r) {
  return std::to_string(r.iteration) + ',' + std::to_string(r.epoch) + ',' + format_double(r.lr) +
         ',' + format_double(r.loss) + '\n';
}

std::string training_log_csv(const std::vector<IterationRecord>& log) {
  std::string out = training_log_header();
  for (const auto& r : log) out += training_log_row(r);
  return out;
}

#define MWDCNN_INSTANTIATE_TRAINING(T)                                                       \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&, bool);                     \
  template Tensor<T> charbonnier_loss(const Tensor<T>&, const Tensor<T>&, T);                \
  template struct AdamState<T>;                                                              \
  template void adam_step(AdamState<T>&, std::span<const std::span<T>>,                      \
                          std::span<const std::span<const T>>, T);                           \
  template void adam_step(AdamState<T>&, const NamedParameters<T>&, T);                      \
  template TrainResult<T> train(const TrainPlan&, Mwdcnn<T>&, const PatchDataset&,           \
                                const TrainHooks<T>&, const AdamState<T>*);

MWDCNN_INSTANTIATE_TRAINING(float)
MWDCNN_INSTANTIATE_TRAINING(double)

#undef MWDCNN_INSTANTIATE_TRAINING

}  // namespace mwdcnn
