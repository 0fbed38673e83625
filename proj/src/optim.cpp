#include "teli/optim.hpp"

#include <cmath>

#include "teli/kernels.hpp"

namespace teli {

double lr_at_epoch(const LrSchedule& schedule, int epoch) {
  if (schedule.initial_lr <= 0.0) throw Error("learning rate must be positive");
  if (schedule.decay_factor <= 0.0 || schedule.decay_factor > 1.0) {
    throw Error("lr decay factor must be in (0,1]");
  }
  if (epoch < 0) throw Error("epoch must be >= 0");
  double lr = schedule.initial_lr;
  for (int i = 0; i < epoch; ++i) lr *= schedule.decay_factor;
  return lr;
}

void rmsprop_step(Tensor& param, const Tensor& grad, Tensor& cache,
                  const RmspropConfig& config) {
  if (!param.same_shape(grad) || !param.same_shape(cache)) {
    throw ShapeError("rmsprop_step shapes disagree: param " + shape_str(param.shape()) +
                     ", grad " + shape_str(grad.shape()) + ", cache " +
                     shape_str(cache.shape()));
  }
  const float rho = config.rho;
  const float one_minus_rho = 1.0f - rho;
  const float lr = static_cast<float>(config.learning_rate);
  const float eps = config.epsilon;
  const std::int64_t total = param.numel();
  float* p = param.data();
  const float* g = grad.data();
  float* c = cache.data();
  const bool serial = strict_deterministic();
#pragma omp parallel for simd schedule(static) if (!serial)
  for (std::int64_t i = 0; i < total; ++i) {
    c[i] = rho * c[i] + one_minus_rho * g[i] * g[i];
    p[i] -= lr * g[i] / (std::sqrt(c[i]) + eps);
  }
  check_finite(param, "rmsprop_step");
}

void Rmsprop::step(const std::vector<ParamSlot*>& params) {
  if (cache_.empty()) {
    cache_.reserve(params.size());
    for (const ParamSlot* slot : params) {
      cache_.push_back({slot->name, Tensor(slot->value.shape())});
    }
  }
  if (cache_.size() != params.size()) {
    throw Error("rmsprop cache does not match parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    rmsprop_step(params[i]->value, params[i]->grad, cache_[i].value, config_);
  }
}

BceResult bce_loss(const Tensor& predictions, const Tensor& labels, float eps_clip) {
  if (!predictions.same_shape(labels)) {
    throw ShapeError("bce_loss predictions " + shape_str(predictions.shape()) +
                     " vs labels " + shape_str(labels.shape()));
  }
  const std::int64_t n = predictions.numel();
  if (n == 0) throw Error("bce_loss on empty batch");

  BceResult res;
  res.grad = Tensor(predictions.shape());
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const float y = labels[i];
    if (y != 0.0f && y != 1.0f) {
      throw Error("bce_loss label must be 0 or 1, got " + std::to_string(y));
    }
    float p = predictions[i];
    if (p < eps_clip) p = eps_clip;
    if (p > 1.0f - eps_clip) p = 1.0f - eps_clip;
    loss -= y * std::log(static_cast<double>(p)) +
            (1.0 - y) * std::log(1.0 - static_cast<double>(p));
    res.grad[i] = (p - y) / (p * (1.0f - p) * static_cast<float>(n));
  }
  res.mean_loss = loss / static_cast<double>(n);
  return res;
}

}  // namespace teli
