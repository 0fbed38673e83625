#pragma once

#include <cstdint>
#include <vector>

#include "teli/layers.hpp"
#include "teli/tensor.hpp"

namespace teli {

// lr(epoch) = initial_lr * decay_factor^epoch, computed by repeated
// multiplication so logged rates follow the geometric sequence exactly.
struct LrSchedule {
  double initial_lr = 1e-3;
  double decay_factor = 0.7;
};

double lr_at_epoch(const LrSchedule& schedule, int epoch);

struct RmspropConfig {
  double learning_rate = 1e-3;
  float rho = 0.9f;
  float epsilon = 1e-7f;
};

// cache <- rho*cache + (1-rho)*g^2 ; param <- param - lr*g/(sqrt(cache)+eps)
void rmsprop_step(Tensor& param, const Tensor& grad, Tensor& cache,
                  const RmspropConfig& config);

// Owns one accumulator tensor per parameter slot, keyed by slot order.
class Rmsprop {
 public:
  explicit Rmsprop(RmspropConfig config) : config_(config) {}

  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const RmspropConfig& config() const { return config_; }

  // Applies one update to every slot; creates zero caches on first use.
  void step(const std::vector<ParamSlot*>& params);

  // Cache tensors in slot order, named after their parameters. Exposed for
  // checkpointing.
  std::vector<StateSlot>& cache() { return cache_; }
  const std::vector<StateSlot>& cache() const { return cache_; }

 private:
  RmspropConfig config_;
  std::vector<StateSlot> cache_;
};

struct BceResult {
  double mean_loss = 0.0;
  Tensor grad;  // d(mean_loss)/d(predictions)
};

// Mean binary cross-entropy over the batch. predictions are clipped to
// [eps_clip, 1-eps_clip] before the logs; the gradient is evaluated on the
// clipped values. labels must be exactly 0 or 1.
BceResult bce_loss(const Tensor& predictions, const Tensor& labels, float eps_clip = 1e-7f);

}  // namespace teli
