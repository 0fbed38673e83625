#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "teli/rng.hpp"
#include "teli/tensor.hpp"

namespace teli {

enum class Mode { Train, Inference };

enum class LayerKind { Conv2D, BatchNorm, LeakyReLU, MaxPool2D, Flatten, Dense, Dropout, Sigmoid };

const char* layer_kind_name(LayerKind kind);

// A trainable tensor and its gradient; shapes always match.
struct ParamSlot {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Non-trainable persistent state (running statistics).
struct StateSlot {
  std::string name;
  Tensor value;
};

// One differentiable unit. forward() in Train mode caches whatever the
// matching backward() needs; Inference mode never mutates the layer.
// backward() overwrites the gradient slots for the last Train forward.
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  const std::string& name() const { return name_; }

  virtual Tensor forward(const Tensor& input, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out, bool need_input_grad = true) = 0;

  virtual std::vector<ParamSlot*> params() { return {}; }
  virtual std::vector<StateSlot*> state() { return {}; }

  virtual Shape output_shape(const Shape& input) const = 0;
  virtual void clear_cache() {}
  virtual std::string describe() const { return layer_kind_name(kind()); }

 protected:
  std::string name_;
};

class Conv2DLayer final : public Layer {
 public:
  Conv2DLayer(std::string name, std::int64_t in_channels, std::int64_t out_channels);
  LayerKind kind() const override { return LayerKind::Conv2D; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<ParamSlot*> params() override { return {&weight_, &bias_}; }
  Shape output_shape(const Shape& input) const override;
  void clear_cache() override { cached_input_ = Tensor(); }
  std::string describe() const override;

  ParamSlot& weight() { return weight_; }
  ParamSlot& bias() { return bias_; }

 private:
  std::int64_t in_channels_, out_channels_;
  ParamSlot weight_, bias_;
  Tensor cached_input_;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::string name, std::int64_t in_features, std::int64_t units);
  LayerKind kind() const override { return LayerKind::Dense; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<ParamSlot*> params() override { return {&weight_, &bias_}; }
  Shape output_shape(const Shape& input) const override;
  void clear_cache() override { cached_input_ = Tensor(); }
  std::string describe() const override;

  ParamSlot& weight() { return weight_; }
  ParamSlot& bias() { return bias_; }

 private:
  std::int64_t in_features_, units_;
  ParamSlot weight_, bias_;
  Tensor cached_input_;
};

// Per-channel over (N,H,W) for rank-4 inputs, per-feature over N for rank-2.
// Train mode normalizes by batch statistics (biased variance) and updates
// the running stats by EMA; Inference normalizes by the running stats.
class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(std::string name, std::int64_t features, float epsilon, float momentum);
  LayerKind kind() const override { return LayerKind::BatchNorm; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<ParamSlot*> params() override { return {&gamma_, &beta_}; }
  std::vector<StateSlot*> state() override { return {&running_mean_, &running_var_}; }
  Shape output_shape(const Shape& input) const override;
  void clear_cache() override { cached_xhat_ = Tensor(); }
  std::string describe() const override;

  float epsilon() const { return epsilon_; }
  float momentum() const { return momentum_; }
  ParamSlot& gamma() { return gamma_; }
  ParamSlot& beta() { return beta_; }
  StateSlot& running_mean() { return running_mean_; }
  StateSlot& running_var() { return running_var_; }

 private:
  std::int64_t features_;
  float epsilon_, momentum_;
  ParamSlot gamma_, beta_;
  StateSlot running_mean_, running_var_;
  Tensor cached_xhat_;
  std::vector<float> cached_invstd_;
};

class LeakyReLULayer final : public Layer {
 public:
  LeakyReLULayer(std::string name, float alpha);
  LayerKind kind() const override { return LayerKind::LeakyReLU; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  Shape output_shape(const Shape& input) const override { return input; }
  void clear_cache() override { positive_mask_.clear(); }
  std::string describe() const override;

  float alpha() const { return alpha_; }

 private:
  float alpha_;
  std::vector<std::uint8_t> positive_mask_;
  Shape cached_shape_;
};

class MaxPool2DLayer final : public Layer {
 public:
  explicit MaxPool2DLayer(std::string name) : Layer(std::move(name)) {}
  LayerKind kind() const override { return LayerKind::MaxPool2D; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  Shape output_shape(const Shape& input) const override;
  void clear_cache() override { cached_argmax_.clear(); }

 private:
  std::vector<std::int32_t> cached_argmax_;
  Shape cached_input_shape_;
};

class FlattenLayer final : public Layer {
 public:
  explicit FlattenLayer(std::string name) : Layer(std::move(name)) {}
  LayerKind kind() const override { return LayerKind::Flatten; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  Shape output_shape(const Shape& input) const override;

 private:
  Shape cached_input_shape_;
};

// Inverted dropout: train-time scaling by 1/(1-rate), inference is identity
// and consumes no randomness.
class DropoutLayer final : public Layer {
 public:
  DropoutLayer(std::string name, float rate, std::uint64_t seed);
  LayerKind kind() const override { return LayerKind::Dropout; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  Shape output_shape(const Shape& input) const override { return input; }
  void clear_cache() override { keep_mask_.clear(); }
  std::string describe() const override;

  float rate() const { return rate_; }
  const std::vector<std::uint8_t>& last_mask() const { return keep_mask_; }

 private:
  float rate_;
  Rng rng_;
  std::vector<std::uint8_t> keep_mask_;
};

class SigmoidLayer final : public Layer {
 public:
  explicit SigmoidLayer(std::string name) : Layer(std::move(name)) {}
  LayerKind kind() const override { return LayerKind::Sigmoid; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  Shape output_shape(const Shape& input) const override { return input; }
  void clear_cache() override { cached_output_ = Tensor(); }

 private:
  Tensor cached_output_;
};

}  // namespace teli
