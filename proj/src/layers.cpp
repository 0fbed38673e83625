#include "teli/layers.hpp"

#include <cmath>

#include "teli/kernels.hpp"

namespace teli {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::LeakyReLU: return "LeakyReLU";
    case LayerKind::MaxPool2D: return "MaxPool2D";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Dense: return "Dense";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::Sigmoid: return "Sigmoid";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Conv2D
// ---------------------------------------------------------------------------

Conv2DLayer::Conv2DLayer(std::string name, std::int64_t in_channels, std::int64_t out_channels)
    : Layer(std::move(name)), in_channels_(in_channels), out_channels_(out_channels) {
  weight_ = {name_ + ".weight", Tensor({out_channels, in_channels, 3, 3}),
             Tensor({out_channels, in_channels, 3, 3})};
  bias_ = {name_ + ".bias", Tensor({out_channels}), Tensor({out_channels})};
}

Tensor Conv2DLayer::forward(const Tensor& input, Mode mode) {
  if (mode == Mode::Train) cached_input_ = input;
  return conv2d_forward(input, weight_.value, bias_.value);
}

Tensor Conv2DLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  if (cached_input_.numel() == 0) {
    throw Error(name_ + ": backward without a Train-mode forward");
  }
  Conv2dGrads g = conv2d_backward(cached_input_, weight_.value, grad_out, need_input_grad);
  weight_.grad = std::move(g.weights);
  bias_.grad = std::move(g.bias);
  return need_input_grad ? std::move(g.input) : Tensor();
}

Shape Conv2DLayer::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] != in_channels_) {
    throw ShapeError(name_ + ": expected [N," + std::to_string(in_channels_) +
                     ",H,W] input, got " + shape_str(input));
  }
  return {input[0], out_channels_, input[2], input[3]};
}

std::string Conv2DLayer::describe() const {
  return "Conv2D " + std::to_string(in_channels_) + "->" + std::to_string(out_channels_) +
         " 3x3 same";
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(std::string name, std::int64_t in_features, std::int64_t units)
    : Layer(std::move(name)), in_features_(in_features), units_(units) {
  weight_ = {name_ + ".weight", Tensor({in_features, units}), Tensor({in_features, units})};
  bias_ = {name_ + ".bias", Tensor({units}), Tensor({units})};
}

Tensor DenseLayer::forward(const Tensor& input, Mode mode) {
  if (input.rank() != 2 || input.dim(1) != in_features_) {
    throw ShapeError(name_ + ": expected [N," + std::to_string(in_features_) +
                     "] input, got " + shape_str(input.shape()));
  }
  if (mode == Mode::Train) cached_input_ = input;
  const std::int64_t n = input.dim(0);
  Tensor out({n, units_});
  for (std::int64_t i = 0; i < n; ++i) {
    float* row = out.data() + i * units_;
    for (std::int64_t u = 0; u < units_; ++u) row[u] = bias_.value[u];
  }
  gemm_nn(n, units_, in_features_, input.data(), weight_.value.data(), out.data(),
          /*accumulate=*/true);
  check_finite(out, "dense_forward");
  return out;
}

Tensor DenseLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  if (cached_input_.numel() == 0) {
    throw Error(name_ + ": backward without a Train-mode forward");
  }
  const std::int64_t n = cached_input_.dim(0);
  gemm_tn(in_features_, units_, n, cached_input_.data(), grad_out.data(),
          weight_.grad.data());
  for (std::int64_t u = 0; u < units_; ++u) {
    float s = 0.0f;
    for (std::int64_t i = 0; i < n; ++i) s += grad_out[i * units_ + u];
    bias_.grad[u] = s;
  }
  if (!need_input_grad) return Tensor();
  Tensor grad_in({n, in_features_});
  gemm_nt(n, in_features_, units_, grad_out.data(), weight_.value.data(), grad_in.data());
  check_finite(grad_in, "dense_backward");
  return grad_in;
}

Shape DenseLayer::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != in_features_) {
    throw ShapeError(name_ + ": expected [N," + std::to_string(in_features_) +
                     "] input, got " + shape_str(input));
  }
  return {input[0], units_};
}

std::string DenseLayer::describe() const {
  return "Dense " + std::to_string(in_features_) + "->" + std::to_string(units_);
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNormLayer::BatchNormLayer(std::string name, std::int64_t features, float epsilon,
                               float momentum)
    : Layer(std::move(name)), features_(features), epsilon_(epsilon), momentum_(momentum) {
  if (epsilon <= 0.0f) throw Error(name_ + ": epsilon must be positive");
  if (momentum <= 0.0f || momentum >= 1.0f) throw Error(name_ + ": momentum must be in (0,1)");
  gamma_ = {name_ + ".gamma", Tensor::full({features}, 1.0f), Tensor({features})};
  beta_ = {name_ + ".beta", Tensor({features}), Tensor({features})};
  running_mean_ = {name_ + ".running_mean", Tensor({features})};
  running_var_ = {name_ + ".running_var", Tensor::full({features}, 1.0f)};
}

namespace {

struct BnLayout {
  std::int64_t batch;     // N
  std::int64_t spatial;   // H*W (1 for rank-2 inputs)
  std::int64_t channels;  // C
};

BnLayout bn_layout(const std::string& name, const Tensor& input, std::int64_t features) {
  if (input.rank() == 4) {
    if (input.dim(1) != features) {
      throw ShapeError(name + ": channel count " + std::to_string(features) +
                       " does not match input " + shape_str(input.shape()));
    }
    return {input.dim(0), input.dim(2) * input.dim(3), features};
  }
  if (input.rank() == 2) {
    if (input.dim(1) != features) {
      throw ShapeError(name + ": feature count " + std::to_string(features) +
                       " does not match input " + shape_str(input.shape()));
    }
    return {input.dim(0), 1, features};
  }
  throw ShapeError(name + ": batchnorm expects rank 2 or 4, got " + shape_str(input.shape()));
}

// element index for (n, c, s) in either layout
inline std::int64_t bn_index(const BnLayout& lo, std::int64_t n, std::int64_t c,
                             std::int64_t s) {
  return (n * lo.channels + c) * lo.spatial + s;
}

}  // namespace

Tensor BatchNormLayer::forward(const Tensor& input, Mode mode) {
  const BnLayout lo = bn_layout(name_, input, features_);
  Tensor out(input.shape());
  const bool serial = strict_deterministic();

  if (mode == Mode::Inference) {
#pragma omp parallel for schedule(static) if (!serial)
    for (std::int64_t c = 0; c < lo.channels; ++c) {
      const float invstd = 1.0f / std::sqrt(running_var_.value[c] + epsilon_);
      const float g = gamma_.value[c], b = beta_.value[c], m = running_mean_.value[c];
      for (std::int64_t n = 0; n < lo.batch; ++n) {
        const float* src = input.data() + bn_index(lo, n, c, 0);
        float* dst = out.data() + bn_index(lo, n, c, 0);
#pragma omp simd
        for (std::int64_t s = 0; s < lo.spatial; ++s) dst[s] = (src[s] - m) * invstd * g + b;
      }
    }
    check_finite(out, "batchnorm_forward");
    return out;
  }

  const std::int64_t count = lo.batch * lo.spatial;
  if (count < 2) {
    throw Error(name_ + ": train-mode batch statistics need at least 2 values per channel, got " +
                std::to_string(count) + " for input " + shape_str(input.shape()));
  }

  cached_xhat_ = Tensor(input.shape());
  cached_invstd_.assign(static_cast<std::size_t>(lo.channels), 0.0f);

#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t c = 0; c < lo.channels; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (std::int64_t n = 0; n < lo.batch; ++n) {
      const float* src = input.data() + bn_index(lo, n, c, 0);
      for (std::int64_t s = 0; s < lo.spatial; ++s) {
        sum += src[s];
        sumsq += static_cast<double>(src[s]) * src[s];
      }
    }
    const double mean = sum / static_cast<double>(count);
    double var = sumsq / static_cast<double>(count) - mean * mean;
    if (var < 0.0) var = 0.0;  // cancellation guard

    const float meanf = static_cast<float>(mean);
    const float varf = static_cast<float>(var);
    const float invstd = 1.0f / std::sqrt(varf + epsilon_);
    cached_invstd_[static_cast<std::size_t>(c)] = invstd;
    const float g = gamma_.value[c], b = beta_.value[c];
    for (std::int64_t n = 0; n < lo.batch; ++n) {
      const float* src = input.data() + bn_index(lo, n, c, 0);
      float* xh = cached_xhat_.data() + bn_index(lo, n, c, 0);
      float* dst = out.data() + bn_index(lo, n, c, 0);
#pragma omp simd
      for (std::int64_t s = 0; s < lo.spatial; ++s) {
        const float v = (src[s] - meanf) * invstd;
        xh[s] = v;
        dst[s] = v * g + b;
      }
    }
    running_mean_.value[c] = momentum_ * running_mean_.value[c] + (1.0f - momentum_) * meanf;
    running_var_.value[c] = momentum_ * running_var_.value[c] + (1.0f - momentum_) * varf;
  }
  check_finite(out, "batchnorm_forward");
  return out;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  if (cached_xhat_.numel() == 0) {
    throw Error(name_ + ": backward without a Train-mode forward");
  }
  if (!grad_out.same_shape(cached_xhat_)) {
    throw ShapeError(name_ + ": grad_out " + shape_str(grad_out.shape()) +
                     " does not match forward input " + shape_str(cached_xhat_.shape()));
  }
  const BnLayout lo = bn_layout(name_, grad_out, features_);
  const std::int64_t count = lo.batch * lo.spatial;
  Tensor grad_in;
  if (need_input_grad) grad_in = Tensor(grad_out.shape());
  const bool serial = strict_deterministic();

#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t c = 0; c < lo.channels; ++c) {
    double dbeta = 0.0, dgamma = 0.0;
    for (std::int64_t n = 0; n < lo.batch; ++n) {
      const float* dy = grad_out.data() + bn_index(lo, n, c, 0);
      const float* xh = cached_xhat_.data() + bn_index(lo, n, c, 0);
      for (std::int64_t s = 0; s < lo.spatial; ++s) {
        dbeta += dy[s];
        dgamma += static_cast<double>(dy[s]) * xh[s];
      }
    }
    beta_.grad[c] = static_cast<float>(dbeta);
    gamma_.grad[c] = static_cast<float>(dgamma);

    if (need_input_grad) {
      // dx = gamma*invstd * (dy - mean(dy) - xhat*mean(dy*xhat))
      const float scale = gamma_.value[c] * cached_invstd_[static_cast<std::size_t>(c)];
      const float mean_dy = static_cast<float>(dbeta / static_cast<double>(count));
      const float mean_dyxh = static_cast<float>(dgamma / static_cast<double>(count));
      for (std::int64_t n = 0; n < lo.batch; ++n) {
        const float* dy = grad_out.data() + bn_index(lo, n, c, 0);
        const float* xh = cached_xhat_.data() + bn_index(lo, n, c, 0);
        float* dst = grad_in.data() + bn_index(lo, n, c, 0);
#pragma omp simd
        for (std::int64_t s = 0; s < lo.spatial; ++s) {
          dst[s] = scale * (dy[s] - mean_dy - xh[s] * mean_dyxh);
        }
      }
    }
  }
  if (!need_input_grad) return Tensor();
  check_finite(grad_in, "batchnorm_backward");
  return grad_in;
}

Shape BatchNormLayer::output_shape(const Shape& input) const {
  const std::int64_t feature_dim =
      input.size() == 4 ? input[1] : (input.size() == 2 ? input[1] : -1);
  if (feature_dim != features_) {
    throw ShapeError(name_ + ": batchnorm over " + std::to_string(features_) +
                     " channels cannot take input " + shape_str(input));
  }
  return input;
}

std::string BatchNormLayer::describe() const {
  return "BatchNorm(" + std::to_string(features_) + ")";
}

// ---------------------------------------------------------------------------
// LeakyReLU
// ---------------------------------------------------------------------------

LeakyReLULayer::LeakyReLULayer(std::string name, float alpha)
    : Layer(std::move(name)), alpha_(alpha) {
  if (alpha < 0.0f) throw Error(name_ + ": alpha must be >= 0");
}

Tensor LeakyReLULayer::forward(const Tensor& input, Mode mode) {
  const std::int64_t total = input.numel();
  Tensor out(input.shape());
  const float alpha = alpha_;
  const bool serial = strict_deterministic();
  if (mode == Mode::Train) {
    positive_mask_.assign(static_cast<std::size_t>(total), 0);
    cached_shape_ = input.shape();
    std::uint8_t* mask = positive_mask_.data();
#pragma omp parallel for simd schedule(static) if (!serial)
    for (std::int64_t i = 0; i < total; ++i) {
      const bool pos = input[i] > 0.0f;
      mask[i] = pos;
      out[i] = pos ? input[i] : alpha * input[i];
    }
  } else {
#pragma omp parallel for simd schedule(static) if (!serial)
    for (std::int64_t i = 0; i < total; ++i) {
      out[i] = input[i] > 0.0f ? input[i] : alpha * input[i];
    }
  }
  return out;
}

Tensor LeakyReLULayer::backward(const Tensor& grad_out, bool) {
  if (positive_mask_.empty()) {
    throw Error(name_ + ": backward without a Train-mode forward");
  }
  if (grad_out.numel() != static_cast<std::int64_t>(positive_mask_.size())) {
    throw ShapeError(name_ + ": grad_out " + shape_str(grad_out.shape()) +
                     " does not match forward input " + shape_str(cached_shape_));
  }
  Tensor grad_in(grad_out.shape());
  const float alpha = alpha_;
  const std::uint8_t* mask = positive_mask_.data();
  const std::int64_t total = grad_out.numel();
  const bool serial = strict_deterministic();
#pragma omp parallel for simd schedule(static) if (!serial)
  for (std::int64_t i = 0; i < total; ++i) {
    grad_in[i] = mask[i] ? grad_out[i] : alpha * grad_out[i];
  }
  return grad_in;
}

std::string LeakyReLULayer::describe() const {
  return "LeakyReLU(alpha=" + std::to_string(alpha_) + ")";
}

// ---------------------------------------------------------------------------
// MaxPool2D
// ---------------------------------------------------------------------------

Tensor MaxPool2DLayer::forward(const Tensor& input, Mode mode) {
  MaxPoolResult res = maxpool2d_forward(input);
  if (mode == Mode::Train) {
    cached_argmax_ = std::move(res.argmax);
    cached_input_shape_ = input.shape();
  }
  return std::move(res.output);
}

Tensor MaxPool2DLayer::backward(const Tensor& grad_out, bool) {
  if (cached_argmax_.empty()) {
    throw Error(name_ + ": backward without a Train-mode forward");
  }
  return maxpool2d_backward(cached_argmax_, grad_out, cached_input_shape_);
}

Shape MaxPool2DLayer::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[2] < 2 || input[3] < 2) {
    throw ShapeError(name_ + ": expected [N,C,H>=2,W>=2], got " + shape_str(input));
  }
  return {input[0], input[1], input[2] / 2, input[3] / 2};
}

// ---------------------------------------------------------------------------
// Flatten
// ---------------------------------------------------------------------------

Tensor FlattenLayer::forward(const Tensor& input, Mode mode) {
  if (mode == Mode::Train) cached_input_shape_ = input.shape();
  return flatten(input);
}

Tensor FlattenLayer::backward(const Tensor& grad_out, bool) {
  if (cached_input_shape_.empty()) {
    throw Error(name_ + ": backward without a Train-mode forward");
  }
  return grad_out.reshaped(cached_input_shape_);
}

Shape FlattenLayer::output_shape(const Shape& input) const {
  if (input.size() != 4) {
    throw ShapeError(name_ + ": expected rank-4 input, got " + shape_str(input));
  }
  return {input[0], input[1] * input[2] * input[3]};
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

DropoutLayer::DropoutLayer(std::string name, float rate, std::uint64_t seed)
    : Layer(std::move(name)), rate_(rate), rng_(seed) {
  if (rate < 0.0f || rate >= 1.0f) {
    throw Error(name_ + ": dropout rate must be in [0,1), got " + std::to_string(rate));
  }
}

Tensor DropoutLayer::forward(const Tensor& input, Mode mode) {
  if (mode == Mode::Inference) return input;
  const std::int64_t total = input.numel();
  keep_mask_.assign(static_cast<std::size_t>(total), 1);
  Tensor out(input.shape());
  const float scale = 1.0f / (1.0f - rate_);
  for (std::int64_t i = 0; i < total; ++i) {
    const bool keep = rng_.uniform() >= rate_;
    keep_mask_[static_cast<std::size_t>(i)] = keep;
    out[i] = keep ? input[i] * scale : 0.0f;
  }
  return out;
}

Tensor DropoutLayer::backward(const Tensor& grad_out, bool) {
  if (keep_mask_.empty()) {
    throw Error(name_ + ": backward without a Train-mode forward");
  }
  if (grad_out.numel() != static_cast<std::int64_t>(keep_mask_.size())) {
    throw ShapeError(name_ + ": grad_out does not match the cached dropout mask");
  }
  Tensor grad_in(grad_out.shape());
  const float scale = 1.0f / (1.0f - rate_);
  const std::int64_t total = grad_out.numel();
  for (std::int64_t i = 0; i < total; ++i) {
    grad_in[i] = keep_mask_[static_cast<std::size_t>(i)] ? grad_out[i] * scale : 0.0f;
  }
  return grad_in;
}

std::string DropoutLayer::describe() const {
  return "Dropout(rate=" + std::to_string(rate_) + ")";
}

// ---------------------------------------------------------------------------
// Sigmoid
// ---------------------------------------------------------------------------

Tensor SigmoidLayer::forward(const Tensor& input, Mode mode) {
  const std::int64_t total = input.numel();
  Tensor out(input.shape());
  for (std::int64_t i = 0; i < total; ++i) {
    const float x = input[i];
    // branch keeps exp() argument non-positive for stability at |x| large
    if (x >= 0.0f) {
      out[i] = 1.0f / (1.0f + std::exp(-x));
    } else {
      const float e = std::exp(x);
      out[i] = e / (1.0f + e);
    }
  }
  if (mode == Mode::Train) cached_output_ = out;
  check_finite(out, "sigmoid_forward");
  return out;
}

Tensor SigmoidLayer::backward(const Tensor& grad_out, bool) {
  if (cached_output_.numel() == 0) {
    throw Error(name_ + ": backward without a Train-mode forward");
  }
  if (!grad_out.same_shape(cached_output_)) {
    throw ShapeError(name_ + ": grad_out " + shape_str(grad_out.shape()) +
                     " does not match forward output " + shape_str(cached_output_.shape()));
  }
  Tensor grad_in(grad_out.shape());
  const std::int64_t total = grad_out.numel();
  for (std::int64_t i = 0; i < total; ++i) {
    const float y = cached_output_[i];
    grad_in[i] = grad_out[i] * y * (1.0f - y);
  }
  return grad_in;
}

}  // namespace teli
