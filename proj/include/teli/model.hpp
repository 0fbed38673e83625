#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "teli/layers.hpp"
#include "teli/optim.hpp"
#include "teli/tensor.hpp"

namespace teli {

// Declarative layer description; everything needed to rebuild the layer.
struct LayerDesc {
  LayerKind kind = LayerKind::Flatten;
  std::string name;
  std::int64_t in_channels = 0, out_channels = 0;  // Conv2D
  std::int64_t in_features = 0, units = 0;         // Dense
  std::int64_t features = 0;                       // BatchNorm
  float epsilon = 1e-3f, momentum = 0.99f;         // BatchNorm
  float alpha = 0.3f;                              // LeakyReLU
  float rate = 0.1f;                               // Dropout
};

struct ModelSpec {
  std::string name;
  std::int64_t channels = 1, height = 256, width = 256;
  std::vector<LayerDesc> layers;

  std::string to_json() const;
  static ModelSpec from_json(const std::string& text);
};

// Ordered layer stack built from a ModelSpec. Move-only; one thread drives
// forward/backward at a time.
class Model {
 public:
  Model() = default;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelSpec& spec() const { return spec_; }
  const std::string& name() const { return spec_.name; }

  Tensor forward(const Tensor& input, Mode mode);
  // Runs backward through the stack; gradient w.r.t. the network input is
  // not materialized (the first layer skips it).
  void backward(const Tensor& grad_out);

  std::vector<ParamSlot*> params();
  std::vector<StateSlot*> state();

  std::size_t num_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }

  Shape input_shape() const { return {1, spec_.channels, spec_.height, spec_.width}; }

  // Layer table with output shapes and per-layer parameter counts.
  std::string summary() const;

  void clear_caches();

 private:
  friend Model build_model(const ModelSpec& spec, std::optional<std::uint64_t> seed);
  ModelSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Validates the spec by propagating shapes through the stack, constructs the
// layers, and (when seed is given) initializes weights deterministically.
Model build_model(const ModelSpec& spec, std::optional<std::uint64_t> seed);

// Glorot-uniform conv/dense weights, zero biases and beta, unit gamma,
// zero/unit running stats. Same seed, same bits.
void init_weights(Model& model, std::uint64_t seed);

std::int64_t count_trainable_params(Model& model);

struct TelinetConfig {
  std::int64_t channels = 1;
  std::int64_t image_size = 256;
  std::array<std::int64_t, 4> filters = {16, 32, 32, 32};
  float leaky_alpha = 0.3f;
  float dropout_rate = 0.10f;
  // The wording "a 10% dropout for this dense layer" leaves it ambiguous
  // whether both dense blocks get dropout; default is both.
  bool dropout_second_block_only = false;
  float bn_epsilon = 1e-3f;
  float bn_momentum = 0.99f;
};

ModelSpec telinet_spec(const TelinetConfig& config = {});

struct Vgg16Config {
  std::int64_t channels = 3;
  std::int64_t image_size = 224;
};

ModelSpec vgg16_spec(const Vgg16Config& config = {});

// ---------------------------------------------------------------------------
// Checkpoints: little-endian binary, magic + version header, model spec echo,
// then length-prefixed named tensor records. Bitwise roundtrip.
// ---------------------------------------------------------------------------

struct LoadedCheckpoint {
  Model model;
  bool has_optimizer = false;
  std::vector<StateSlot> optimizer_cache;  // parameter order
  std::int64_t epoch = 0;
  std::uint64_t seed = 0;
};

void save_checkpoint(Model& model, const Rmsprop* optimizer, std::int64_t epoch,
                     std::uint64_t seed, const std::filesystem::path& path);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace teli
