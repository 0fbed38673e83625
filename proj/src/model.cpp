#include "teli/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace teli {

using nlohmann::json;

namespace {

std::string kind_token(LayerKind kind) { return layer_kind_name(kind); }

LayerKind kind_from_token(const std::string& token) {
  for (LayerKind k : {LayerKind::Conv2D, LayerKind::BatchNorm, LayerKind::LeakyReLU,
                      LayerKind::MaxPool2D, LayerKind::Flatten, LayerKind::Dense,
                      LayerKind::Dropout, LayerKind::Sigmoid}) {
    if (token == layer_kind_name(k)) return k;
  }
  throw Error("unknown layer kind '" + token + "'");
}

json desc_to_json(const LayerDesc& d) {
  json j;
  j["kind"] = kind_token(d.kind);
  j["name"] = d.name;
  switch (d.kind) {
    case LayerKind::Conv2D:
      j["in_channels"] = d.in_channels;
      j["out_channels"] = d.out_channels;
      break;
    case LayerKind::Dense:
      j["in_features"] = d.in_features;
      j["units"] = d.units;
      break;
    case LayerKind::BatchNorm:
      j["features"] = d.features;
      j["epsilon"] = d.epsilon;
      j["momentum"] = d.momentum;
      break;
    case LayerKind::LeakyReLU:
      j["alpha"] = d.alpha;
      break;
    case LayerKind::Dropout:
      j["rate"] = d.rate;
      break;
    default:
      break;
  }
  return j;
}

LayerDesc desc_from_json(const json& j) {
  LayerDesc d;
  d.kind = kind_from_token(j.at("kind").get<std::string>());
  d.name = j.at("name").get<std::string>();
  switch (d.kind) {
    case LayerKind::Conv2D:
      d.in_channels = j.at("in_channels").get<std::int64_t>();
      d.out_channels = j.at("out_channels").get<std::int64_t>();
      break;
    case LayerKind::Dense:
      d.in_features = j.at("in_features").get<std::int64_t>();
      d.units = j.at("units").get<std::int64_t>();
      break;
    case LayerKind::BatchNorm:
      d.features = j.at("features").get<std::int64_t>();
      d.epsilon = j.at("epsilon").get<float>();
      d.momentum = j.at("momentum").get<float>();
      break;
    case LayerKind::LeakyReLU:
      d.alpha = j.at("alpha").get<float>();
      break;
    case LayerKind::Dropout:
      d.rate = j.at("rate").get<float>();
      break;
    default:
      break;
  }
  return d;
}

std::unique_ptr<Layer> make_layer(const LayerDesc& d, std::uint64_t dropout_seed) {
  switch (d.kind) {
    case LayerKind::Conv2D:
      return std::make_unique<Conv2DLayer>(d.name, d.in_channels, d.out_channels);
    case LayerKind::Dense:
      return std::make_unique<DenseLayer>(d.name, d.in_features, d.units);
    case LayerKind::BatchNorm:
      return std::make_unique<BatchNormLayer>(d.name, d.features, d.epsilon, d.momentum);
    case LayerKind::LeakyReLU:
      return std::make_unique<LeakyReLULayer>(d.name, d.alpha);
    case LayerKind::MaxPool2D:
      return std::make_unique<MaxPool2DLayer>(d.name);
    case LayerKind::Flatten:
      return std::make_unique<FlattenLayer>(d.name);
    case LayerKind::Dropout:
      return std::make_unique<DropoutLayer>(d.name, d.rate, dropout_seed);
    case LayerKind::Sigmoid:
      return std::make_unique<SigmoidLayer>(d.name);
  }
  throw Error("unreachable layer kind");
}

}  // namespace

std::string ModelSpec::to_json() const {
  json j;
  j["name"] = name;
  j["input"] = {{"channels", channels}, {"height", height}, {"width", width}};
  json layer_list = json::array();
  for (const auto& d : layers) layer_list.push_back(desc_to_json(d));
  j["layers"] = std::move(layer_list);
  return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.channels = j.at("input").at("channels").get<std::int64_t>();
  spec.height = j.at("input").at("height").get<std::int64_t>();
  spec.width = j.at("input").at("width").get<std::int64_t>();
  for (const auto& lj : j.at("layers")) spec.layers.push_back(desc_from_json(lj));
  return spec;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

Tensor Model::forward(const Tensor& input, Mode mode) {
  Tensor x = input;
  for (auto& layer : layers_) x = layer->forward(x, mode);
  return x;
}

void Model::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g, /*need_input_grad=*/i != 0);
  }
}

std::vector<ParamSlot*> Model::params() {
  std::vector<ParamSlot*> out;
  for (auto& layer : layers_)
    for (ParamSlot* slot : layer->params()) out.push_back(slot);
  return out;
}

std::vector<StateSlot*> Model::state() {
  std::vector<StateSlot*> out;
  for (auto& layer : layers_)
    for (StateSlot* slot : layer->state()) out.push_back(slot);
  return out;
}

void Model::clear_caches() {
  for (auto& layer : layers_) layer->clear_cache();
}

std::string Model::summary() const {
  std::ostringstream os;
  os << "Model: " << spec_.name << "\n";
  os << "Input: [N," << spec_.channels << "," << spec_.height << "," << spec_.width << "]\n";
  const std::string bar(72, '-');
  os << bar << "\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %-28s %-20s %12s\n", "layer", "type", "output shape",
                "params");
  os << line << bar << "\n";
  Shape shape = {1, spec_.channels, spec_.height, spec_.width};
  std::int64_t total = 0;
  for (const auto& layer : layers_) {
    shape = layer->output_shape(shape);
    std::int64_t count = 0;
    for (const ParamSlot* slot : const_cast<Layer&>(*layer).params()) count += slot->value.numel();
    total += count;
    std::string shape_text = "[N";
    for (std::size_t i = 1; i < shape.size(); ++i) shape_text += "," + std::to_string(shape[i]);
    shape_text += "]";
    std::snprintf(line, sizeof(line), "%-12s %-28s %-20s %12lld\n", layer->name().c_str(),
                  layer->describe().c_str(), shape_text.c_str(),
                  static_cast<long long>(count));
    os << line;
  }
  os << bar << "\n";
  os << "Trainable params: " << total << "\n";
  return os.str();
}

Model build_model(const ModelSpec& spec, std::optional<std::uint64_t> seed) {
  if (spec.layers.empty()) throw Error("model spec has no layers");
  Model model;
  model.spec_ = spec;
  model.layers_.reserve(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const std::uint64_t dropout_seed = seed ? mix_seed(*seed, 0x9000 + i) : 0x9000 + i;
    model.layers_.push_back(make_layer(spec.layers[i], dropout_seed));
  }
  // shape validation: walk the stack once; throws on any adjacent mismatch
  Shape shape = model.input_shape();
  for (auto& layer : model.layers_) shape = layer->output_shape(shape);
  if (seed) init_weights(model, *seed);
  return model;
}

void init_weights(Model& model, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x1417));
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    Layer& layer = model.layer(i);
    switch (layer.kind()) {
      case LayerKind::Conv2D: {
        auto& conv = static_cast<Conv2DLayer&>(layer);
        Tensor& w = conv.weight().value;
        const std::int64_t fan_in = w.dim(1) * 9, fan_out = w.dim(0) * 9;
        const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
        for (std::int64_t j = 0; j < w.numel(); ++j) w[j] = rng.uniform(-limit, limit);
        conv.bias().value.fill(0.0f);
        conv.weight().grad.fill(0.0f);
        conv.bias().grad.fill(0.0f);
        break;
      }
      case LayerKind::Dense: {
        auto& dense = static_cast<DenseLayer&>(layer);
        Tensor& w = dense.weight().value;
        const std::int64_t fan_in = w.dim(0), fan_out = w.dim(1);
        const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
        for (std::int64_t j = 0; j < w.numel(); ++j) w[j] = rng.uniform(-limit, limit);
        dense.bias().value.fill(0.0f);
        dense.weight().grad.fill(0.0f);
        dense.bias().grad.fill(0.0f);
        break;
      }
      case LayerKind::BatchNorm: {
        auto& bn = static_cast<BatchNormLayer&>(layer);
        bn.gamma().value.fill(1.0f);
        bn.beta().value.fill(0.0f);
        bn.gamma().grad.fill(0.0f);
        bn.beta().grad.fill(0.0f);
        bn.running_mean().value.fill(0.0f);
        bn.running_var().value.fill(1.0f);
        break;
      }
      default:
        break;
    }
  }
}

std::int64_t count_trainable_params(Model& model) {
  std::int64_t total = 0;
  for (const ParamSlot* slot : model.params()) total += slot->value.numel();
  return total;
}

// ---------------------------------------------------------------------------
// architecture builders
// ---------------------------------------------------------------------------

ModelSpec telinet_spec(const TelinetConfig& config) {
  ModelSpec spec;
  spec.name = "telinet";
  spec.channels = config.channels;
  spec.height = config.image_size;
  spec.width = config.image_size;

  auto conv = [&](const std::string& name, std::int64_t in, std::int64_t out) {
    LayerDesc d;
    d.kind = LayerKind::Conv2D;
    d.name = name;
    d.in_channels = in;
    d.out_channels = out;
    spec.layers.push_back(d);
  };
  auto bn = [&](const std::string& name, std::int64_t features) {
    LayerDesc d;
    d.kind = LayerKind::BatchNorm;
    d.name = name;
    d.features = features;
    d.epsilon = config.bn_epsilon;
    d.momentum = config.bn_momentum;
    spec.layers.push_back(d);
  };
  auto act = [&](const std::string& name) {
    LayerDesc d;
    d.kind = LayerKind::LeakyReLU;
    d.name = name;
    d.alpha = config.leaky_alpha;
    spec.layers.push_back(d);
  };
  auto pool = [&](const std::string& name) {
    LayerDesc d;
    d.kind = LayerKind::MaxPool2D;
    d.name = name;
    spec.layers.push_back(d);
  };
  auto dense = [&](const std::string& name, std::int64_t in, std::int64_t units) {
    LayerDesc d;
    d.kind = LayerKind::Dense;
    d.name = name;
    d.in_features = in;
    d.units = units;
    spec.layers.push_back(d);
  };
  auto dropout = [&](const std::string& name) {
    LayerDesc d;
    d.kind = LayerKind::Dropout;
    d.name = name;
    d.rate = config.dropout_rate;
    spec.layers.push_back(d);
  };

  // first conv block has no batch norm; the three following blocks do
  conv("conv1", config.channels, config.filters[0]);
  act("act1");
  std::int64_t channels = config.filters[0];
  for (int block = 2; block <= 4; ++block) {
    const std::string suffix = std::to_string(block);
    const std::int64_t out = config.filters[static_cast<std::size_t>(block - 1)];
    conv("conv" + suffix, channels, out);
    bn("bn" + suffix, out);
    act("act" + suffix);
    pool("pool" + suffix);
    channels = out;
  }
  {
    LayerDesc d;
    d.kind = LayerKind::Flatten;
    d.name = "flatten";
    spec.layers.push_back(d);
  }
  const std::int64_t spatial = config.image_size / 8;  // three 2x2 pools
  std::int64_t features = channels * spatial * spatial;
  for (int block = 1; block <= 2; ++block) {
    const std::string suffix = std::to_string(block);
    dense("fc" + suffix, features, 256);
    bn("bn_fc" + suffix, 256);
    act("act_fc" + suffix);
    if (block == 2 || !config.dropout_second_block_only) dropout("drop" + suffix);
    features = 256;
  }
  dense("fc3", 256, 1);
  {
    LayerDesc d;
    d.kind = LayerKind::Sigmoid;
    d.name = "sigmoid";
    spec.layers.push_back(d);
  }
  return spec;
}

ModelSpec vgg16_spec(const Vgg16Config& config) {
  ModelSpec spec;
  spec.name = "vgg16";
  spec.channels = config.channels;
  spec.height = config.image_size;
  spec.width = config.image_size;

  const std::vector<std::vector<std::int64_t>> blocks = {
      {64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};

  std::int64_t channels = config.channels;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const std::string suffix = std::to_string(b + 1) + "_" + std::to_string(i + 1);
      LayerDesc conv;
      conv.kind = LayerKind::Conv2D;
      conv.name = "conv" + suffix;
      conv.in_channels = channels;
      conv.out_channels = blocks[b][i];
      spec.layers.push_back(conv);
      LayerDesc relu;
      relu.kind = LayerKind::LeakyReLU;
      relu.name = "relu" + suffix;
      relu.alpha = 0.0f;  // plain ReLU
      spec.layers.push_back(relu);
      channels = blocks[b][i];
    }
    LayerDesc pool;
    pool.kind = LayerKind::MaxPool2D;
    pool.name = "pool" + std::to_string(b + 1);
    spec.layers.push_back(pool);
  }
  LayerDesc flat;
  flat.kind = LayerKind::Flatten;
  flat.name = "flatten";
  spec.layers.push_back(flat);

  const std::int64_t spatial = config.image_size / 32;  // five 2x2 pools
  std::int64_t features = channels * spatial * spatial;
  const std::int64_t fc_units[] = {4096, 4096};
  for (int i = 0; i < 2; ++i) {
    LayerDesc dense;
    dense.kind = LayerKind::Dense;
    dense.name = "fc" + std::to_string(i + 1);
    dense.in_features = features;
    dense.units = fc_units[i];
    spec.layers.push_back(dense);
    LayerDesc relu;
    relu.kind = LayerKind::LeakyReLU;
    relu.name = "relu_fc" + std::to_string(i + 1);
    relu.alpha = 0.0f;
    spec.layers.push_back(relu);
    features = fc_units[i];
  }
  LayerDesc head;
  head.kind = LayerKind::Dense;
  head.name = "fc3";
  head.in_features = features;
  head.units = 1;
  spec.layers.push_back(head);
  LayerDesc sig;
  sig.kind = LayerKind::Sigmoid;
  sig.name = "sigmoid";
  spec.layers.push_back(sig);
  return spec;
}

// ---------------------------------------------------------------------------
// checkpoint IO
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'E', 'L', 'I', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_tensor_record(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.append(name);
  out.push_back(0);  // dtype tag: f32
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u64(out, static_cast<std::uint64_t>(t.dim(i)));
  const std::size_t bytes = static_cast<std::size_t>(t.numel()) * sizeof(float);
  const std::size_t off = out.size();
  out.resize(off + bytes);
  std::memcpy(out.data() + off, t.data(), bytes);
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void read_floats(float* dst, std::size_t count) {
    need(count * sizeof(float));
    std::memcpy(dst, buf_.data() + pos_, count * sizeof(float));
    pos_ += count * sizeof(float);
  }

  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) {
      throw CheckpointCorrupt("checkpoint file truncated: " + path_);
    }
  }
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

Tensor read_tensor_record(Reader& r, std::string& name_out) {
  const std::uint32_t name_len = r.u32();
  name_out = r.bytes(name_len);
  const std::uint8_t dtype = r.u8();
  if (dtype != 0) throw CheckpointCorrupt("unknown dtype tag in checkpoint record " + name_out);
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw CheckpointCorrupt("implausible tensor rank in checkpoint");
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::int64_t>(r.u64()));
  Tensor t(shape);
  r.read_floats(t.data(), static_cast<std::size_t>(t.numel()));
  return t;
}

}  // namespace

void save_checkpoint(Model& model, const Rmsprop* optimizer, std::int64_t epoch,
                     std::uint64_t seed, const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  const std::string spec_json = model.spec().to_json();
  put_u32(out, static_cast<std::uint32_t>(spec_json.size()));
  out.append(spec_json);
  put_u64(out, static_cast<std::uint64_t>(epoch));
  put_u64(out, seed);
  const bool has_opt = optimizer != nullptr && !optimizer->cache().empty();
  out.push_back(has_opt ? 1 : 0);

  std::uint32_t n_records = 0;
  std::string records;
  for (const ParamSlot* slot : model.params()) {
    put_tensor_record(records, "param/" + slot->name, slot->value);
    ++n_records;
  }
  for (const StateSlot* slot : model.state()) {
    put_tensor_record(records, "state/" + slot->name, slot->value);
    ++n_records;
  }
  if (has_opt) {
    for (const StateSlot& slot : optimizer->cache()) {
      put_tensor_record(records, "opt/" + slot.name, slot.value);
      ++n_records;
    }
  }
  put_u32(out, n_records);
  out.append(records);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();

  Reader r(buf, path.string());
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw CheckpointCorrupt("bad magic in checkpoint: " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw CheckpointVersionMismatch("checkpoint version " + std::to_string(version) +
                                    " unsupported (expected " + std::to_string(kVersion) +
                                    "): " + path.string());
  }
  const std::uint32_t spec_len = r.u32();
  const std::string spec_json = r.bytes(spec_len);
  ModelSpec spec;
  try {
    spec = ModelSpec::from_json(spec_json);
  } catch (const std::exception& e) {
    throw CheckpointCorrupt("unreadable model spec in checkpoint: " + std::string(e.what()));
  }

  LoadedCheckpoint loaded;
  loaded.epoch = static_cast<std::int64_t>(r.u64());
  loaded.seed = r.u64();
  loaded.has_optimizer = r.u8() != 0;
  loaded.model = build_model(spec, std::nullopt);

  const std::uint32_t n_records = r.u32();
  std::vector<std::pair<std::string, Tensor>> records;
  records.reserve(n_records);
  for (std::uint32_t i = 0; i < n_records; ++i) {
    std::string name;
    Tensor t = read_tensor_record(r, name);
    records.emplace_back(std::move(name), std::move(t));
  }
  if (!r.at_end()) throw CheckpointCorrupt("trailing bytes in checkpoint: " + path.string());

  std::size_t next = 0;
  auto take = [&](const std::string& expected, const Shape& shape) -> Tensor {
    if (next >= records.size()) {
      throw CheckpointSpecMismatch("checkpoint missing tensor record '" + expected + "'");
    }
    auto& [name, tensor] = records[next];
    if (name != expected) {
      throw CheckpointSpecMismatch("checkpoint record '" + name + "' where '" + expected +
                                   "' was expected");
    }
    if (tensor.shape() != shape) {
      throw CheckpointSpecMismatch("checkpoint record '" + name + "' has shape " +
                                   shape_str(tensor.shape()) + ", model expects " +
                                   shape_str(shape));
    }
    ++next;
    return std::move(tensor);
  };

  for (ParamSlot* slot : loaded.model.params()) {
    slot->value = take("param/" + slot->name, slot->value.shape());
  }
  for (StateSlot* slot : loaded.model.state()) {
    slot->value = take("state/" + slot->name, slot->value.shape());
  }
  if (loaded.has_optimizer) {
    for (ParamSlot* slot : loaded.model.params()) {
      StateSlot cache{slot->name, Tensor()};
      cache.value = take("opt/" + slot->name, slot->value.shape());
      loaded.optimizer_cache.push_back(std::move(cache));
    }
  }
  if (next != records.size()) {
    throw CheckpointSpecMismatch("checkpoint holds " + std::to_string(records.size()) +
                                 " tensor records, model consumes " + std::to_string(next));
  }
  return loaded;
}

}  // namespace teli
