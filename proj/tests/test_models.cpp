#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "teli/model.hpp"

using teli::Tensor;

namespace {

// Closed-form parameter counts, written out independently of the builders.
std::int64_t conv_params(std::int64_t in, std::int64_t out) { return out * in * 9 + out; }
std::int64_t dense_params(std::int64_t in, std::int64_t units) { return in * units + units; }
std::int64_t bn_params(std::int64_t features) { return 2 * features; }

std::int64_t telinet_closed_form() {
  std::int64_t total = 0;
  total += conv_params(1, 16);            // conv1 at 256x256
  total += conv_params(16, 32) + bn_params(32);
  total += conv_params(32, 32) + bn_params(32);
  total += conv_params(32, 32) + bn_params(32);
  const std::int64_t flat = 32 * 32 * 32;  // 256 -> 128 -> 64 -> 32 after pooling
  total += dense_params(flat, 256) + bn_params(256);
  total += dense_params(256, 256) + bn_params(256);
  total += dense_params(256, 1);
  return total;
}

std::int64_t vgg16_closed_form() {
  std::int64_t total = 0;
  std::int64_t in = 3;
  for (std::int64_t f : {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512}) {
    total += conv_params(in, f);
    in = f;
  }
  total += dense_params(512 * 7 * 7, 4096);
  total += dense_params(4096, 4096);
  total += dense_params(4096, 1);
  return total;
}

}  // namespace

TEST_CASE("telinet trainable parameter count") {
  CHECK(telinet_closed_form() == 8479425);
  teli::Model model = teli::build_model(teli::telinet_spec(), 1);
  const std::int64_t count = teli::count_trainable_params(model);
  CHECK(count == telinet_closed_form());
  CHECK(count == 8479425);
  CHECK(count < 8500000);
}

TEST_CASE("vgg16 trainable parameter count") {
  CHECK(vgg16_closed_form() == 134264641);
  teli::Model model = teli::build_model(teli::vgg16_spec(), std::nullopt);
  const std::int64_t count = teli::count_trainable_params(model);
  CHECK(count == vgg16_closed_form());
  CHECK(count == 134264641);
  CHECK(count > 134000000);
}

TEST_CASE("vgg16 first conv layer is 64 filters on 224x224 input") {
  teli::ModelSpec spec = teli::vgg16_spec();
  CHECK(spec.height == 224);
  CHECK(spec.width == 224);
  CHECK(spec.layers[0].kind == teli::LayerKind::Conv2D);
  CHECK(spec.layers[0].out_channels == 64);
}

TEST_CASE("single dense model counts weights plus biases") {
  teli::ModelSpec spec;
  spec.name = "tiny";
  spec.channels = 1;
  spec.height = 1;
  spec.width = 2;
  teli::LayerDesc flat;
  flat.kind = teli::LayerKind::Flatten;
  flat.name = "flatten";
  spec.layers.push_back(flat);
  teli::LayerDesc dense;
  dense.kind = teli::LayerKind::Dense;
  dense.name = "fc";
  dense.in_features = 2;
  dense.units = 3;
  spec.layers.push_back(dense);
  teli::Model model = teli::build_model(spec, 0);
  CHECK(teli::count_trainable_params(model) == 9);
}

TEST_CASE("telinet forward shape trace ends at [1,1]") {
  teli::Model model = teli::build_model(teli::telinet_spec(), std::nullopt);
  teli::Shape shape = model.input_shape();
  CHECK(shape == teli::Shape{1, 1, 256, 256});
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    shape = model.layer(i).output_shape(shape);
  }
  CHECK(shape == teli::Shape{1, 1});
}

TEST_CASE("shape validation rejects inconsistent adjacent layers") {
  teli::ModelSpec spec = teli::telinet_spec();
  spec.layers[2].features = 99;  // bn2 expects the conv2 filter count
  CHECK_THROWS_AS(teli::build_model(spec, 1), teli::ShapeError);

  teli::ModelSpec spec2 = teli::telinet_spec();
  spec2.layers[0].out_channels = 8;  // conv2 then sees 8 channels, expects 16
  CHECK_THROWS_AS(teli::build_model(spec2, 1), teli::ShapeError);
}

TEST_CASE("same seed twice builds bitwise-identical parameters") {
  teli::Model a = teli::build_model(teli::telinet_spec(), 1234);
  teli::Model b = teli::build_model(teli::telinet_spec(), 1234);
  auto pa = a.params(), pb = b.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(helpers::bitwise_equal(pa[i]->value, pb[i]->value));
  }

  teli::Model c = teli::build_model(teli::telinet_spec(), 4321);
  bool any_different = false;
  auto pc = c.params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!helpers::bitwise_equal(pa[i]->value, pc[i]->value)) any_different = true;
  }
  CHECK(any_different);
}

TEST_CASE("initialization fills biases with zeros and gamma with ones") {
  teli::Model model = teli::build_model(teli::telinet_spec(), 5);
  for (teli::ParamSlot* slot : model.params()) {
    if (slot->name.find(".bias") != std::string::npos ||
        slot->name.find(".beta") != std::string::npos) {
      for (std::int64_t i = 0; i < slot->value.numel(); ++i) CHECK(slot->value[i] == 0.0f);
    }
    if (slot->name.find(".gamma") != std::string::npos) {
      for (std::int64_t i = 0; i < slot->value.numel(); ++i) CHECK(slot->value[i] == 1.0f);
    }
  }
  for (teli::StateSlot* slot : model.state()) {
    const float expected = slot->name.find("running_var") != std::string::npos ? 1.0f : 0.0f;
    for (std::int64_t i = 0; i < slot->value.numel(); ++i) CHECK(slot->value[i] == expected);
  }
}

TEST_CASE("glorot weights have near-zero sample mean") {
  teli::Model model = teli::build_model(teli::telinet_spec(), 31337);
  // conv2..conv4 together hold ~23k draws; limit for 16->32 convs is
  // sqrt(6/(16*9+32*9)) ~ 0.118, stderr of the mean ~ limit/sqrt(3n)
  double sum = 0.0;
  std::int64_t n = 0;
  double limit_sq_sum = 0.0;
  for (teli::ParamSlot* slot : model.params()) {
    if (slot->name.find("conv") == std::string::npos ||
        slot->name.find(".weight") == std::string::npos) {
      continue;
    }
    const std::int64_t fan_in = slot->value.dim(1) * 9, fan_out = slot->value.dim(0) * 9;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::int64_t i = 0; i < slot->value.numel(); ++i) {
      sum += slot->value[i];
      limit_sq_sum += limit * limit / 3.0;  // variance of U(-limit, limit)
      ++n;
    }
  }
  REQUIRE(n >= 10000);
  const double mean = sum / static_cast<double>(n);
  const double stderr_mean = std::sqrt(limit_sq_sum) / static_cast<double>(n);
  CHECK(std::fabs(mean) <= 3.0 * stderr_mean);
}

TEST_CASE("model spec JSON roundtrip") {
  teli::ModelSpec spec = teli::telinet_spec();
  const std::string text = spec.to_json();
  teli::ModelSpec parsed = teli::ModelSpec::from_json(text);
  CHECK(parsed.to_json() == text);
  CHECK(parsed.layers.size() == spec.layers.size());
  CHECK(parsed.name == "telinet");
}

TEST_CASE("checkpoint roundtrip is bitwise and deterministic") {
  helpers::TempDir tmp("ckpt");
  teli::Model model = teli::build_model(teli::telinet_spec(), 7);

  teli::Rmsprop opt({1e-3, 0.9f, 1e-7f});
  // one step so the optimizer cache is non-trivial
  for (teli::ParamSlot* slot : model.params()) slot->grad.fill(0.01f);
  opt.step(model.params());

  const auto path1 = tmp.path() / "a.ckpt";
  const auto path2 = tmp.path() / "b.ckpt";
  teli::save_checkpoint(model, &opt, 3, 7, path1);

  teli::LoadedCheckpoint loaded = teli::load_checkpoint(path1);
  CHECK(loaded.epoch == 3);
  CHECK(loaded.seed == 7);
  CHECK(loaded.has_optimizer);

  auto pa = model.params(), pb = loaded.model.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(helpers::bitwise_equal(pa[i]->value, pb[i]->value));
  }

  teli::Rmsprop opt2({1e-3, 0.9f, 1e-7f});
  opt2.cache() = std::move(loaded.optimizer_cache);
  teli::save_checkpoint(loaded.model, &opt2, 3, 7, path2);

  std::ifstream f1(path1, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(!b1.empty());
}

TEST_CASE("loaded model forward equals pre-save forward bitwise") {
  helpers::TempDir tmp("ckpt_fwd");
  teli::Model model = teli::build_model(teli::telinet_spec(), 21);
  Tensor input({1, 1, 256, 256});
  teli::Rng rng(22);
  helpers::fill_uniform(input, rng, 0.0f, 1.0f);
  Tensor before = model.forward(input, teli::Mode::Inference);

  const auto path = tmp.path() / "m.ckpt";
  teli::save_checkpoint(model, nullptr, 0, 21, path);
  teli::LoadedCheckpoint loaded = teli::load_checkpoint(path);
  Tensor after = loaded.model.forward(input, teli::Mode::Inference);
  CHECK(helpers::bitwise_equal(before, after));
}

TEST_CASE("checkpoint error taxonomy: corrupt, version, spec") {
  helpers::TempDir tmp("ckpt_err");
  teli::Model model = teli::build_model(teli::telinet_spec(), 2);
  const auto path = tmp.path() / "m.ckpt";
  teli::save_checkpoint(model, nullptr, 0, 2, path);

  // truncated file
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(tmp.path() / "trunc.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(teli::load_checkpoint(tmp.path() / "trunc.ckpt"), teli::CheckpointCorrupt);

  // bad magic
  {
    std::ofstream out(tmp.path() / "junk.ckpt", std::ios::binary);
    out << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(teli::load_checkpoint(tmp.path() / "junk.ckpt"), teli::CheckpointCorrupt);

  // version bump
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[8] = 9;  // version u32 little-endian follows the 8-byte magic
    std::ofstream out(tmp.path() / "ver.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(teli::load_checkpoint(tmp.path() / "ver.ckpt"),
                  teli::CheckpointVersionMismatch);

  // spec mismatch: records re-ordered against the spec echo
  {
    teli::Model other = teli::build_model(teli::telinet_spec(), 3);
    teli::save_checkpoint(other, nullptr, 0, 3, tmp.path() / "other.ckpt");
    std::ifstream in(tmp.path() / "other.ckpt", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // the first record name is "param/conv1.weight"; corrupt the layer name
    const auto pos = bytes.find("param/conv1.weight");
    REQUIRE(pos != std::string::npos);
    bytes[pos + 6] = 'x';
    std::ofstream out(tmp.path() / "spec.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(teli::load_checkpoint(tmp.path() / "spec.ckpt"),
                  teli::CheckpointSpecMismatch);
}

TEST_CASE("summary table lists layers and the total") {
  teli::Model model = teli::build_model(teli::telinet_spec(), std::nullopt);
  const std::string text = model.summary();
  CHECK(text.find("conv1") != std::string::npos);
  CHECK(text.find("fc3") != std::string::npos);
  CHECK(text.find("8479425") != std::string::npos);
}
