#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "teli/optim.hpp"

using teli::Tensor;

TEST_CASE("rmsprop: zero gradient leaves parameters unchanged, cache decays") {
  Tensor param({3}, {1.0f, -2.0f, 0.5f});
  Tensor grad({3});
  Tensor cache({3}, {0.4f, 0.0f, 1.0f});
  const Tensor before = param;
  teli::rmsprop_step(param, grad, cache, {0.05, 0.9f, 1e-7f});
  CHECK(helpers::bitwise_equal(param, before));
  CHECK(cache[0] == doctest::Approx(0.36f));
  CHECK(cache[2] == doctest::Approx(0.9f));
}

TEST_CASE("rmsprop scalar first step reproduces the documented value") {
  Tensor param({1}, {1.0f});
  Tensor grad({1}, {1.0f});
  Tensor cache({1});
  teli::rmsprop_step(param, grad, cache, {0.01, 0.9f, 1e-7f});
  CHECK(cache[0] == doctest::Approx(0.1f));
  CHECK(param[0] == doctest::Approx(0.96838).epsilon(1e-5));
}

TEST_CASE("rmsprop second identical step is smaller than the first") {
  Tensor param({1}, {1.0f});
  Tensor grad({1}, {1.0f});
  Tensor cache({1});
  teli::RmspropConfig config{0.01, 0.9f, 1e-7f};
  teli::rmsprop_step(param, grad, cache, config);
  const float first_delta = 1.0f - param[0];
  const float before_second = param[0];
  teli::rmsprop_step(param, grad, cache, config);
  const float second_delta = before_second - param[0];
  CHECK(second_delta > 0.0f);
  CHECK(second_delta < first_delta);
}

TEST_CASE("rmsprop descends a scalar quadratic") {
  // f(w) = w^2, gradient 2w, start at w = 1
  Tensor param({1}, {1.0f});
  Tensor cache({1});
  Tensor grad({1}, {2.0f});
  teli::rmsprop_step(param, grad, cache, {0.01, 0.9f, 1e-7f});
  CHECK(param[0] * param[0] < 1.0f);
}

TEST_CASE("rmsprop rejects shape mismatch") {
  Tensor param({2}), grad({3}), cache({2});
  CHECK_THROWS_AS(teli::rmsprop_step(param, grad, cache, {0.01, 0.9f, 1e-7f}),
                  teli::ShapeError);
}

TEST_CASE("learning-rate schedule follows the geometric sequence") {
  teli::LrSchedule schedule{1e-3, 0.7};
  CHECK(teli::lr_at_epoch(schedule, 0) == 1e-3);
  CHECK(teli::lr_at_epoch(schedule, 1) == 1e-3 * 0.7);
  CHECK(teli::lr_at_epoch(schedule, 2) == 1e-3 * 0.7 * 0.7);
  CHECK(teli::lr_at_epoch(schedule, 3) == 1e-3 * 0.7 * 0.7 * 0.7);
  CHECK(teli::lr_at_epoch(schedule, 3) == doctest::Approx(3.43e-4).epsilon(1e-12));

  // strictly decreasing when the factor is below one
  double prev = teli::lr_at_epoch(schedule, 0);
  for (int epoch = 1; epoch <= 10; ++epoch) {
    const double lr = teli::lr_at_epoch(schedule, epoch);
    CHECK(lr < prev);
    CHECK(lr > 0.0);
    prev = lr;
  }
  CHECK_THROWS_AS(teli::lr_at_epoch({0.0, 0.7}, 0), teli::Error);
  CHECK_THROWS_AS(teli::lr_at_epoch({1e-3, 1.5}, 0), teli::Error);
}

TEST_CASE("bce loss analytic values") {
  Tensor pred({1, 1}, {0.5f});
  Tensor label({1, 1}, {1.0f});
  auto res = teli::bce_loss(pred, label);
  CHECK(res.mean_loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  // confident and correct: loss collapses to ~0, gradient is small negative
  Tensor sure({1, 1}, {1.0f});
  auto res2 = teli::bce_loss(sure, label);
  CHECK(res2.mean_loss >= 0.0);
  CHECK(res2.mean_loss <= 1e-6);
  CHECK(res2.grad[0] < 0.0f);
}

TEST_CASE("bce loss is nonnegative and rejects non-binary labels") {
  teli::Rng rng(61);
  Tensor pred({8, 1});
  Tensor label({8, 1});
  for (int i = 0; i < 8; ++i) {
    pred[i] = rng.uniform(0.01f, 0.99f);
    label[i] = static_cast<float>(rng.below(2));
  }
  CHECK(teli::bce_loss(pred, label).mean_loss >= 0.0);

  label[3] = 0.5f;
  CHECK_THROWS_AS(teli::bce_loss(pred, label), teli::Error);
}

TEST_CASE("bce gradient matches finite differences") {
  teli::Rng rng(67);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t n = 2 + rng.below(6);
    Tensor pred({n, 1});
    Tensor label({n, 1});
    for (std::int64_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform(0.05f, 0.95f);
      label[i] = static_cast<float>(rng.below(2));
    }
    auto res = teli::bce_loss(pred, label);
    for (std::int64_t i = 0; i < n; ++i) {
      const float saved = pred[i];
      pred[i] = saved + 1e-3f;
      const double upper = teli::bce_loss(pred, label).mean_loss;
      pred[i] = saved - 1e-3f;
      const double lower = teli::bce_loss(pred, label).mean_loss;
      pred[i] = saved;
      const double numeric = (upper - lower) / 2e-3;
      CHECK(std::fabs(numeric - res.grad[i]) <= 1e-4 * std::max(1.0, std::fabs(numeric)));
    }
  }
}

TEST_CASE("optimizer drives a model parameter list") {
  teli::Rmsprop opt({0.01, 0.9f, 1e-7f});
  teli::ParamSlot slot{"w", Tensor({2}, {1.0f, 1.0f}), Tensor({2}, {1.0f, 1.0f})};
  std::vector<teli::ParamSlot*> params{&slot};
  opt.step(params);
  CHECK(slot.value[0] == doctest::Approx(0.96838).epsilon(1e-5));
  CHECK(opt.cache().size() == 1);
  CHECK(opt.cache()[0].value[0] == doctest::Approx(0.1f));
}
