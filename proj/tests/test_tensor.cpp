#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "teli/tensor.hpp"

using teli::Shape;
using teli::Tensor;

TEST_CASE("tensor data length always equals product of shape") {
  Tensor t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f, 3.0f}), teli::ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), teli::ShapeError);
  CHECK_THROWS_AS(Tensor({-1}), teli::ShapeError);
}

TEST_CASE("reshape preserves element count and order") {
  Tensor t({2, 1, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor flat = t.reshaped({2, 4});
  CHECK(flat.at({0, 3}) == 4.0f);
  CHECK(flat.at({1, 0}) == 5.0f);
  CHECK_THROWS_AS(t.reshaped({3, 3}), teli::ShapeError);

  Tensor back = flat.reshaped({2, 1, 2, 2});
  CHECK(helpers::bitwise_equal(back, t));
}

TEST_CASE("multi-index access") {
  Tensor t({2, 3});
  t.at({1, 2}) = 7.0f;
  CHECK(t[5] == 7.0f);
  CHECK_THROWS_AS(t.at({2, 0}), teli::ShapeError);
  CHECK_THROWS_AS(t.at({0}), teli::ShapeError);
}

TEST_CASE("check_finite reports NaN and infinity") {
  Tensor ok({4}, {0.0f, -1.5f, 3.0f, 1e30f});
  CHECK_NOTHROW(teli::check_finite(ok, "test"));

  Tensor with_nan = ok;
  with_nan[2] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(teli::check_finite(with_nan, "test"), teli::NumericError);

  Tensor with_inf = ok;
  with_inf[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(teli::check_finite(with_inf, "test"), teli::NumericError);
}
