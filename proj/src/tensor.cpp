#include "teli/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace teli {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

static void validate_shape(const Shape& s) {
  for (auto d : s) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
  }
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

Tensor::Tensor(Shape shape, std::initializer_list<float> data)
    : Tensor(std::move(shape), std::vector<float>(data)) {}

Tensor Tensor::full(Shape shape, float value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

float& Tensor::at(std::initializer_list<std::int64_t> idx) {
  const Tensor& self = *this;
  return const_cast<float&>(self.at(idx));
}

float Tensor::at(std::initializer_list<std::int64_t> idx) const {
  if (static_cast<int>(idx.size()) != rank()) {
    throw ShapeError("index rank " + std::to_string(idx.size()) +
                     " does not match tensor rank " + std::to_string(rank()));
  }
  std::int64_t flat = 0;
  int i = 0;
  for (auto v : idx) {
    if (v < 0 || v >= shape_[static_cast<std::size_t>(i)]) {
      throw ShapeError("index out of bounds for shape " + shape_str(shape_));
    }
    flat = flat * shape_[static_cast<std::size_t>(i)] + v;
    ++i;
  }
  return data_[static_cast<std::size_t>(flat)];
}

void Tensor::reshape(Shape new_shape) {
  validate_shape(new_shape);
  if (shape_numel(new_shape) != numel()) {
    throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                     " changes element count");
  }
  shape_ = std::move(new_shape);
}

Tensor Tensor::reshaped(Shape new_shape) const {
  Tensor t = *this;
  t.reshape(std::move(new_shape));
  return t;
}

void Tensor::fill(float value) {
  for (auto& x : data_) x = value;
}

void check_finite(const Tensor& t, const char* op) {
  const float* p = t.data();
  const std::int64_t n = t.numel();
  bool ok = true;
#pragma omp simd reduction(& : ok)
  for (std::int64_t i = 0; i < n; ++i) {
    ok &= std::fabs(p[i]) <= std::numeric_limits<float>::max();
  }
  if (!ok) {
    throw NumericError(std::string(op) + " produced a non-finite value in tensor " +
                       shape_str(t.shape()));
  }
}

}  // namespace teli
