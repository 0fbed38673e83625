#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "teli/errors.hpp"

namespace teli {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// Dense row-major float32 tensor. The one value type everything else is
// built on. Copy is deep; move is cheap.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);                         // zero-filled
  Tensor(Shape shape, std::vector<float> data);
  Tensor(Shape shape, std::initializer_list<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, float value);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Multi-index access for tests and small code paths; kernels index flat.
  float& at(std::initializer_list<std::int64_t> idx);
  float at(std::initializer_list<std::int64_t> idx) const;

  // Element count must be preserved; data order is untouched.
  void reshape(Shape new_shape);
  Tensor reshaped(Shape new_shape) const;

  void fill(float value);

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Throws NumericError naming `op` if any element is NaN or infinite.
void check_finite(const Tensor& t, const char* op);

}  // namespace teli
