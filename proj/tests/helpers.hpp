#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "teli/rng.hpp"
#include "teli/tensor.hpp"

namespace helpers {

inline void fill_uniform(teli::Tensor& t, teli::Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
}

// Distinct values with pairwise spacing 0.01, shuffled; keeps max-pool
// windows far from ties relative to the finite-difference step.
inline void fill_distinct(teli::Tensor& t, teli::Rng& rng) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(t.numel()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
  rng.shuffle(order);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<float>(order[static_cast<std::size_t>(i)]) * 0.01f - 1.0f;
  }
}

inline double max_abs_diff(const teli::Tensor& a, const teli::Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, static_cast<double>(std::fabs(a[i] - b[i])));
  }
  return worst;
}

inline bool bitwise_equal(const teli::Tensor& a, const teli::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(float)) != 0) return false;
  }
  return true;
}

// Central finite difference along a random direction, compared against the
// directional analytic derivative. `forward` evaluates the network function
// at the current value of `x`; `proj` are the fixed projection weights that
// turn the tensor-valued output into the scalar L = sum(out * proj), with
// the sum taken in double precision.
inline bool directional_grad_matches(const std::function<teli::Tensor()>& forward,
                                     teli::Tensor& x, const teli::Tensor& analytic_grad,
                                     const teli::Tensor& proj, teli::Rng& rng,
                                     double step = 1e-3, double tol = 1e-3) {
  teli::Tensor direction(x.shape());
  fill_uniform(direction, rng);

  auto project = [&](const teli::Tensor& out) {
    double sum = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      sum += static_cast<double>(out[i]) * static_cast<double>(proj[i]);
    }
    return sum;
  };

  const teli::Tensor saved = x;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    x[i] = saved[i] + static_cast<float>(step) * direction[i];
  }
  const double upper = project(forward());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    x[i] = saved[i] - static_cast<float>(step) * direction[i];
  }
  const double lower = project(forward());
  x = saved;

  const double numeric = (upper - lower) / (2.0 * step);
  double analytic = 0.0;
  for (std::int64_t i = 0; i < analytic_grad.numel(); ++i) {
    analytic += static_cast<double>(analytic_grad[i]) * static_cast<double>(direction[i]);
  }
  const double scale = std::max({std::fabs(numeric), std::fabs(analytic), 1e-4});
  return std::fabs(numeric - analytic) <= tol * scale;
}

// Unique scratch directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("teli_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace helpers
