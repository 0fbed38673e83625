#include "teli/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <limits>

namespace teli {

namespace {

std::atomic<bool> g_strict{false};

constexpr std::int64_t kMR = 8;   // accumulator rows per tile
constexpr std::int64_t kNR = 32;  // accumulator columns per tile (2 zmm lanes)

inline void check_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) +
                     ", got shape " + shape_str(t.shape()));
  }
}

}  // namespace

void set_strict_deterministic(bool on) { g_strict.store(on); }
bool strict_deterministic() { return g_strict.load(); }

// ---------------------------------------------------------------------------
// GEMM
// ---------------------------------------------------------------------------

void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate) {
  const std::int64_t n_full = n - n % kNR;
  const bool serial = strict_deterministic();
  // j-strip outer: each B column strip stays cache-hot while the i tiles
  // sweep over it.
#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t j0 = 0; j0 < n_full; j0 += kNR) {
    std::int64_t i0 = 0;
    for (; i0 + kMR <= m; i0 += kMR) {
      float acc[kMR][kNR];
      for (std::int64_t r = 0; r < kMR; ++r) {
        if (accumulate) {
          for (std::int64_t col = 0; col < kNR; ++col) acc[r][col] = c[(i0 + r) * n + j0 + col];
        } else {
          for (std::int64_t col = 0; col < kNR; ++col) acc[r][col] = 0.0f;
        }
      }
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const float* bk = b + kk * n + j0;
        for (std::int64_t r = 0; r < kMR; ++r) {
          const float av = a[(i0 + r) * k + kk];
#pragma omp simd
          for (std::int64_t col = 0; col < kNR; ++col) acc[r][col] += av * bk[col];
        }
      }
      for (std::int64_t r = 0; r < kMR; ++r)
        for (std::int64_t col = 0; col < kNR; ++col) c[(i0 + r) * n + j0 + col] = acc[r][col];
    }
    for (; i0 < m; ++i0) {
      float acc[kNR];
      for (std::int64_t col = 0; col < kNR; ++col)
        acc[col] = accumulate ? c[i0 * n + j0 + col] : 0.0f;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const float av = a[i0 * k + kk];
        const float* bk = b + kk * n + j0;
#pragma omp simd
        for (std::int64_t col = 0; col < kNR; ++col) acc[col] += av * bk[col];
      }
      for (std::int64_t col = 0; col < kNR; ++col) c[i0 * n + j0 + col] = acc[col];
    }
  }
  if (n_full < n) {
#pragma omp parallel for schedule(static) if (!serial)
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t j = n_full; j < n; ++j) {
        float s = accumulate ? c[i * n + j] : 0.0f;
        for (std::int64_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
        c[i * n + j] = s;
      }
    }
  }
}

void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate) {
  const std::int64_t m_full = m - m % 4;
  const std::int64_t n_full = n - n % 2;
  const bool serial = strict_deterministic();
#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t i0 = 0; i0 < m_full; i0 += 4) {
    const float* a0 = a + (i0 + 0) * k;
    const float* a1 = a + (i0 + 1) * k;
    const float* a2 = a + (i0 + 2) * k;
    const float* a3 = a + (i0 + 3) * k;
    for (std::int64_t j0 = 0; j0 < n_full; j0 += 2) {
      const float* b0 = b + (j0 + 0) * k;
      const float* b1 = b + (j0 + 1) * k;
      float s00 = 0, s01 = 0, s10 = 0, s11 = 0, s20 = 0, s21 = 0, s30 = 0, s31 = 0;
#pragma omp simd reduction(+ : s00, s01, s10, s11, s20, s21, s30, s31)
      for (std::int64_t kk = 0; kk < k; ++kk) {
        s00 += a0[kk] * b0[kk];
        s01 += a0[kk] * b1[kk];
        s10 += a1[kk] * b0[kk];
        s11 += a1[kk] * b1[kk];
        s20 += a2[kk] * b0[kk];
        s21 += a2[kk] * b1[kk];
        s30 += a3[kk] * b0[kk];
        s31 += a3[kk] * b1[kk];
      }
      float* c0 = c + i0 * n + j0;
      if (accumulate) {
        c0[0] += s00; c0[1] += s01;
        c0[n] += s10; c0[n + 1] += s11;
        c0[2 * n] += s20; c0[2 * n + 1] += s21;
        c0[3 * n] += s30; c0[3 * n + 1] += s31;
      } else {
        c0[0] = s00; c0[1] = s01;
        c0[n] = s10; c0[n + 1] = s11;
        c0[2 * n] = s20; c0[2 * n + 1] = s21;
        c0[3 * n] = s30; c0[3 * n + 1] = s31;
      }
    }
  }
  // edge cells: last m%4 rows, and last n%2 column for all rows
#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t j_lo = (i < m_full) ? n_full : 0;
    for (std::int64_t j = j_lo; j < n; ++j) {
      const float* ai = a + i * k;
      const float* bj = b + j * k;
      float s = 0;
#pragma omp simd reduction(+ : s)
      for (std::int64_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      if (accumulate) c[i * n + j] += s;
      else c[i * n + j] = s;
    }
  }
}

void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate) {
  const std::int64_t n_full = n - n % kNR;
  const bool serial = strict_deterministic();
#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t j0 = 0; j0 < n_full; j0 += kNR) {
    std::int64_t i0 = 0;
    for (; i0 + kMR <= m; i0 += kMR) {
      float acc[kMR][kNR];
      for (std::int64_t r = 0; r < kMR; ++r) {
        if (accumulate) {
          for (std::int64_t col = 0; col < kNR; ++col) acc[r][col] = c[(i0 + r) * n + j0 + col];
        } else {
          for (std::int64_t col = 0; col < kNR; ++col) acc[r][col] = 0.0f;
        }
      }
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const float* bk = b + kk * n + j0;
        const float* ak = a + kk * m + i0;
        for (std::int64_t r = 0; r < kMR; ++r) {
          const float av = ak[r];
#pragma omp simd
          for (std::int64_t col = 0; col < kNR; ++col) acc[r][col] += av * bk[col];
        }
      }
      for (std::int64_t r = 0; r < kMR; ++r)
        for (std::int64_t col = 0; col < kNR; ++col) c[(i0 + r) * n + j0 + col] = acc[r][col];
    }
    for (; i0 < m; ++i0) {
      float acc[kNR];
      for (std::int64_t col = 0; col < kNR; ++col)
        acc[col] = accumulate ? c[i0 * n + j0 + col] : 0.0f;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const float av = a[kk * m + i0];
        const float* bk = b + kk * n + j0;
#pragma omp simd
        for (std::int64_t col = 0; col < kNR; ++col) acc[col] += av * bk[col];
      }
      for (std::int64_t col = 0; col < kNR; ++col) c[i0 * n + j0 + col] = acc[col];
    }
  }
  if (n_full < n) {
#pragma omp parallel for schedule(static) if (!serial)
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t j = n_full; j < n; ++j) {
        float s = accumulate ? c[i * n + j] : 0.0f;
        for (std::int64_t kk = 0; kk < k; ++kk) s += a[kk * m + i] * b[kk * n + j];
        c[i * n + j] = s;
      }
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "matmul lhs");
  check_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.data(), b.data(), out.data());
  check_finite(out, "matmul");
  return out;
}

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

void im2col_3x3_same(const float* src, std::int64_t c, std::int64_t h, std::int64_t w,
                     float* col) {
  const std::int64_t hw = h * w;
  const bool serial = strict_deterministic();
#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t r = 0; r < c * 9; ++r) {
    const std::int64_t ch = r / 9;
    const std::int64_t dy = (r % 9) / 3 - 1;
    const std::int64_t dx = (r % 9) % 3 - 1;
    const float* plane = src + ch * hw;
    float* dst = col + r * hw;
    const std::int64_t x_lo = std::max<std::int64_t>(0, -dx);
    const std::int64_t x_hi = std::min(w, w - dx);
    for (std::int64_t y = 0; y < h; ++y) {
      float* drow = dst + y * w;
      const std::int64_t sy = y + dy;
      if (sy < 0 || sy >= h) {
        std::memset(drow, 0, sizeof(float) * static_cast<std::size_t>(w));
        continue;
      }
      const float* srow = plane + sy * w + dx;
      for (std::int64_t x = 0; x < x_lo; ++x) drow[x] = 0.0f;
      std::memcpy(drow + x_lo, srow + x_lo, sizeof(float) * static_cast<std::size_t>(x_hi - x_lo));
      for (std::int64_t x = x_hi; x < w; ++x) drow[x] = 0.0f;
    }
  }
}

void col2im_3x3_same(const float* col, std::int64_t c, std::int64_t h, std::int64_t w,
                     float* dst) {
  const std::int64_t hw = h * w;
  const bool serial = strict_deterministic();
#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t ch = 0; ch < c; ++ch) {
    float* plane = dst + ch * hw;
    std::memset(plane, 0, sizeof(float) * static_cast<std::size_t>(hw));
    for (std::int64_t tap = 0; tap < 9; ++tap) {
      const std::int64_t dy = tap / 3 - 1;
      const std::int64_t dx = tap % 3 - 1;
      const float* crow_base = col + (ch * 9 + tap) * hw;
      // col[r][y,x] was read from src[y+dy, x+dx]; scatter back accordingly.
      const std::int64_t x_lo = std::max<std::int64_t>(0, -dx);
      const std::int64_t x_hi = std::min(w, w - dx);
      for (std::int64_t y = 0; y < h; ++y) {
        const std::int64_t sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        float* drow = plane + sy * w + dx;
        const float* srow = crow_base + y * w;
#pragma omp simd
        for (std::int64_t x = x_lo; x < x_hi; ++x) drow[x] += srow[x];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

void check_conv_args(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  check_rank(input, 4, "conv2d input");
  check_rank(weights, 4, "conv2d weights");
  check_rank(bias, 1, "conv2d bias");
  if (weights.dim(2) != 3 || weights.dim(3) != 3) {
    throw ShapeError("conv2d weights must be 3x3, got " + shape_str(weights.shape()));
  }
  if (weights.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                     " vs weights " + shape_str(weights.shape()));
  }
  if (bias.dim(0) != weights.dim(0)) {
    throw ShapeError("conv2d bias " + shape_str(bias.shape()) + " vs weights " +
                     shape_str(weights.shape()));
  }
  if (input.dim(2) < 1 || input.dim(3) < 1) {
    throw ShapeError("conv2d needs spatial dims >= 1, got " + shape_str(input.shape()));
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  check_conv_args(input, weights, bias);
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t f = weights.dim(0);
  const std::int64_t hw = h * w;

  Tensor out({n, f, h, w});
  std::vector<float> col(static_cast<std::size_t>(c * 9 * hw));
  for (std::int64_t img = 0; img < n; ++img) {
    im2col_3x3_same(input.data() + img * c * hw, c, h, w, col.data());
    float* out_img = out.data() + img * f * hw;
    // seed each output row with its bias, then accumulate the GEMM on top
    for (std::int64_t fo = 0; fo < f; ++fo) {
      float* row = out_img + fo * hw;
      const float bv = bias[fo];
      for (std::int64_t p = 0; p < hw; ++p) row[p] = bv;
    }
    gemm_nn(f, hw, c * 9, weights.data(), col.data(), out_img, /*accumulate=*/true);
  }
  check_finite(out, "conv2d_forward");
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                            const Tensor& grad_out, bool need_grad_input) {
  check_rank(input, 4, "conv2d input");
  check_rank(weights, 4, "conv2d weights");
  check_rank(grad_out, 4, "conv2d grad_out");
  if (weights.dim(2) != 3 || weights.dim(3) != 3) {
    throw ShapeError("conv2d weights must be 3x3, got " + shape_str(weights.shape()));
  }
  if (weights.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                     " vs weights " + shape_str(weights.shape()));
  }
  if (grad_out.dim(0) != input.dim(0) || grad_out.dim(1) != weights.dim(0) ||
      grad_out.dim(2) != input.dim(2) || grad_out.dim(3) != input.dim(3)) {
    throw ShapeError("conv2d grad_out " + shape_str(grad_out.shape()) +
                     " inconsistent with input " + shape_str(input.shape()) + " and weights " +
                     shape_str(weights.shape()));
  }
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t f = weights.dim(0);
  const std::int64_t hw = h * w;

  Conv2dGrads grads;
  grads.weights = Tensor(weights.shape());
  grads.bias = Tensor({f});
  if (need_grad_input) grads.input = Tensor(input.shape());

  const bool serial = strict_deterministic();
#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t fo = 0; fo < f; ++fo) {
    float s = 0.0f;
    for (std::int64_t img = 0; img < n; ++img) {
      const float* row = grad_out.data() + (img * f + fo) * hw;
      for (std::int64_t p = 0; p < hw; ++p) s += row[p];
    }
    grads.bias[fo] = s;
  }

  std::vector<float> col(static_cast<std::size_t>(c * 9 * hw));
  std::vector<float> colgrad(need_grad_input ? static_cast<std::size_t>(c * 9 * hw) : 0);
  for (std::int64_t img = 0; img < n; ++img) {
    const float* gout_img = grad_out.data() + img * f * hw;
    im2col_3x3_same(input.data() + img * c * hw, c, h, w, col.data());
    gemm_nt(f, c * 9, hw, gout_img, col.data(), grads.weights.data(), /*accumulate=*/true);
    if (need_grad_input) {
      gemm_tn(c * 9, hw, f, weights.data(), gout_img, colgrad.data());
      col2im_3x3_same(colgrad.data(), c, h, w, grads.input.data() + img * c * hw);
    }
  }

  check_finite(grads.weights, "conv2d_backward");
  check_finite(grads.bias, "conv2d_backward");
  if (need_grad_input) check_finite(grads.input, "conv2d_backward");
  return grads;
}

// ---------------------------------------------------------------------------
// max pooling
// ---------------------------------------------------------------------------

MaxPoolResult maxpool2d_forward(const Tensor& input) {
  check_rank(input, 4, "maxpool2d input");
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < 2 || w < 2) {
    throw ShapeError("maxpool2d needs spatial dims >= 2, got " + shape_str(input.shape()));
  }
  if (input.numel() > std::numeric_limits<std::int32_t>::max()) {
    throw ShapeError("maxpool2d input too large for 32-bit argmax map: " +
                     shape_str(input.shape()));
  }
  const std::int64_t ho = h / 2, wo = w / 2;

  MaxPoolResult res;
  res.output = Tensor({n, c, ho, wo});
  res.argmax.assign(static_cast<std::size_t>(res.output.numel()), 0);

  const bool serial = strict_deterministic();
#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const float* in_plane = input.data() + plane * h * w;
    float* out_plane = res.output.data() + plane * ho * wo;
    std::int32_t* am_plane = res.argmax.data() + plane * ho * wo;
    const std::int64_t plane_base = plane * h * w;
    for (std::int64_t y = 0; y < ho; ++y) {
      for (std::int64_t x = 0; x < wo; ++x) {
        const std::int64_t i00 = (2 * y) * w + 2 * x;
        // scan window in flat order; strict > keeps the lowest index on ties
        std::int64_t best = i00;
        float bv = in_plane[i00];
        if (in_plane[i00 + 1] > bv) { bv = in_plane[i00 + 1]; best = i00 + 1; }
        if (in_plane[i00 + w] > bv) { bv = in_plane[i00 + w]; best = i00 + w; }
        if (in_plane[i00 + w + 1] > bv) { bv = in_plane[i00 + w + 1]; best = i00 + w + 1; }
        out_plane[y * wo + x] = bv;
        am_plane[y * wo + x] = static_cast<std::int32_t>(plane_base + best);
      }
    }
  }
  check_finite(res.output, "maxpool2d_forward");
  return res;
}

Tensor maxpool2d_backward(const std::vector<std::int32_t>& argmax, const Tensor& grad_out,
                          const Shape& input_shape) {
  if (static_cast<std::int64_t>(argmax.size()) != grad_out.numel()) {
    throw ShapeError("maxpool2d argmax map size " + std::to_string(argmax.size()) +
                     " does not match grad_out " + shape_str(grad_out.shape()));
  }
  Tensor grad_input(input_shape);
  const std::int64_t total = grad_out.numel();
  const std::int64_t limit = grad_input.numel();
  const bool serial = strict_deterministic();
  bool in_range = true;
#pragma omp parallel for schedule(static) reduction(& : in_range) if (!serial)
  for (std::int64_t i = 0; i < total; ++i) {
    const std::int64_t target = argmax[static_cast<std::size_t>(i)];
    in_range &= target >= 0 && target < limit;
  }
  if (!in_range) {
    throw ShapeError("maxpool2d argmax entry out of range for input shape " +
                     shape_str(input_shape));
  }
  // windows are disjoint, so argmax targets are unique: no write races
#pragma omp parallel for schedule(static) if (!serial)
  for (std::int64_t i = 0; i < total; ++i) {
    grad_input[argmax[static_cast<std::size_t>(i)]] += grad_out[i];
  }
  check_finite(grad_input, "maxpool2d_backward");
  return grad_input;
}

Tensor flatten(const Tensor& input) {
  check_rank(input, 4, "flatten input");
  return input.reshaped({input.dim(0), input.dim(1) * input.dim(2) * input.dim(3)});
}

}  // namespace teli
