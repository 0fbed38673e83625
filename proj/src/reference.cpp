#include "teli/reference.hpp"

namespace teli::ref {

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t f = weights.dim(0);
  Tensor out({n, f, h, w});
  for (std::int64_t img = 0; img < n; ++img)
    for (std::int64_t fo = 0; fo < f; ++fo)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          float s = bias[fo];
          for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
              for (std::int64_t dx = -1; dx <= 1; ++dx) {
                const std::int64_t sy = y + dy, sx = x + dx;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                s += input[((img * c + ci) * h + sy) * w + sx] *
                     weights[((fo * c + ci) * 3 + dy + 1) * 3 + dx + 1];
              }
          out[((img * f + fo) * h + y) * w + x] = s;
        }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      float s = 0.0f;
      for (std::int64_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
      out[i * n + j] = s;
    }
  return out;
}

Tensor maxpool2d_forward(const Tensor& input) {
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t ho = h / 2, wo = w / 2;
  Tensor out({n, c, ho, wo});
  for (std::int64_t plane = 0; plane < n * c; ++plane)
    for (std::int64_t y = 0; y < ho; ++y)
      for (std::int64_t x = 0; x < wo; ++x) {
        const float* p = input.data() + plane * h * w;
        float best = p[(2 * y) * w + 2 * x];
        for (std::int64_t dy = 0; dy < 2; ++dy)
          for (std::int64_t dx = 0; dx < 2; ++dx) {
            const float v = p[(2 * y + dy) * w + 2 * x + dx];
            if (v > best) best = v;
          }
        out[(plane * ho + y) * wo + x] = best;
      }
  return out;
}

}  // namespace teli::ref
