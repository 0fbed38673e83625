#pragma once

#include <cstdint>
#include <vector>

#include "teli/tensor.hpp"

namespace teli {

// Strict-deterministic mode pins every parallel region in this module to a
// single thread. Kernel results are bitwise identical either way: work is
// only ever partitioned over output elements and each output is accumulated
// in one fixed order. The switch exists so tests can pin the summation-order
// guarantee explicitly.
void set_strict_deterministic(bool on);
bool strict_deterministic();

// 3x3 convolutions, unit stride, zero "same" padding. The only geometry the
// models here use; anything else is rejected at the tensor level.
struct Conv2dGeometry {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  static constexpr int kernel_size = 3;
  static constexpr int stride = 1;
};

// Packed row-major GEMM, three operand layouts. C is MxN.
//   gemm_nn: C (+)= A[MxK] * B[KxN]
//   gemm_nt: C (+)= A[MxK] * B[NxK]^T
//   gemm_tn: C (+)= A[KxM]^T * B[KxN]
// Every C element is a serial k-ordered sum regardless of tiling path or
// thread count.
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate = false);
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate = false);
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate = false);

// a [M,K] x b [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

// input [N,C,H,W], weights [F,C,3,3], bias [F] -> [N,F,H,W]
// Cross-correlation (no kernel flip), zero same-padding, stride 1.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct Conv2dGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

// Gradients of conv2d_forward w.r.t. each argument. grad_input computation
// can be skipped for the first layer of a network.
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                            const Tensor& grad_out, bool need_grad_input = true);

// 2x2 windows, stride 2, odd trailing row/column dropped. argmax holds the
// flat index into the input tensor of each window winner; ties go to the
// lowest flat index.
struct MaxPoolResult {
  Tensor output;
  std::vector<std::int32_t> argmax;
};

MaxPoolResult maxpool2d_forward(const Tensor& input);

// Routes grad_out entries to their argmax positions; everything else zero.
// The argmax map must come from a matching forward call (entries unique).
Tensor maxpool2d_backward(const std::vector<std::int32_t>& argmax, const Tensor& grad_out,
                          const Shape& input_shape);

// [N,C,H,W] -> [N, C*H*W], row-major order preserved.
Tensor flatten(const Tensor& input);

// col is [(C*9) x (H*W)]; row (c*9 + di*3 + dj) is the input plane c shifted
// by (di-1, dj-1) with zero fill. col2im is the transpose (scatter-add).
void im2col_3x3_same(const float* src, std::int64_t c, std::int64_t h, std::int64_t w,
                     float* col);
void col2im_3x3_same(const float* col, std::int64_t c, std::int64_t h, std::int64_t w,
                     float* dst);

}  // namespace teli
