#pragma once

#include "teli/tensor.hpp"

// Naive serial implementations of the numerical kernels, written directly
// from the definitions with no tiling, no im2col and no threading. They are
// the ground truth the production kernels are tested against and the
// baseline the benchmark tool compares against. Linked by tests and the
// benchmark only, never by the library or the CLI.
namespace teli::ref {

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor maxpool2d_forward(const Tensor& input);

}  // namespace teli::ref
