#pragma once

#include <cstddef>

namespace smf::ad::detail {

// float32 hot loops, built with vectorized libm (see src/CMakeLists.txt).
// Inputs must be finite.

// Row-wise softmax over contiguous rows of length n.
void softmax_rows(const float* x, float* y, std::size_t rows, std::size_t n);

// s[i] = sigmoid(2 * c * (x + k * x^3)), the gate of tanh-form gelu.
void gelu_gate(const float* x, float* s, std::size_t n, float c, float k);

}  // namespace smf::ad::detail
