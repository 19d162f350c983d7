#include "kernels.hpp"

#include <algorithm>
#include <cmath>

namespace smf::ad::detail {

void softmax_rows(const float* x, float* y, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * n;
    float* yr = y + r * n;
    float mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    float total = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    const float inv = 1.0f / total;
    for (std::size_t j = 0; j < n; ++j) yr[j] *= inv;
  }
}

void gelu_gate(const float* x, float* s, std::size_t n, float c, float k) {
  for (std::size_t i = 0; i < n; ++i) {
    const float v = x[i];
    // clamp keeps exp finite; the gate is 0 to float precision well before 80
    const float e = std::min(-2.0f * c * (v + k * v * v * v), 80.0f);
    s[i] = 1.0f / (1.0f + std::exp(e));
  }
}

}  // namespace smf::ad::detail
