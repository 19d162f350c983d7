#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smf/autodiff/tensor.hpp"

namespace smf::ad {

// Learnable tensors addressed by stable names. std::map keeps them sorted,
// which fixes iteration order for updates and serialization.
template <typename T>
using Parameters = std::map<std::string, Tensor<T>>;

using ParamGrads = std::map<std::string, std::vector<float>>;

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::map<std::string, std::vector<float>> m;
  std::map<std::string, std::vector<float>> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update of every parameter. Throws if a parameter
// has no gradient or a gradient of the wrong length.
void adam_step(Parameters<float>& params, const ParamGrads& grads, AdamState& state);

// Global L2 norm over all gradient entries, accumulated in name order.
double global_norm(const ParamGrads& grads);
void scale_grads(ParamGrads& grads, double factor);

}  // namespace smf::ad
