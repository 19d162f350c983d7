#pragma once

#include <cstdint>

#include "smf/autodiff/adam.hpp"

// Scalar flow-matching task: x0 ~ N(mu, sigma^2), z ~ N(0, 1), with a small
// MLP velocity model v(y, t) checked against the closed-form field.
namespace smf::flow {

struct GaussianTask {
  double mu = 1.0;
  double sigma = 1.0;
};

struct ToyTrainOptions {
  int steps = 20000;
  int batch = 1024;
  int hidden = 64;
  double lr = 3e-3;
  double final_lr = 1e-4;  // cosine decay target
  std::uint64_t seed = 0;
};

using MlpParams = ad::Parameters<float>;

// Linear(2 -> hidden) -> gelu -> Linear(hidden -> 1) on inputs (y, t).
MlpParams init_mlp(int hidden, std::uint64_t seed);
double mlp_velocity(const MlpParams& p, double y, double t);
MlpParams train_gaussian_mlp(const GaussianTask& task, const ToyTrainOptions& opts);

// RMS of v - v* over t = 0.05, 0.10, ..., 0.95 and, at each t, 21 points of y
// evenly spread over mean_t +- 2 std_t.
double oracle_rms(const MlpParams& p, const GaussianTask& task);

}  // namespace smf::flow
