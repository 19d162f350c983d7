#pragma once

#include <functional>
#include <span>
#include <vector>

#include "smf/autodiff/tensor.hpp"
#include "smf/data/types.hpp"
#include "smf/model/dit.hpp"

// Flow-matching objective on the straight path x_t = (1 - t) x0 + t z.
// The network regresses x0 - z and sampling integrates from t = 1 down to 0.
namespace smf::flow {

inline constexpr double kDefaultLambdaAttn = 0.1;

// Defined for float and double.
template <typename T>
std::vector<T> interpolate(std::span<const T> x0, std::span<const T> z, double t);
template <typename T>
std::vector<T> fm_target(std::span<const T> x0, std::span<const T> z);
// Mean over all entries of (v - (x0 - z))^2.
double fm_loss(std::span<const float> v_pred, std::span<const float> x0, std::span<const float> z);

// -(1/L) sum_l sum_p A_l[p] M[p] for one sample.
double attn_loss(const model::AttentionRecord& rec, const data::Mask& mask);
double total_loss(double fm, double attn, double lambda_attn);

// Differentiable forms used by training. `maps` are per block (B, cells);
// `masks` is (B, cells) with 0/1 entries. Averaged over the batch.
template <typename T>
ad::Tensor<T> fm_loss(const ad::Tensor<T>& v_pred, const ad::Tensor<T>& target);
template <typename T>
ad::Tensor<T> attn_loss(const std::vector<ad::Tensor<T>>& maps, const ad::Tensor<T>& masks);

// E[x0 - z | x_t = y] for x0 ~ N(mu, sigma^2), z ~ N(0, 1). t must be in (0, 1).
double gaussian_oracle_velocity(double y, double t, double mu, double sigma);

// v(x, t) written into `out`, same length as x.
using VelocityField = std::function<void(std::span<const float> x, double t, std::span<float> out)>;

// x <- z at t = 1; for k = N..1: x <- x + (1/N) v(x, k/N).
std::vector<float> euler_integrate(std::vector<float> z, int steps, const VelocityField& v);

}  // namespace smf::flow
