#include "smf/flow/flow_matching.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "smf/autodiff/ops.hpp"

namespace smf::flow {
namespace {

void same_length(const char* op, std::size_t a, std::size_t b) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": length mismatch " + std::to_string(a) + " vs " +
                                std::to_string(b));
  }
}

}  // namespace

template <typename T>
std::vector<T> interpolate(std::span<const T> x0, std::span<const T> z, double t) {
  same_length("interpolate", x0.size(), z.size());
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolate: t = " + std::to_string(t) + " outside [0, 1]");
  const T a = static_cast<T>(1.0 - t), b = static_cast<T>(t);
  std::vector<T> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * z[i];
  return out;
}

template <typename T>
std::vector<T> fm_target(std::span<const T> x0, std::span<const T> z) {
  same_length("fm_target", x0.size(), z.size());
  std::vector<T> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x0[i] - z[i];
  return out;
}

double fm_loss(std::span<const float> v_pred, std::span<const float> x0, std::span<const float> z) {
  same_length("fm_loss", v_pred.size(), x0.size());
  same_length("fm_loss", x0.size(), z.size());
  if (v_pred.empty()) throw std::invalid_argument("fm_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < v_pred.size(); ++i) {
    const double r = static_cast<double>(v_pred[i]) - (static_cast<double>(x0[i]) - z[i]);
    s += r * r;
  }
  return s / static_cast<double>(v_pred.size());
}

double attn_loss(const model::AttentionRecord& rec, const data::Mask& mask) {
  if (rec.maps.empty()) throw std::invalid_argument("attn_loss: empty attention record");
  double s = 0.0;
  for (const auto& a : rec.maps) {
    same_length("attn_loss", a.size(), mask.size());
    for (std::size_t p = 0; p < a.size(); ++p) s += static_cast<double>(a[p]) * mask[p];
  }
  return -s / static_cast<double>(rec.maps.size());
}

double total_loss(double fm, double attn, double lambda_attn) {
  if (lambda_attn == 0.0) return fm;
  return fm + lambda_attn * attn;
}

template <typename T>
ad::Tensor<T> fm_loss(const ad::Tensor<T>& v_pred, const ad::Tensor<T>& target) {
  return ad::mse(v_pred, target);
}

template <typename T>
ad::Tensor<T> attn_loss(const std::vector<ad::Tensor<T>>& maps, const ad::Tensor<T>& masks) {
  if (maps.empty()) throw std::invalid_argument("attn_loss: no attention maps");
  std::vector<ad::Tensor<T>> per_block;
  for (const auto& a : maps) per_block.push_back(ad::sum(ad::mul(a, masks)));
  auto total = per_block[0];
  for (std::size_t l = 1; l < per_block.size(); ++l) total = ad::add(total, per_block[l]);
  const double denom = static_cast<double>(maps.size()) * static_cast<double>(masks.dim(0));
  return ad::scale(total, static_cast<T>(-1.0 / denom));
}

double gaussian_oracle_velocity(double y, double t, double mu, double sigma) {
  if (!(t > 0.0 && t < 1.0)) {
    throw std::invalid_argument("gaussian_oracle_velocity: t = " + std::to_string(t) + " must lie in (0, 1)");
  }
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_oracle_velocity: sigma must be positive");
  const double s2 = sigma * sigma;
  const double var = (1.0 - t) * (1.0 - t) * s2 + t * t;
  const double cov = (1.0 - t) * s2 - t;
  return mu + cov / var * (y - (1.0 - t) * mu);
}

std::vector<float> euler_integrate(std::vector<float> z, int steps, const VelocityField& v) {
  if (steps < 1) throw std::invalid_argument("euler_integrate: steps must be >= 1, got " + std::to_string(steps));
  std::vector<float> x = std::move(z);
  std::vector<float> vel(x.size());
  const double h = 1.0 / steps;
  for (int k = steps; k >= 1; --k) {
    const double t = static_cast<double>(k) / steps;
    v(x, t, vel);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(x[i] + h * vel[i]);
  }
  return x;
}

template std::vector<float> interpolate(std::span<const float>, std::span<const float>, double);
template std::vector<double> interpolate(std::span<const double>, std::span<const double>, double);
template std::vector<float> fm_target(std::span<const float>, std::span<const float>);
template std::vector<double> fm_target(std::span<const double>, std::span<const double>);
template ad::Tensor<float> fm_loss(const ad::Tensor<float>&, const ad::Tensor<float>&);
template ad::Tensor<double> fm_loss(const ad::Tensor<double>&, const ad::Tensor<double>&);
template ad::Tensor<float> attn_loss(const std::vector<ad::Tensor<float>>&, const ad::Tensor<float>&);
template ad::Tensor<double> attn_loss(const std::vector<ad::Tensor<double>>&, const ad::Tensor<double>&);

}  // namespace smf::flow
