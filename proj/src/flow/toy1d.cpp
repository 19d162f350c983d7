#include "smf/flow/toy1d.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "smf/autodiff/ops.hpp"
#include "smf/flow/flow_matching.hpp"
#include "smf/util/rng.hpp"

namespace smf::flow {
namespace {

template <typename T>
ad::Tensor<T> mlp_forward(const ad::Parameters<T>& p, const ad::Tensor<T>& x) {
  return ad::linear(ad::gelu(ad::linear(x, p.at("w1"), p.at("b1"))), p.at("w2"), p.at("b2"));
}

ad::Tensor<float> normal_tensor(ad::Shape shape, double std, Rng& rng) {
  std::vector<float> v(ad::numel(shape));
  for (auto& x : v) x = static_cast<float>(std * rng.normal());
  return ad::Tensor<float>(std::move(shape), std::move(v));
}

}  // namespace

MlpParams init_mlp(int hidden, std::uint64_t seed) {
  if (hidden < 1) throw std::invalid_argument("init_mlp: hidden width must be >= 1");
  const auto h = static_cast<std::size_t>(hidden);
  Rng rng(seed);
  MlpParams p;
  p["w1"] = normal_tensor({2, h}, 1.0, rng);
  p["b1"] = normal_tensor({h}, 0.5, rng);
  p["w2"] = normal_tensor({h, 1}, 1.0 / std::sqrt(static_cast<double>(h)), rng);
  p["b2"] = ad::Tensor<float>::zeros({1});
  return p;
}

double mlp_velocity(const MlpParams& p, double y, double t) {
  const ad::Tensor<float> x({1, 2}, {static_cast<float>(y), static_cast<float>(t)});
  return mlp_forward(p, x).item();
}

MlpParams train_gaussian_mlp(const GaussianTask& task, const ToyTrainOptions& opts) {
  if (opts.steps < 1 || opts.batch < 1) throw std::invalid_argument("train_gaussian_mlp: steps and batch must be >= 1");
  if (!(task.sigma > 0.0)) throw std::invalid_argument("train_gaussian_mlp: sigma must be positive");
  auto params = init_mlp(opts.hidden, opts.seed);
  ad::AdamState adam;
  Rng rng(splitmix64(opts.seed) ^ 0x7431u);
  const auto b = static_cast<std::size_t>(opts.batch);
  std::vector<float> x(2 * b), target(b);
  for (int step = 0; step < opts.steps; ++step) {
    for (std::size_t i = 0; i < b; ++i) {
      const double t = rng.uniform();
      const double x0 = task.mu + task.sigma * rng.normal();
      const double z = rng.normal();
      x[2 * i] = static_cast<float>((1.0 - t) * x0 + t * z);
      x[2 * i + 1] = static_cast<float>(t);
      target[i] = static_cast<float>(x0 - z);
    }
    const double progress = static_cast<double>(step) / opts.steps;
    adam.options.lr = opts.final_lr + 0.5 * (opts.lr - opts.final_lr) * (1.0 + std::cos(std::numbers::pi * progress));

    ad::Tape<float> tape;
    MlpParams leaves;
    for (const auto& [name, t] : params) leaves.emplace(name, tape.leaf(t));
    const auto loss = ad::mse(mlp_forward(leaves, ad::Tensor<float>({b, 2}, x)), ad::Tensor<float>({b, 1}, target));
    const auto grads = tape.backward(loss);
    ad::ParamGrads g;
    for (const auto& [name, leaf] : leaves) g[name] = grads.of(leaf);
    ad::adam_step(params, g, adam);
  }
  return params;
}

double oracle_rms(const MlpParams& p, const GaussianTask& task) {
  double s = 0.0;
  int n = 0;
  for (int ti = 1; ti <= 19; ++ti) {
    const double t = 0.05 * ti;
    const double mean = (1.0 - t) * task.mu;
    const double sd = std::sqrt((1.0 - t) * (1.0 - t) * task.sigma * task.sigma + t * t);
    for (int yi = 0; yi <= 20; ++yi) {
      const double y = mean - 2.0 * sd + 4.0 * sd * yi / 20.0;
      const double err = mlp_velocity(p, y, t) - gaussian_oracle_velocity(y, t, task.mu, task.sigma);
      s += err * err;
      ++n;
    }
  }
  return std::sqrt(s / n);
}

}  // namespace smf::flow
