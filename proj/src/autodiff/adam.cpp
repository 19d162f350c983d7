#include "smf/autodiff/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace smf::ad {

void adam_step(Parameters<float>& params, const ParamGrads& grads, AdamState& state) {
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::runtime_error("adam: missing gradient for parameter '" + name + "'");
    if (it->second.size() != p.size()) {
      throw std::runtime_error("adam: gradient for '" + name + "' has " + std::to_string(it->second.size()) +
                               " entries, parameter has " + std::to_string(p.size()));
    }
  }

  state.step += 1;
  const auto& o = state.options;
  const double k = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, k);
  const double c2 = 1.0 - std::pow(o.beta2, k);
  const auto b1 = static_cast<float>(o.beta1);
  const auto b2 = static_cast<float>(o.beta2);

  for (auto& [name, p] : params) {
    const auto& g = grads.at(name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != p.size()) m.assign(p.size(), 0.0f);
    if (v.size() != p.size()) v.assign(p.size(), 0.0f);
    std::vector<float> next = p.to_vector();
    for (std::size_t i = 0; i < next.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      next[i] = static_cast<float>(next[i] - o.lr * m_hat / (std::sqrt(v_hat) + o.eps));
    }
    p = Tensor<float>(p.shape(), std::move(next));
  }
}

double global_norm(const ParamGrads& grads) {
  double total = 0.0;
  for (const auto& [name, g] : grads) {
    for (float v : g) total += static_cast<double>(v) * v;
  }
  return std::sqrt(total);
}

void scale_grads(ParamGrads& grads, double factor) {
  const auto f = static_cast<float>(factor);
  for (auto& [name, g] : grads) {
    for (auto& v : g) v *= f;
  }
}

}  // namespace smf::ad
