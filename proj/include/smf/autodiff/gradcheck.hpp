#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "smf/autodiff/tensor.hpp"

namespace smf::ad {

struct GradCheckOptions {
  double step = 1e-4;           // central-difference half width, applied in float64
  double input_scale = 1.0;     // inputs drawn uniformly from shift + scale * [-1, 1]
  double input_shift = 0.0;
  double floor_fraction = 1e-2; // see relative_error()
  std::string fault_op;         // corrupts this op's backward rule (harness self-test)
  double fault_factor = 1.5;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// |a - n| / max(|a|, |n|, floor). The floor is floor_fraction times the
// largest numeric gradient magnitude of the whole check, so entries that are
// tiny compared to the gradient's scale are judged against that scale.
inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor, 1e-12});
  return std::abs(analytic - numeric) / denom;
}

// Seeded inputs shared by the float32 and float64 evaluations. Values are
// drawn as floats so both precisions see the identical point.
inline std::vector<std::vector<float>> grad_check_inputs(const std::vector<Shape>& shapes, std::uint64_t seed,
                                                         const GradCheckOptions& opts) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<float>> out;
  for (const auto& s : shapes) {
    std::vector<float> v(numel(s));
    for (auto& x : v) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      x = static_cast<float>(opts.input_shift + opts.input_scale * (2.0 * u - 1.0));
    }
    out.push_back(std::move(v));
  }
  return out;
}

// Compares reverse-mode gradients (float32 forward and backward) against
// central differences of the same graph evaluated in float64.
// `build(inputs)` must be generic over the scalar type and return a scalar.
template <typename Build>
GradCheckResult grad_check(Build&& build, const std::vector<Shape>& shapes, std::uint64_t seed,
                           const GradCheckOptions& opts = {}) {
  const auto raw = grad_check_inputs(shapes, seed, opts);

  Tape<float> tape;
  if (!opts.fault_op.empty()) tape.inject_fault(opts.fault_op, static_cast<float>(opts.fault_factor));
  std::vector<Tensor<float>> leaves;
  for (std::size_t i = 0; i < shapes.size(); ++i) leaves.push_back(tape.leaf(Tensor<float>(shapes[i], raw[i])));
  const Tensor<float> loss = build(leaves);
  const Gradients<float> grads = tape.backward(loss);

  std::vector<Tensor<double>> point;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    point.emplace_back(shapes[i], std::vector<double>(raw[i].begin(), raw[i].end()));
  }
  std::vector<std::vector<double>> numeric(shapes.size());
  double scale = 0.0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    std::vector<double> values = point[i].to_vector();
    numeric[i].resize(values.size());
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double x0 = values[j];
      auto eval_at = [&](double x) {
        values[j] = x;
        std::vector<Tensor<double>> probe = point;
        probe[i] = Tensor<double>(shapes[i], values);
        return build(probe).item();
      };
      const double up = eval_at(x0 + opts.step);
      const double down = eval_at(x0 - opts.step);
      values[j] = x0;
      numeric[i][j] = (up - down) / (2.0 * opts.step);
      scale = std::max(scale, std::abs(numeric[i][j]));
    }
  }

  GradCheckResult result;
  const double floor = opts.floor_fraction * scale;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const bool has = grads.has(leaves[i]);
    for (std::size_t j = 0; j < numeric[i].size(); ++j) {
      const double a = has ? static_cast<double>(grads.of(leaves[i])[j]) : 0.0;
      const double err = relative_error(a, numeric[i][j], floor);
      if (err > result.max_rel_error) {
        result = GradCheckResult{err, i, j, a, numeric[i][j]};
      }
    }
  }
  return result;
}

}  // namespace smf::ad
