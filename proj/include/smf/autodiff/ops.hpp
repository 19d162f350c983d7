#pragma once

#include <span>
#include <vector>

#include "smf/autodiff/tensor.hpp"

// Differentiable operations. Every op checks shapes and throws ShapeError
// naming the op and the offending shapes. Broadcasting exists only for
// scalar scaling and for bias-add along the last axis; everything else is
// written against explicit shapes.
namespace smf::ad {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
// x (..., n) + bias (n)
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

// Batched product over the last two axes. `b` is either rank 2 (shared by
// every batch entry) or has the same leading batch axes as `a`.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false, bool trans_b = false);
// x (..., in) * weight (in, out) + bias (out)
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> swap_axes(const Tensor<T>& x, int axis0, int axis1);
// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
template <typename T> Tensor<T> concat(std::span<const Tensor<T>> parts, int axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t begin, std::size_t end);
// Inserts a new axis of length `count` at `axis`, repeating x along it.
template <typename T> Tensor<T> expand(const Tensor<T>& x, int axis, std::size_t count);

template <typename T> Tensor<T> softmax(const Tensor<T>& x);
// Normalizes over the last axis; eps is fixed at 1e-5.
template <typename T> Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias);
// tanh approximation
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
// table (vocab, d), ids -> (ids.size(), d)
template <typename T> Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> sum_axis(const Tensor<T>& x, int axis);
template <typename T> Tensor<T> mean_axis(const Tensor<T>& x, int axis);
// mean((a - b)^2) over all entries
template <typename T> Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

inline constexpr double kLayerNormEps = 1e-5;

template <typename T> bool all_finite(const Tensor<T>& x);

}  // namespace smf::ad
