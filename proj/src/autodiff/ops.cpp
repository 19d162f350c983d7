#include "smf/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <type_traits>

#include "gemm.hpp"
#include "kernels.hpp"

namespace smf::ad {
namespace {

template <typename T>
Tensor<T> finish(std::string_view op, Tensor<T> value, std::initializer_list<const Tensor<T>*> inputs,
                 typename Tape<T>::BackwardFn backward) {
  Tape<T>* tape = common_tape<T>(op, inputs);
  if (!tape) return value;
  return tape->record(op, std::move(value), inputs, std::move(backward));
}

[[noreturn]] void mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

std::size_t normalize_axis(std::string_view op, int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_rank(std::string_view op, const Shape& s, std::size_t min_rank) {
  if (s.size() < min_rank) {
    throw ShapeError(std::string(op) + ": expected rank >= " + std::to_string(min_rank) + ", got shape " +
                     to_string(s));
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch("add", a.shape(), b.shape());
  std::vector<T> out(a.size());
  const T* pa = a.data();
  const T* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
  return finish<T>("add", Tensor<T>(a.shape(), std::move(out)), {&a, &b},
                   [a, b](std::span<const T> g, Tape<T>& tape) {
                     for (const auto* in : {&a, &b}) {
                       auto gi = tape.grad_of(*in);
                       for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
                     }
                   });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch("sub", a.shape(), b.shape());
  std::vector<T> out(a.size());
  const T* pa = a.data();
  const T* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
  return finish<T>("sub", Tensor<T>(a.shape(), std::move(out)), {&a, &b},
                   [a, b](std::span<const T> g, Tape<T>& tape) {
                     auto ga = tape.grad_of(a);
                     for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                     auto gb = tape.grad_of(b);
                     for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                   });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch("mul", a.shape(), b.shape());
  std::vector<T> out(a.size());
  const T* pa = a.data();
  const T* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
  return finish<T>("mul", Tensor<T>(a.shape(), std::move(out)), {&a, &b},
                   [a, b](std::span<const T> g, Tape<T>& tape) {
                     auto ga = tape.grad_of(a);
                     for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b[i];
                     auto gb = tape.grad_of(b);
                     for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a[i];
                   });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  const T* pa = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * factor;
  return finish<T>("scale", Tensor<T>(a.shape(), std::move(out)), {&a},
                   [a, factor](std::span<const T> g, Tape<T>& tape) {
                     auto ga = tape.grad_of(a);
                     for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
                   });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_rank("add_bias", x.shape(), 1);
  const std::size_t n = x.dim(-1);
  if (bias.rank() != 1 || bias.dim(0) != n) mismatch("add_bias", x.shape(), bias.shape());
  std::vector<T> out(x.size());
  const T* px = x.data();
  const T* pb = bias.data();
  for (std::size_t i = 0; i < out.size(); i += n) {
    for (std::size_t j = 0; j < n; ++j) out[i + j] = px[i + j] + pb[j];
  }
  return finish<T>("add_bias", Tensor<T>(x.shape(), std::move(out)), {&x, &bias},
                   [x, bias, n](std::span<const T> g, Tape<T>& tape) {
                     auto gx = tape.grad_of(x);
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                     auto gb = tape.grad_of(bias);
                     if (!gb.empty()) {
                       for (std::size_t i = 0; i < g.size(); i += n) {
                         for (std::size_t j = 0; j < n; ++j) gb[j] += g[i + j];
                       }
                     }
                   });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a, bool trans_b) {
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  const std::size_t ra = a.dim(-2), ca = a.dim(-1);
  const std::size_t rb = b.dim(-2), cb = b.dim(-1);
  const std::size_t m = trans_a ? ca : ra;
  const std::size_t k = trans_a ? ra : ca;
  const std::size_t kb = trans_b ? cb : rb;
  const std::size_t n = trans_b ? rb : cb;
  if (k != kb) mismatch("matmul", a.shape(), b.shape());

  const Shape batch_shape(a.shape().begin(), a.shape().end() - 2);
  const bool shared_b = b.rank() == 2;
  if (!shared_b && Shape(b.shape().begin(), b.shape().end() - 2) != batch_shape) {
    mismatch("matmul", a.shape(), b.shape());
  }
  const std::size_t batch = numel(batch_shape);
  const int lda = static_cast<int>(ca), ldb = static_cast<int>(cb);
  const std::size_t a_stride = ra * ca, b_stride = shared_b ? 0 : rb * cb, c_stride = m * n;
  const bool fold = shared_b && !trans_a;

  Shape out_shape = batch_shape;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(batch * m * n);
  if (fold) {
    detail::gemm(false, trans_b, static_cast<int>(batch * m), static_cast<int>(n), static_cast<int>(k), T(1),
                 a.data(), lda, b.data(), ldb, T(0), out.data(), static_cast<int>(n));
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      detail::gemm(trans_a, trans_b, static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), T(1),
                   a.data() + i * a_stride, lda, b.data() + i * b_stride, ldb, T(0), out.data() + i * c_stride,
                   static_cast<int>(n));
    }
  }

  return finish<T>(
      "matmul", Tensor<T>(std::move(out_shape), std::move(out)), {&a, &b},
      [=](std::span<const T> g, Tape<T>& tape) {
        const int mi = static_cast<int>(m), ni = static_cast<int>(n), ki = static_cast<int>(k);
        auto ga = tape.grad_of(a);
        if (!ga.empty()) {
          if (fold) {
            detail::gemm(false, !trans_b, static_cast<int>(batch * m), ki, ni, T(1), g.data(), ni, b.data(), ldb,
                         T(1), ga.data(), lda);
          } else {
            for (std::size_t i = 0; i < batch; ++i) {
              const T* gi = g.data() + i * c_stride;
              const T* bi = b.data() + i * b_stride;
              T* dai = ga.data() + i * a_stride;
              if (!trans_a) {
                detail::gemm(false, !trans_b, mi, ki, ni, T(1), gi, ni, bi, ldb, T(1), dai, lda);
              } else {
                detail::gemm(trans_b, true, ki, mi, ni, T(1), bi, ldb, gi, ni, T(1), dai, lda);
              }
            }
          }
        }
        auto gb = tape.grad_of(b);
        if (!gb.empty()) {
          const int ldgb = static_cast<int>(cb);
          if (fold) {
            const int mm = static_cast<int>(batch * m);
            if (!trans_b) {
              detail::gemm(true, false, ki, ni, mm, T(1), a.data(), lda, g.data(), ni, T(1), gb.data(), ldgb);
            } else {
              detail::gemm(true, false, ni, ki, mm, T(1), g.data(), ni, a.data(), lda, T(1), gb.data(), ldgb);
            }
          } else {
            for (std::size_t i = 0; i < batch; ++i) {
              const T* gi = g.data() + i * c_stride;
              const T* ai = a.data() + i * a_stride;
              T* dbi = gb.data() + i * b_stride;
              if (!trans_b) {
                detail::gemm(!trans_a, false, ki, ni, mi, T(1), ai, lda, gi, ni, T(1), dbi, ldgb);
              } else {
                detail::gemm(true, trans_a, ni, ki, mi, T(1), gi, ni, ai, lda, T(1), dbi, ldgb);
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return add_bias(matmul(x, weight), bias);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) mismatch("reshape", x.shape(), shape);
  return finish<T>("reshape", x.with_shape(std::move(shape)), {&x}, [x](std::span<const T> g, Tape<T>& tape) {
    auto gx = tape.grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

namespace {

// out[p][j][m][i][q] = in[p][i][m][j][q]; `in` has extents (pre, d0, mid, d1, post).
template <typename T>
void swap_copy(const T* in, T* out, std::size_t pre, std::size_t d0, std::size_t mid, std::size_t d1,
               std::size_t post, bool accumulate) {
  for (std::size_t p = 0; p < pre; ++p) {
    for (std::size_t i = 0; i < d0; ++i) {
      for (std::size_t m = 0; m < mid; ++m) {
        for (std::size_t j = 0; j < d1; ++j) {
          const T* src = in + ((((p * d0 + i) * mid + m) * d1 + j) * post);
          T* dst = out + ((((p * d1 + j) * mid + m) * d0 + i) * post);
          if (accumulate) {
            for (std::size_t q = 0; q < post; ++q) dst[q] += src[q];
          } else {
            std::copy(src, src + post, dst);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> swap_axes(const Tensor<T>& x, int axis0, int axis1) {
  std::size_t a0 = normalize_axis("swap_axes", axis0, x.rank());
  std::size_t a1 = normalize_axis("swap_axes", axis1, x.rank());
  if (a0 == a1) return x;
  if (a0 > a1) std::swap(a0, a1);
  const Shape& s = x.shape();
  std::size_t pre = 1, mid = 1, post = 1;
  for (std::size_t i = 0; i < a0; ++i) pre *= s[i];
  for (std::size_t i = a0 + 1; i < a1; ++i) mid *= s[i];
  for (std::size_t i = a1 + 1; i < s.size(); ++i) post *= s[i];
  const std::size_t d0 = s[a0], d1 = s[a1];
  Shape out_shape = s;
  std::swap(out_shape[a0], out_shape[a1]);
  std::vector<T> out(x.size());
  swap_copy(x.data(), out.data(), pre, d0, mid, d1, post, false);
  return finish<T>("swap_axes", Tensor<T>(std::move(out_shape), std::move(out)), {&x},
                   [=](std::span<const T> g, Tape<T>& tape) {
                     auto gx = tape.grad_of(x);
                     if (!gx.empty()) swap_copy(g.data(), gx.data(), pre, d1, mid, d0, post, true);
                   });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank("transpose", x.shape(), 2);
  return swap_axes(x, -2, -1);
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t ax = normalize_axis("concat", axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != out_shape.size()) mismatch("concat", parts[0].shape(), p.shape());
    probe[ax] = 0;
    if (probe != out_shape) mismatch("concat", parts[0].shape(), p.shape());
  }
  for (const auto& p : parts) out_shape[ax] += p.shape()[ax];

  const AxisSplit os = split_at(out_shape, ax);
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.shape()[ax] * os.inner;
    for (std::size_t o = 0; o < os.outer; ++o) {
      std::copy(p.data() + o * block, p.data() + (o + 1) * block, out.data() + o * os.extent * os.inner + off);
    }
    offsets.push_back(off);
    off += block;
  }

  std::vector<Tensor<T>> saved(parts.begin(), parts.end());
  Tape<T>* tape = nullptr;
  for (const auto& p : parts) {
    if (!p.tape()) continue;
    if (tape && tape != p.tape()) throw std::logic_error("concat: inputs belong to different tapes");
    tape = p.tape();
  }
  Tensor<T> value(std::move(out_shape), std::move(out));
  if (!tape) return value;
  // Record against the first tracked part; the rule routes gradients to all parts.
  const Tensor<T>* anchor = nullptr;
  for (const auto& p : parts) {
    if (p.tape()) anchor = &p;
  }
  return tape->record("concat", std::move(value), {anchor},
                      [saved, offsets, os, ax](std::span<const T> g, Tape<T>& t) {
                        for (std::size_t pi = 0; pi < saved.size(); ++pi) {
                          auto gp = t.grad_of(saved[pi]);
                          if (gp.empty()) continue;
                          const std::size_t block = saved[pi].shape()[ax] * os.inner;
                          for (std::size_t o = 0; o < os.outer; ++o) {
                            const T* src = g.data() + o * os.extent * os.inner + offsets[pi];
                            T* dst = gp.data() + o * block;
                            for (std::size_t q = 0; q < block; ++q) dst[q] += src[q];
                          }
                        }
                      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis("slice", axis, x.rank());
  if (begin >= end || end > x.shape()[ax]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of shape " + to_string(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  const std::size_t block = (end - begin) * s.inner;
  std::vector<T> out(s.outer * block);
  for (std::size_t o = 0; o < s.outer; ++o) {
    const T* src = x.data() + (o * s.extent + begin) * s.inner;
    std::copy(src, src + block, out.data() + o * block);
  }
  return finish<T>("slice", Tensor<T>(std::move(out_shape), std::move(out)), {&x},
                   [x, s, begin, block](std::span<const T> g, Tape<T>& tape) {
                     auto gx = tape.grad_of(x);
                     if (gx.empty()) return;
                     for (std::size_t o = 0; o < s.outer; ++o) {
                       T* dst = gx.data() + (o * s.extent + begin) * s.inner;
                       const T* src = g.data() + o * block;
                       for (std::size_t q = 0; q < block; ++q) dst[q] += src[q];
                     }
                   });
}

template <typename T>
Tensor<T> expand(const Tensor<T>& x, int axis, std::size_t count) {
  if (count == 0) throw ShapeError("expand: count must be positive");
  const int r = static_cast<int>(x.rank()) + 1;
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("expand: axis out of range for shape " + to_string(x.shape()));
  const auto ax = static_cast<std::size_t>(a);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= x.shape()[i];
  for (std::size_t i = ax; i < x.rank(); ++i) inner *= x.shape()[i];
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin() + a, count);
  std::vector<T> out(x.size() * count);
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = x.data() + o * inner;
    for (std::size_t c = 0; c < count; ++c) std::copy(src, src + inner, out.data() + (o * count + c) * inner);
  }
  return finish<T>("expand", Tensor<T>(std::move(out_shape), std::move(out)), {&x},
                   [x, outer, inner, count](std::span<const T> g, Tape<T>& tape) {
                     auto gx = tape.grad_of(x);
                     if (gx.empty()) return;
                     for (std::size_t o = 0; o < outer; ++o) {
                       T* dst = gx.data() + o * inner;
                       for (std::size_t c = 0; c < count; ++c) {
                         const T* src = g.data() + (o * count + c) * inner;
                         for (std::size_t q = 0; q < inner; ++q) dst[q] += src[q];
                       }
                     }
                   });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  require_rank("softmax", x.shape(), 1);
  const std::size_t n = x.dim(-1);
  std::vector<T> out(x.size());
  const T* px = x.data();
  if constexpr (std::is_same_v<T, float>) {
    detail::softmax_rows(px, out.data(), x.size() / n, n);
  } else {
    for (std::size_t r = 0; r < x.size(); r += n) {
      T mx = px[r];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, px[r + j]);
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        out[r + j] = std::exp(px[r + j] - mx);
        total += out[r + j];
      }
      const T inv = T(1) / total;
      for (std::size_t j = 0; j < n; ++j) out[r + j] *= inv;
    }
  }
  Tensor<T> y(x.shape(), std::move(out));
  return finish<T>("softmax", y, {&x}, [x, y, n](std::span<const T> g, Tape<T>& tape) {
    auto gx = tape.grad_of(x);
    if (gx.empty()) return;
    const T* py = y.data();
    for (std::size_t r = 0; r < gx.size(); r += n) {
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r + j] * py[r + j];
      for (std::size_t j = 0; j < n; ++j) gx[r + j] += py[r + j] * (g[r + j] - dot);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
  require_rank("layer_norm", x.shape(), 1);
  const std::size_t n = x.dim(-1);
  if (gain.rank() != 1 || gain.dim(0) != n) mismatch("layer_norm", x.shape(), gain.shape());
  if (bias.rank() != 1 || bias.dim(0) != n) mismatch("layer_norm", x.shape(), bias.shape());
  const std::size_t rows = x.size() / n;
  std::vector<T> xhat(x.size()), rstd(rows), out(x.size());
  const T* px = x.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    rstd[r] = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (row[j] - mu) * rstd[r];
      out[r * n + j] = xhat[r * n + j] * pg[j] + pb[j];
    }
  }
  auto saved_xhat = std::make_shared<const std::vector<T>>(std::move(xhat));
  auto saved_rstd = std::make_shared<const std::vector<T>>(std::move(rstd));
  return finish<T>(
      "layer_norm", Tensor<T>(x.shape(), std::move(out)), {&x, &gain, &bias},
      [x, gain, bias, n, rows, saved_xhat, saved_rstd](std::span<const T> g, Tape<T>& tape) {
        const auto& xh = *saved_xhat;
        const auto& rs = *saved_rstd;
        auto gg = tape.grad_of(gain);
        auto gb = tape.grad_of(bias);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < n; ++j) {
            if (!gg.empty()) gg[j] += g[r * n + j] * xh[r * n + j];
            if (!gb.empty()) gb[j] += g[r * n + j];
          }
        }
        auto gx = tape.grad_of(x);
        if (gx.empty()) return;
        const T* pg = gain.data();
        const T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          T sum_d = 0, sum_dx = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const T d = g[r * n + j] * pg[j];
            sum_d += d;
            sum_dx += d * xh[r * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const T d = g[r * n + j] * pg[j];
            gx[r * n + j] += rs[r] * (d - sum_d * inv_n - xh[r * n + j] * sum_dx * inv_n);
          }
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  // 0.5 * (1 + tanh(u)) is evaluated as sigmoid(2u); the tanh form loses all
  // precision in float32 for large negative inputs.
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = T(0.044715);
  const std::size_t size = x.size();
  std::vector<T> gate(size);
  const T* px = x.data();
  if constexpr (std::is_same_v<T, float>) {
    detail::gelu_gate(px, gate.data(), size, c, k);
  } else {
    for (std::size_t i = 0; i < size; ++i) {
      const T v = px[i];
      gate[i] = T(1) / (T(1) + std::exp(T(-2) * c * (v + k * v * v * v)));
    }
  }
  std::vector<T> out(size);
  for (std::size_t i = 0; i < size; ++i) out[i] = px[i] * gate[i];
  auto saved = std::make_shared<const std::vector<T>>(std::move(gate));
  return finish<T>("gelu", Tensor<T>(x.shape(), std::move(out)), {&x}, [x, saved](std::span<const T> g, Tape<T>& tape) {
    auto gx = tape.grad_of(x);
    const T* px = x.data();
    const T* ps = saved->data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T v = px[i];
      const T s = ps[i];
      const T d = s + v * s * (T(1) - s) * T(2) * c * (T(1) + T(3) * k * v * v);
      gx[i] += g[i] * d;
    }
  });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + to_string(table.shape()));
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                              std::to_string(vocab));
    }
    std::copy_n(table.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return finish<T>("embedding", Tensor<T>(Shape{ids.size(), d}, std::move(out)), {&table},
                   [table, saved, d](std::span<const T> g, Tape<T>& tape) {
                     auto gt = tape.grad_of(table);
                     if (gt.empty()) return;
                     for (std::size_t i = 0; i < saved.size(); ++i) {
                       T* dst = gt.data() + static_cast<std::size_t>(saved[i]) * d;
                       for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
                     }
                   });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.values()) total += v;
  return finish<T>("sum", Tensor<T>::scalar(total), {&x}, [x](std::span<const T> g, Tape<T>& tape) {
    auto gx = tape.grad_of(x);
    for (auto& v : gx) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.values()) total += v;
  const T inv = T(1) / static_cast<T>(x.size());
  return finish<T>("mean", Tensor<T>::scalar(total * inv), {&x}, [x, inv](std::span<const T> g, Tape<T>& tape) {
    auto gx = tape.grad_of(x);
    for (auto& v : gx) v += g[0] * inv;
  });
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis("sum_axis", axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<T> out(s.outer * s.inner, T(0));
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const T* src = x.data() + (o * s.extent + e) * s.inner;
      T* dst = out.data() + o * s.inner;
      for (std::size_t q = 0; q < s.inner; ++q) dst[q] += src[q];
    }
  }
  return finish<T>("sum_axis", Tensor<T>(std::move(out_shape), std::move(out)), {&x},
                   [x, s](std::span<const T> g, Tape<T>& tape) {
                     auto gx = tape.grad_of(x);
                     if (gx.empty()) return;
                     for (std::size_t o = 0; o < s.outer; ++o) {
                       for (std::size_t e = 0; e < s.extent; ++e) {
                         T* dst = gx.data() + (o * s.extent + e) * s.inner;
                         const T* src = g.data() + o * s.inner;
                         for (std::size_t q = 0; q < s.inner; ++q) dst[q] += src[q];
                       }
                     }
                   });
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis("mean_axis", axis, x.rank());
  return scale(sum_axis(x, axis), T(1) / static_cast<T>(x.shape()[ax]));
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch("mse", a.shape(), b.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (pa[i] - pb[i]) * (pa[i] - pb[i]);
  const T inv = T(1) / static_cast<T>(a.size());
  return finish<T>("mse", Tensor<T>::scalar(total * inv), {&a, &b},
                   [a, b, inv](std::span<const T> g, Tape<T>& tape) {
                     const T* pa = a.data();
                     const T* pb = b.data();
                     const T c = T(2) * inv * g[0];
                     auto ga = tape.grad_of(a);
                     for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * (pa[i] - pb[i]);
                     auto gb = tape.grad_of(b);
                     for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= c * (pa[i] - pb[i]);
                   });
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
  return std::all_of(x.values().begin(), x.values().end(), [](T v) { return std::isfinite(v); });
}

#define SMF_INSTANTIATE_OPS(T)                                                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> scale(const Tensor<T>&, T);                                                   \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);                       \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                             \
  template Tensor<T> swap_axes(const Tensor<T>&, int, int);                                        \
  template Tensor<T> transpose(const Tensor<T>&);                                                  \
  template Tensor<T> concat(std::span<const Tensor<T>>, int);                                      \
  template Tensor<T> slice(const Tensor<T>&, int, std::size_t, std::size_t);                       \
  template Tensor<T> expand(const Tensor<T>&, int, std::size_t);                                   \
  template Tensor<T> softmax(const Tensor<T>&);                                                    \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> gelu(const Tensor<T>&);                                                       \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const int>);                            \
  template Tensor<T> sum(const Tensor<T>&);                                                        \
  template Tensor<T> mean(const Tensor<T>&);                                                       \
  template Tensor<T> sum_axis(const Tensor<T>&, int);                                              \
  template Tensor<T> mean_axis(const Tensor<T>&, int);                                             \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                      \
  template bool all_finite(const Tensor<T>&);

SMF_INSTANTIATE_OPS(float)
SMF_INSTANTIATE_OPS(double)

#undef SMF_INSTANTIATE_OPS

}  // namespace smf::ad
