#include "smf/autodiff/op_checks.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "smf/autodiff/gradcheck.hpp"
#include "smf/autodiff/ops.hpp"

namespace smf::ad {
namespace {

// Fixed, non-uniform weights so the probe loss sum(y * w) exercises every
// output entry differently.
template <typename T>
Tensor<T> probe_weights(const Shape& shape, int salt) {
  std::vector<T> w(numel(shape));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = static_cast<T>(std::sin(1.3 * static_cast<double>(i) + 0.5 * salt) + 0.5);
  }
  return Tensor<T>(shape, std::move(w));
}

template <typename T>
Tensor<T> probe(const Tensor<T>& y, int salt = 0) {
  return sum(mul(y, probe_weights<T>(y.shape(), salt)));
}

struct Dims {
  explicit Dims(std::uint64_t seed) : rng(seed * 0x9E3779B97F4A7C15ULL + 17) {}
  std::size_t next(std::size_t lo = 2, std::size_t hi = 5) { return lo + rng() % (hi - lo + 1); }
  std::mt19937_64 rng;
};

using Check = std::function<GradCheckResult(std::uint64_t seed, const GradCheckOptions& opts)>;

struct Suite {
  std::string op;
  Check check;
};

std::vector<Suite> suites() {
  std::vector<Suite> s;
  s.push_back({"add", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 Shape sh{d.next(), d.next()};
                 return grad_check([](const auto& in) { return probe(add(in[0], in[1])); }, {sh, sh}, seed, o);
               }});
  s.push_back({"sub", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 Shape sh{d.next(), d.next()};
                 return grad_check([](const auto& in) { return probe(sub(in[0], in[1])); }, {sh, sh}, seed, o);
               }});
  s.push_back({"mul", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 Shape sh{d.next(), d.next(), d.next()};
                 return grad_check([](const auto& in) { return probe(mul(in[0], in[1])); }, {sh, sh}, seed, o);
               }});
  s.push_back({"scale", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 Shape sh{d.next(), d.next()};
                 return grad_check(
                     [](const auto& in) {
                       using T = typename std::decay_t<decltype(in[0])>::value_type;
                       return probe(scale(in[0], T(-1.75)));
                     },
                     {sh}, seed, o);
               }});
  s.push_back({"add_bias", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 const auto n = d.next();
                 return grad_check([](const auto& in) { return probe(add_bias(in[0], in[1])); },
                                   {{d.next(), d.next(), n}, {n}}, seed, o);
               }});
  s.push_back({"matmul", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 const auto m = d.next(), k = d.next(), n = d.next(), b = d.next(1, 3);
                 // Plain, both transposes, and batched-with-shared-weight variants in one graph.
                 return grad_check(
                     [](const auto& in) {
                       auto plain = probe(matmul(in[0], in[1]), 1);
                       auto trans = probe(matmul(in[1], in[0], true, true), 2);
                       auto batched = probe(matmul(in[2], in[1]), 3);
                       auto per_batch = probe(matmul(in[2], in[3], false, true), 4);
                       auto left_t = probe(matmul(in[2], in[2], true, false), 5);
                       return add(add(add(plain, trans), add(batched, per_batch)), left_t);
                     },
                     {{m, k}, {k, n}, {b, m, k}, {b, n, k}}, seed, o);
               }});
  s.push_back({"reshape", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 const auto a = d.next(), b = d.next(), c = d.next();
                 return grad_check([=](const auto& in) { return probe(reshape(in[0], Shape{a * b, c})); },
                                   {{a, b, c}}, seed, o);
               }});
  s.push_back({"swap_axes", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 return grad_check([](const auto& in) { return probe(swap_axes(in[0], 1, 2)); },
                                   {{d.next(), d.next(), d.next(), d.next()}}, seed, o);
               }});
  s.push_back({"transpose", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 return grad_check([](const auto& in) { return probe(transpose(in[0])); },
                                   {{d.next(), d.next(), d.next()}}, seed, o);
               }});
  s.push_back({"concat", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 const auto a = d.next(), c = d.next();
                 return grad_check(
                     [](const auto& in) {
                       using T = typename std::decay_t<decltype(in[0])>::value_type;
                       std::vector<Tensor<T>> parts{in[0], in[1], in[0]};
                       return probe(concat<T>(parts, 1));
                     },
                     {{a, d.next(), c}, {a, d.next(), c}}, seed, o);
               }});
  s.push_back({"slice", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 const auto n = d.next(3, 6);
                 return grad_check([=](const auto& in) { return probe(slice(in[0], 1, 1, n - 1)); },
                                   {{d.next(), n, d.next()}}, seed, o);
               }});
  s.push_back({"expand", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 const auto c = d.next();
                 return grad_check([=](const auto& in) { return probe(expand(in[0], 1, c)); },
                                   {{d.next(), d.next()}}, seed, o);
               }});
  s.push_back({"softmax", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 GradCheckOptions wide = o;
                 wide.input_scale = 2.0;
                 return grad_check([](const auto& in) { return probe(softmax(in[0])); },
                                   {{d.next(), d.next(), d.next(3, 8)}}, seed, wide);
               }});
  s.push_back({"layer_norm", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 const auto n = d.next(3, 8);
                 return grad_check([](const auto& in) { return probe(layer_norm(in[0], in[1], in[2])); },
                                   {{d.next(), n}, {n}, {n}}, seed, o);
               }});
  s.push_back({"gelu", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 GradCheckOptions wide = o;
                 wide.input_scale = 3.0;
                 return grad_check([](const auto& in) { return probe(gelu(in[0])); }, {{d.next(), d.next()}}, seed,
                                   wide);
               }});
  s.push_back({"embedding", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 const auto vocab = d.next(3, 7);
                 std::vector<int> ids(d.next(2, 6));
                 for (auto& id : ids) id = static_cast<int>(d.next(0, vocab - 1));
                 return grad_check([ids](const auto& in) { return probe(embedding(in[0], ids)); },
                                   {{vocab, d.next()}}, seed, o);
               }});
  s.push_back({"sum", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 return grad_check([](const auto& in) { return scale(sum(mul(in[0], in[0])), decltype(in[0][0])(0.5)); },
                                   {{d.next(), d.next()}}, seed, o);
               }});
  s.push_back({"mean", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 return grad_check([](const auto& in) { return mean(mul(in[0], in[0])); }, {{d.next(), d.next()}},
                                   seed, o);
               }});
  s.push_back({"sum_axis", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 return grad_check(
                     [](const auto& in) {
                       auto r = sum_axis(in[0], 1);
                       return probe(mul(r, r));
                     },
                     {{d.next(), d.next(), d.next()}}, seed, o);
               }});
  s.push_back({"mse", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Dims d(seed);
                 Shape sh{d.next(), d.next()};
                 return grad_check([](const auto& in) { return mse(in[0], in[1]); }, {sh, sh}, seed, o);
               }});
  return s;
}

}  // namespace

std::vector<OpCheckReport> run_op_grad_checks(int seeds, const std::string& fault_op) {
  std::vector<OpCheckReport> reports;
  for (const auto& suite : suites()) {
    OpCheckReport r;
    r.op = suite.op;
    GradCheckOptions opts;
    opts.fault_op = fault_op;
    for (int seed = 0; seed < seeds; ++seed) {
      const auto res = suite.check(static_cast<std::uint64_t>(seed), opts);
      if (res.max_rel_error > r.worst_rel_error) {
        r.worst_rel_error = res.max_rel_error;
        r.worst_seed = seed;
      }
    }
    r.passed = r.worst_rel_error < kOpCheckTolerance;
    reports.push_back(r);
  }
  return reports;
}

}  // namespace smf::ad
