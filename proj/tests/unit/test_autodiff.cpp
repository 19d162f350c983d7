#include <cmath>
#include <random>

#include "doctest.h"
#include "smf/autodiff/adam.hpp"
#include "smf/autodiff/gradcheck.hpp"
#include "smf/autodiff/op_checks.hpp"
#include "smf/autodiff/ops.hpp"

using namespace smf::ad;

namespace {

template <typename T>
Tensor<T> probe_sum(const Tensor<T>& y) {
  std::vector<T> w(y.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = T(1) + T(i);
  return sum(mul(y, Tensor<T>(y.shape(), w)));
}

}  // namespace

TEST_CASE("matmul with the identity returns the other operand") {
  Tensor<float> eye({2, 2}, {1, 0, 0, 1});
  Tensor<float> a({2, 2}, {1.5f, -2.0f, 3.25f, 0.5f});
  auto out = matmul(eye, a);
  CHECK(out.shape() == Shape{2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == a[i]);
}

TEST_CASE("matmul agrees with a naive product at sequence-sized shapes") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (std::size_t s : {64u, 193u, 257u}) {
    const std::size_t d = 16;
    std::vector<double> av(2 * s * d);
    for (auto& v : av) v = nd(rng);
    std::vector<float> af(av.begin(), av.end());
    const auto pd = matmul(Tensor<double>({2, s, d}, av), Tensor<double>({2, s, d}, av), false, true);
    const auto pf = matmul(Tensor<float>({2, s, d}, af), Tensor<float>({2, s, d}, af), false, true);
    double worst_d = 0, worst_f = 0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t k = 0; k < s; ++k) {
          double ref = 0;
          for (std::size_t j = 0; j < d; ++j) ref += av[(b * s + i) * d + j] * av[(b * s + k) * d + j];
          const std::size_t o = (b * s + i) * s + k;
          worst_d = std::max(worst_d, std::abs(pd[o] - ref));
          worst_f = std::max(worst_f, std::abs(pf[o] - ref));
        }
    CHECK(worst_d < 1e-10);
    CHECK(worst_f < 1e-3);
  }
}

TEST_CASE("softmax of equal logits is uniform") {
  auto y = softmax(Tensor<float>::zeros({4}));
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(0.25f));
}

TEST_CASE("softmax rows are nonnegative and sum to one even for large logits") {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 30.0f);
  std::vector<float> v(6 * 9);
  for (auto& x : v) x = n(rng);
  v[0] = 1e4f;
  auto y = softmax(Tensor<float>({6, 9}, v));
  CHECK(all_finite(y));
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 9; ++j) {
      CHECK(y[r * 9 + j] >= 0.0f);
      s += y[r * 9 + j];
    }
    CHECK(std::abs(s - 1.0) < 1e-5);
  }
}

TEST_CASE("layer norm of a constant row is zero without NaN") {
  auto y = layer_norm(Tensor<float>::full({2, 5}, 3.0f), Tensor<float>::full({5}, 1.0f), Tensor<float>::zeros({5}));
  CHECK(all_finite(y));
  for (float v : y.values()) CHECK(v == 0.0f);
}

TEST_CASE("backward of sum(x*x) at x=3 is 6") {
  Tape<float> tape;
  auto x = tape.leaf(Tensor<float>({1}, {3.0f}));
  auto g = tape.backward(sum(mul(x, x)));
  CHECK(g.of(x)[0] == doctest::Approx(6.0f));
  CHECK(tape.consumed());
}

TEST_CASE("backward of mse(x, 0) is 2a") {
  Tape<float> tape;
  auto x = tape.leaf(Tensor<float>({1}, {-1.25f}));
  auto g = tape.backward(mse(x, Tensor<float>::zeros({1})));
  CHECK(g.of(x)[0] == doctest::Approx(-2.5f));
}

TEST_CASE("a node feeding two consumers accumulates both paths") {
  Tape<float> t1;
  auto x1 = t1.leaf(Tensor<float>({3}, {0.5f, -1.0f, 2.0f}));
  auto g1 = t1.backward(probe_sum(add(x1, x1)));
  Tape<float> t2;
  auto x2 = t2.leaf(Tensor<float>({3}, {0.5f, -1.0f, 2.0f}));
  auto g2 = t2.backward(probe_sum(scale(x2, 2.0f)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(g1.of(x1)[i] == g2.of(x2)[i]);
}

TEST_CASE("softmax-then-pick matches central differences") {
  auto res = grad_check([](const auto& in) { return sum(slice(softmax(in[0]), 0, 2, 3)); }, {{5}}, 11);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("matmul + softmax + mse chain matches central differences") {
  auto res = grad_check(
      [](const auto& in) {
        using T = typename std::decay_t<decltype(in[0])>::value_type;
        auto y = softmax(matmul(in[0], in[1]));
        return mse(y, Tensor<T>::full({4, 3}, T(0.2)));
      },
      {{4, 8}, {8, 3}}, 5);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("a purely linear graph is exact to float rounding") {
  auto res = grad_check([](const auto& in) { return sum(matmul(in[0], in[1])); }, {{3, 4}, {4, 2}}, 9);
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("gelu far from zero matches central differences") {
  GradCheckOptions far;
  far.input_shift = 4.0;
  far.input_scale = 1.0;
  auto pos = grad_check([](const auto& in) { return sum(mul(gelu(in[0]), in[0])); }, {{6}}, 2, far);
  far.input_shift = -4.0;
  auto neg = grad_check([](const auto& in) { return sum(mul(gelu(in[0]), in[0])); }, {{6}}, 2, far);
  CHECK(pos.max_rel_error < 1e-4);
  CHECK(neg.max_rel_error < 1e-4);
}

TEST_CASE("every registered op passes the gradient check on 10 seeds") {
  auto reports = run_op_grad_checks(10);
  CHECK(reports.size() >= 16);
  for (const auto& r : reports) {
    INFO(r.op << " worst " << r.worst_rel_error << " at seed " << r.worst_seed);
    CHECK(r.passed);
  }
}

TEST_CASE("a corrupted backward rule is caught and named") {
  auto reports = run_op_grad_checks(2, "softmax");
  bool found = false;
  for (const auto& r : reports) {
    if (r.op == "softmax") {
      found = true;
      CHECK_FALSE(r.passed);
    }
  }
  CHECK(found);
}

TEST_CASE("tape replay is bit-identical") {
  auto run = [] {
    Tape<float> tape;
    std::mt19937_64 rng(42);
    std::normal_distribution<float> n;
    std::vector<float> a(12), b(12);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    auto x = tape.leaf(Tensor<float>({3, 4}, a));
    auto w = tape.leaf(Tensor<float>({4, 3}, b));
    auto loss = mean(gelu(layer_norm(matmul(x, w), Tensor<float>::full({3}, 1.0f), Tensor<float>::zeros({3}))));
    auto g = tape.backward(loss);
    auto out = g.of(x);
    out.insert(out.end(), g.of(w).begin(), g.of(w).end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("shape errors name the op and both shapes") {
  Tensor<float> a({2, 3}, std::vector<float>(6, 1.0f));
  Tensor<float> b({4, 5}, std::vector<float>(20, 1.0f));
  try {
    matmul(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(2, 3)") != std::string::npos);
    CHECK(msg.find("(4, 5)") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, Tensor<float>({3, 2}, std::vector<float>(6, 1.0f))), ShapeError);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<float> tape;
  auto x = tape.leaf(Tensor<float>({2}, {1.0f, 2.0f}));
  CHECK_THROWS_AS(tape.backward(scale(x, 2.0f)), ShapeError);
}

TEST_CASE("ops on constants do not touch a tape") {
  Tape<float> tape;
  auto y = add(Tensor<float>({1}, {1.0f}), Tensor<float>({1}, {2.0f}));
  CHECK_FALSE(y.requires_grad());
  CHECK(tape.size() == 0);
}

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
  Parameters<float> p{{"w", Tensor<float>({3}, {1.0f, -2.0f, 0.5f})}};
  AdamState st;
  adam_step(p, {{"w", {0.0f, 0.0f, 0.0f}}}, st);
  CHECK(p.at("w").to_vector() == std::vector<float>{1.0f, -2.0f, 0.5f});
  CHECK(st.step == 1);
}

TEST_CASE("adam's first step with unit gradient moves by about lr") {
  Parameters<float> p{{"w", Tensor<float>({1}, {0.0f})}};
  AdamState st;
  st.options.lr = 0.01;
  adam_step(p, {{"w", {1.0f}}}, st);
  // m_hat = v_hat = 1 after bias correction, so the step is lr / (1 + eps).
  CHECK(p.at("w")[0] == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("adam keeps identical parameters identical") {
  Parameters<float> p{{"a", Tensor<float>({2}, {0.3f, -0.1f})}, {"b", Tensor<float>({2}, {0.3f, -0.1f})}};
  AdamState st;
  for (int k = 0; k < 25; ++k) {
    const float g = std::sin(static_cast<float>(k));
    adam_step(p, {{"a", {g, -g}}, {"b", {g, -g}}}, st);
  }
  CHECK(p.at("a").to_vector() == p.at("b").to_vector());
  CHECK(st.step == 25);
}

TEST_CASE("adam rejects a missing gradient") {
  Parameters<float> p{{"a", Tensor<float>({1}, {0.0f})}, {"b", Tensor<float>({1}, {0.0f})}};
  AdamState st;
  CHECK_THROWS(adam_step(p, {{"a", {1.0f}}}, st));
}
