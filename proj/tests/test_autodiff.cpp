// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "nasc/autodiff.hpp"
#include "nasc/errors.hpp"

using namespace nasc;
using namespace nasc::ad;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("matmul values and gradients") {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(constant(eye), constant(m))->value() == m);
  CHECK(matmul(constant(Tensor::matrix({{1, 0}})), constant(Tensor::matrix({{0}, {1}})))->value()[0] == 0.0);

  std::mt19937_64 rng(1);
  const Tensor b = random_tensor({4, 2}, rng);
  const Tensor a = random_tensor({3, 4}, rng);
  CHECK(grad_check([&](const NodeRef& x) { return sum(mul(matmul(x, constant(b)), matmul(x, constant(b)))); }, a) < 1e-6);
  CHECK(grad_check([&](const NodeRef& y) { return sum(mul(matmul(constant(a), y), matmul(constant(a), y))); }, b) < 1e-6);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(constant(Tensor({2, 3})), constant(Tensor({2, 3})));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    CHECK(what.find("2x3") != std::string::npos);
  }
}

TEST_CASE("elementwise forward values") {
  const auto r = relu(constant(Tensor({3}, {-1, 0, 2})))->value();
  CHECK(r == Tensor({3}, {0, 0, 2}));
  CHECK(exp(constant(Tensor({1}, {0})))->value()[0] == 1.0);
  CHECK_THROWS_AS(log(constant(Tensor({2}, {1.0, 0.0}))), DomainError);
  CHECK_THROWS_AS(log(constant(Tensor({1}, {-1.0}))), DomainError);
  CHECK_THROWS_AS(add(constant(Tensor({2, 2})), constant(Tensor({3}))), DimensionError);
  CHECK(add(constant(Tensor({2}, {1, 2})), constant(Tensor::scalar(1)))->value() == Tensor({2}, {2, 3}));
}

TEST_CASE("add gradient is one everywhere") {
  auto a = parameter(Tensor({2, 2}, {1, 2, 3, 4}));
  auto b = parameter(Tensor({2, 2}, {5, 6, 7, 8}));
  backward(sum(add(a, b)));
  for (double g : a->grad().data()) CHECK(g == 1.0);
  for (double g : b->grad().data()) CHECK(g == 1.0);
}

TEST_CASE("relu subgradient at zero is zero") {
  auto x = parameter(Tensor({3}, {-1, 0, 2}));
  backward(sum(relu(x)));
  CHECK(x->grad() == Tensor({3}, {0, 0, 1}));
}

TEST_CASE("softmax rows") {
  const Tensor z({1, 7});
  const Tensor uniform = softmax_rows(constant(z))->value();
  for (double v : uniform.data()) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  const Tensor p = softmax_rows(constant(Tensor::matrix({{std::log(2.0), 0.0}})))->value();
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Tensor s = softmax_rows(random_tensor({3, 5}, rng, -300.0, 300.0));
    for (std::size_t r = 0; r < 3; ++r) {
      double row = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        CHECK(s.at(r, c) >= 0.0);
        row += s.at(r, c);
      }
      CHECK(std::abs(row - 1.0) <= 1e-12);
    }
  }
  const Tensor w = random_tensor({2, 3}, rng);
  CHECK(grad_check([&](const NodeRef& a) { return sum(mul(softmax_rows(a), constant(w))); }, random_tensor({2, 3}, rng)) < 1e-6);
}

TEST_CASE("cross entropy") {
  const std::vector<int> labels{0, 1, 2, 3};
  CHECK(cross_entropy(constant(Tensor({4, 4})), labels)->value()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  const std::vector<int> one{0};
  CHECK(cross_entropy(constant(Tensor::matrix({{50.0, 0.0}})), one)->value()[0] < 1e-20);
  CHECK_THROWS_AS(cross_entropy(constant(Tensor({1, 2})), std::vector<int>{2}), IndexError);

  std::mt19937_64 rng(3);
  const Tensor logits = random_tensor({5, 3}, rng, -2.0, 2.0);
  const std::vector<int> y{0, 2, 1, 1, 0};
  double brute = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    double z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits.at(i, c));
    brute += -(logits.at(i, static_cast<std::size_t>(y[i])) - std::log(z));
  }
  CHECK(cross_entropy(constant(logits), y)->value()[0] == doctest::Approx(brute / 5.0).epsilon(1e-13));

  auto x = parameter(logits);
  backward(cross_entropy(x, y));
  const Tensor p = softmax_rows(logits);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double expect = (p.at(i, c) - (static_cast<int>(c) == y[i] ? 1.0 : 0.0)) / 5.0;
      CHECK(x->grad().at(i, c) == doctest::Approx(expect).epsilon(1e-13));
    }
  }
}

TEST_CASE("backward basics") {
  auto x = parameter(Tensor::scalar(3.0));
  backward(mul(x, x));
  CHECK(x->grad()[0] == 6.0);

  auto y = parameter(Tensor({2}, {-1, 2}));
  backward(sum(relu(y)));
  CHECK(y->grad() == Tensor({2}, {0, 1}));

  CHECK_THROWS_AS(backward(relu(y)), ContractError);
}

TEST_CASE("repeated backward accumulates on leaves") {
  auto x = parameter(Tensor::scalar(2.0));
  auto f = mul(x, x);
  backward(f);
  backward(f);
  CHECK(x->grad()[0] == 8.0);
  x->zero_grad();
  CHECK(x->grad()[0] == 0.0);
}

TEST_CASE("shared subexpression gradient matches finite differences") {
  std::mt19937_64 rng(4);
  const Tensor p = random_tensor({2, 3}, rng);
  auto f = [](const NodeRef& a) {
    NodeRef s = softmax_rows(a);
    NodeRef t = mul(s, exp(a));
    return sum(add(t, mul(s, s)));
  };
  CHECK(grad_check(f, p) < 1e-5);
}

TEST_CASE("two consumers sum their gradients") {
  std::mt19937_64 rng(5);
  const Tensor p = random_tensor({3}, rng);
  auto both = parameter(p), first = parameter(p), second = parameter(p);
  backward(add(sum(exp(both)), sum(mul(both, both))));
  backward(sum(exp(first)));
  backward(sum(mul(second, second)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(both->grad()[i] == doctest::Approx(first->grad()[i] + second->grad()[i]));
}

TEST_CASE("grad_check sanity oracles") {
  std::mt19937_64 rng(6);
  const Tensor q = random_tensor({3, 3}, rng);
  CHECK(grad_check([&](const NodeRef& x) { return sum(mul(matmul(x, constant(q)), x)); }, random_tensor({3, 3}, rng)) < 1e-8);
  const std::vector<int> y{1, 0};
  CHECK(grad_check([&](const NodeRef& x) { return cross_entropy(x, y); }, random_tensor({2, 4}, rng)) < 1e-5);
  CHECK(grad_check([](const NodeRef& x) { return sum(relu(x)); }, Tensor({3}, {-0.5, 0.3, 0.9})) < 1e-6);
}

TEST_CASE("straight-through passes the gradient to the soft input") {
  auto soft = parameter(Tensor::matrix({{0.2, 0.8}}));
  auto ste = straight_through(Tensor::matrix({{0.0, 1.0}}), soft);
  CHECK(ste->value() == Tensor::matrix({{0.0, 1.0}}));
  backward(sum(mul(ste, constant(Tensor::matrix({{3.0, 5.0}})))));
  CHECK(soft->grad() == Tensor::matrix({{3.0, 5.0}}));
}

TEST_CASE("non-finite values are rejected") {
  CHECK_THROWS_AS(exp(constant(Tensor({1}, {1000.0}))), DomainError);
}

TEST_CASE("evaluation is bitwise repeatable") {
  std::mt19937_64 rng(7);
  const Tensor p = random_tensor({4, 3}, rng);
  const std::vector<int> y{0, 1, 2, 0};
  auto run = [&] {
    auto x = parameter(p);
    auto loss = cross_entropy(matmul(x, constant(Tensor::matrix({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}}))), y);
    backward(loss);
    return std::make_pair(loss->value(), x->grad());
  };
  CHECK(run() == run());
}
