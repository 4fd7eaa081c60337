// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "nasc/errors.hpp"
#include "nasc/search_space.hpp"
#include "nasc/supernet.hpp"

using namespace nasc;
using ad::Tensor;

namespace {

ArchSpace free_space(std::size_t L, std::vector<OperatorSpec> menu, std::size_t width = 8) {
  ArchSpace s;
  s.num_layers = L;
  s.menu = std::move(menu);
  s.width = width;
  s.first_layer_fixed = false;
  return s;
}

Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("operator menu and parameter counts") {
  const auto skip = OperatorSpec::skip();
  const auto e2 = OperatorSpec::expand(2);
  CHECK(skip.parameter_count(32) == 0);
  CHECK(e2.parameter_count(32) == 32 * 64 + 64 + 64 * 32 + 32);
  CHECK(OperatorSpec::from_label("expand_e6_relu6").activation == Activation::kRelu6);
  CHECK_THROWS_AS(OperatorSpec::from_label("conv3x3"), ConfigError);
  CHECK_THROWS_AS(OperatorSpec::expand(0), ConfigError);
}

TEST_CASE("space size") {
  const ArchSpace full = ArchSpace::full_preset();
  CHECK(full.searchable_layers() == 21);
  CHECK(full.space_size() == doctest::Approx(5.585e17).epsilon(1e-3));
  CHECK(ArchSpace::desk_default().space_size() == 65536.0);
}

TEST_CASE("encode and decode") {
  const ArchSpace s = free_space(3, {OperatorSpec::skip(), OperatorSpec::expand(1)});
  const Tensor enc = encode(Architecture{{0, 1, 0}}, s);
  CHECK(enc == Tensor::matrix({{1, 0}, {0, 1}, {1, 0}}));
  CHECK_THROWS_AS(encode(Architecture{{0, 2, 0}}, s), EncodingError);
  CHECK_THROWS_AS(decode(Tensor::matrix({{1, 1}, {0, 1}, {1, 0}}), s), EncodingError);

  const ArchSpace desk = ArchSpace::desk_default();
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Architecture a = random_architecture(desk, rng);
    CHECK(a.ops[0] == desk.fixed_first_op);
    const Tensor e = encode(a, desk);
    double ones = 0.0;
    for (double v : e.data()) ones += v;
    CHECK(ones == static_cast<double>(desk.num_layers));
    CHECK(decode(e, desk).ops == a.ops);
  }
}

TEST_CASE("layer probabilities") {
  const Tensor p = layer_probs(Tensor({2, 7}));
  for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / 7.0));
  const Tensor q = layer_probs(Tensor::matrix({{std::log(3.0), 0.0, 0.0}}));
  CHECK(q[0] == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(0.2).epsilon(1e-14));
  std::mt19937_64 rng(2);
  const Tensor a = random_tensor({4, 5}, rng);
  CHECK(layer_probs(a) == ad::softmax_rows(ad::constant(a))->value());
}

TEST_CASE("path probability") {
  const Tensor uniform({2, 2});
  for (std::size_t a = 0; a < 4; ++a) CHECK(path_prob(Architecture{{a / 2, a % 2}}, uniform) == doctest::Approx(0.25));

  std::mt19937_64 rng(3);
  const Tensor alpha = random_tensor({3, 3}, rng, -2.0, 2.0);
  double total = 0.0;
  for (std::size_t a = 0; a < 27; ++a) total += path_prob(Architecture{{a / 9, (a / 3) % 3, a % 3}}, alpha);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));

  const Tensor one = Tensor::matrix({{0.3, -0.2, 1.0}});
  CHECK(path_prob(Architecture{{2}}, one) == layer_probs(one)[2]);
}

TEST_CASE("Gumbel sampling") {
  std::mt19937_64 rng(4);
  CHECK_THROWS_AS(gumbel_sample(Tensor({2, 2}), 0.0, rng), ParameterError);
  CHECK_THROWS_AS(gumbel_sample(Tensor({2, 2}), -1.0, rng), ParameterError);

  for (int i = 0; i < 500; ++i) {
    const Tensor alpha = random_tensor({3, 4}, rng, -5.0, 5.0);
    const double tau = std::uniform_real_distribution<double>(0.01, 5.0)(rng);
    const GumbelSample s = gumbel_sample(alpha, tau, rng);
    for (std::size_t l = 0; l < 3; ++l) {
      double row = 0.0, hard = 0.0, best = -1.0;
      std::size_t arg = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        row += s.soft.at(l, k);
        hard += s.hard.at(l, k);
        CHECK((s.hard.at(l, k) == 0.0 || s.hard.at(l, k) == 1.0));
        if (s.soft.at(l, k) > best) {
          best = s.soft.at(l, k);
          arg = k;
        }
      }
      CHECK(std::abs(row - 1.0) <= 1e-12);
      CHECK(hard == 1.0);
      CHECK(s.hard.at(l, arg) == 1.0);
    }
  }
}

TEST_CASE("uniform logits select every operator equally often") {
  std::mt19937_64 rng(5);
  constexpr std::size_t K = 4, kDraws = 100000;
  std::vector<std::size_t> counts(K, 0);
  for (std::size_t i = 0; i < kDraws; ++i) {
    const GumbelSample s = gumbel_sample(Tensor({1, K}), 1.0, rng);
    for (std::size_t k = 0; k < K; ++k) counts[k] += s.hard[k] == 1.0 ? 1 : 0;
  }
  const double p = 1.0 / K, sigma = std::sqrt(p * (1 - p) / kDraws);
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) / kDraws - p) < 3.0 * sigma);
}

TEST_CASE("relaxed sample approaches its one-hot as temperature falls") {
  std::mt19937_64 rng(6);
  const Tensor alpha = random_tensor({4, 4}, rng);
  double previous = 2.0, first = 0.0;
  for (double tau : {1.0, 0.1, 0.01}) {
    std::mt19937_64 draw(7);
    double mean_gap = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const GumbelSample s = gumbel_sample(alpha, tau, draw);
      double gap = 0.0;
      for (std::size_t j = 0; j < s.soft.size(); ++j) gap = std::max(gap, std::abs(s.soft[j] - s.hard[j]));
      mean_gap += gap / 2000.0;
    }
    CHECK(mean_gap < previous);
    if (tau == 1.0) first = mean_gap;
    previous = mean_gap;
  }
  CHECK(previous < 0.1 * first);
}

TEST_CASE("finalize") {
  const ArchSpace s = free_space(3, {OperatorSpec::skip(), OperatorSpec::expand(1), OperatorSpec::expand(2)});
  const Architecture known{{2, 0, 1}};
  Tensor alpha = encode(known, s);
  for (auto& v : alpha.data()) v *= 10.0;
  CHECK(finalize(alpha, s).ops == known.ops);
  CHECK(finalize(Tensor({3, 3}), s).ops == std::vector<std::size_t>{0, 0, 0});

  std::mt19937_64 rng(8);
  const ArchSpace desk = ArchSpace::desk_default();
  for (int i = 0; i < 200; ++i) {
    Tensor a = random_tensor({desk.num_layers, desk.ops_per_layer()}, rng, -3.0, 3.0);
    const Architecture f = finalize(a, desk);
    CHECK(f.ops[0] == desk.fixed_first_op);
    CHECK(encode(f, desk) == encode(decode(encode(f, desk), desk), desk));
    Tensor shifted = a, scaled = a;
    for (std::size_t l = 0; l < a.rows(); ++l) {
      const double c = std::uniform_real_distribution<double>(-10.0, 10.0)(rng);
      for (std::size_t k = 0; k < a.cols(); ++k) {
        shifted.at(l, k) += c;
        scaled.at(l, k) *= 3.5;
      }
    }
    CHECK(finalize(shifted, desk).ops == f.ops);
    CHECK(finalize(scaled, desk).ops == f.ops);
  }
}

TEST_CASE("single-path forward") {
  const ArchSpace s = free_space(3, {OperatorSpec::skip(), OperatorSpec::expand(1), OperatorSpec::expand(2)});
  const Supernet net(s, 2, 3, 11);
  std::mt19937_64 rng(9);
  const auto x = ad::constant(random_tensor({5, 2}, rng));

  SUBCASE("all skip equals stem then head") {
    const Tensor out = supernet_forward(net, x, ad::constant(encode(Architecture{{0, 0, 0}}, s)))->value();
    const Tensor direct =
        ad::linear(ad::linear(x, net.stem().weight, net.stem().bias), net.head().weight, net.head().bias)->value();
    CHECK(out == direct);
  }
  SUBCASE("masked operators receive no gradient") {
    ForwardStats stats;
    auto loss = ad::cross_entropy(supernet_forward(net, x, ad::constant(encode(Architecture{{1, 0, 2}}, s)), &stats),
                                  std::vector<int>{0, 1, 2, 0, 1});
    ad::backward(loss);
    CHECK(stats.executed_ops == 3);
    for (std::size_t l = 0; l < 3; ++l) {
      for (std::size_t k = 0; k < 3; ++k) {
        const bool active = (l == 0 && k == 1) || (l == 2 && k == 2);
        for (const auto& p : net.operator_parameters(l, k)) {
          double mag = 0.0;
          for (double g : p->grad().data()) mag += std::abs(g);
          CHECK((active ? mag > 0.0 : mag == 0.0));
        }
      }
    }
  }
  SUBCASE("one different layer changes the logits") {
    const Tensor a = supernet_forward(net, x, ad::constant(encode(Architecture{{1, 2, 1}}, s)))->value();
    const Tensor b = supernet_forward(net, x, ad::constant(encode(Architecture{{1, 1, 1}}, s)))->value();
    CHECK_FALSE(a == b);
  }
  SUBCASE("malformed selections are rejected") {
    CHECK_THROWS_AS(supernet_forward(net, x, ad::constant(Tensor({2, 3}))), ConfigError);
    CHECK_THROWS_AS(supernet_forward(net, x, ad::constant(Tensor({3, 3}))), ConfigError);
    CHECK_THROWS_AS(supernet_forward(net, ad::constant(Tensor({5, 4})), ad::constant(encode(Architecture{{0, 0, 0}}, s))),
                    ConfigError);
  }
}

TEST_CASE("multi-path forward") {
  const ArchSpace s = free_space(3, {OperatorSpec::skip(), OperatorSpec::expand(1), OperatorSpec::expand(2)});
  const Supernet net(s, 2, 3, 12);
  std::mt19937_64 rng(10);
  const auto x = ad::constant(random_tensor({5, 2}, rng));

  const Architecture arch{{2, 0, 1}};
  Tensor saturated = encode(arch, s);
  for (auto& v : saturated.data()) v *= 50.0;
  const Tensor mixed = multipath_forward(net, x, ad::constant(saturated))->value();
  const Tensor single = supernet_forward(net, x, ad::constant(encode(arch, s)))->value();
  for (std::size_t i = 0; i < mixed.size(); ++i) CHECK(std::abs(mixed[i] - single[i]) < 1e-6);

  const ArchSpace skips = free_space(3, {OperatorSpec::skip(), OperatorSpec::skip()});
  const Supernet identity(skips, 2, 3, 13);
  const Tensor path = multipath_forward(identity, x, ad::constant(Tensor({3, 2})))->value();
  const Tensor direct = ad::linear(ad::linear(x, identity.stem().weight, identity.stem().bias), identity.head().weight,
                                   identity.head().bias)
                            ->value();
  for (std::size_t i = 0; i < path.size(); ++i) CHECK(path[i] == doctest::Approx(direct[i]).epsilon(1e-14));

  ForwardStats one, all;
  supernet_forward(net, x, ad::constant(encode(arch, s)), &one);
  multipath_forward(net, x, ad::constant(Tensor({3, 3})), &all);
  CHECK(all.retained_activations == s.ops_per_layer() * one.retained_activations);
}

TEST_CASE("architecture JSON round trip") {
  const ArchSpace desk = ArchSpace::desk_default();
  std::mt19937_64 rng(11);
  const Architecture a = random_architecture(desk, rng);
  const auto [back, space] = architecture_from_json(architecture_to_json(a, desk));
  CHECK(back.ops == a.ops);
  CHECK(space == desk);
}
