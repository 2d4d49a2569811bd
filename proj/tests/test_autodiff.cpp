// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>
#include <vector>

#include "basislens/autodiff.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace basislens;
using namespace basislens::ad;
using basislens::testing::contract;
using basislens::testing::op_cases;
using basislens::testing::random_tensor;

namespace {

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-4;
constexpr int kSeeds = 10;

}  // namespace

TEST_CASE("every op matches central differences over ten seeds") {
  for (const auto& c : op_cases()) {
    for (int seed = 0; seed < kSeeds; ++seed) {
      Rng rng(1000 + static_cast<std::uint64_t>(seed));
      const auto inputs = c.inputs(rng);
      const auto op = c.op;
      // The builder runs once per perturbation, so it replays the same weights.
      GraphBuilder builder = [&](std::span<const Var> xs) {
        Rng local(77 + static_cast<std::uint64_t>(seed));
        return contract(op(xs), local);
      };
      const auto res = grad_check(builder, inputs, kEps, kTol);
      INFO(c.name << " seed " << seed);
      for (double e : res.max_rel_error) CHECK(e < kTol);
      CHECK(res.passed);
    }
  }
}

TEST_CASE("sigmoid chain and conv pipeline pass grad_check") {
  Rng rng(5);
  const std::vector<Tensor> x{random_tensor({4}, rng, -2.0, 2.0)};
  auto chain = grad_check([](auto v) { return ad::sum(sigmoid(scale(sigmoid(v[0]), 3.0))); }, x, kEps, kTol);
  CHECK(chain.max_rel_error[0] < kTol);

  const std::vector<Tensor> conv_in{random_tensor({2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng),
                                    random_tensor({3}, rng, 0.2, 0.4)};
  auto pipe = grad_check([](auto v) { return mean(relu(conv2d(v[0], v[1], v[2]))); }, conv_in, kEps, kTol);
  for (double e : pipe.max_rel_error) CHECK(e < kTol);
}

TEST_CASE("constant function has zero analytic and numeric gradient") {
  const std::vector<Tensor> x{Tensor({3}, std::vector<double>{1, 2, 3})};
  auto res = grad_check([](auto v) { return add_scalar(scale(ad::sum(v[0]), 0.0), 4.0); }, x, kEps, kTol);
  CHECK(res.passed);
  CHECK(res.max_rel_error[0] == 0.0);
}

TEST_CASE("forward examples") {
  CHECK(sigmoid(Var::constant(Tensor::scalar(0.0))).item() == 0.5);

  Rng rng(2);
  const Tensor a = random_tensor({2, 2}, rng);
  const Tensor eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  CHECK(matmul(Var::constant(eye), Var::constant(a)).value() == a);

  const Tensor img = random_tensor({1, 5, 7}, rng);
  const Tensor k({1, 1, 1, 1}, 1.0);
  const Tensor b({1}, 0.0);
  auto out = conv2d(Var::constant(img), Var::constant(k), Var::constant(b));
  CHECK(out.value() == img);
}

TEST_CASE("backward examples") {
  auto x = Var::leaf(Tensor::scalar(0.0));
  backward(sigmoid(x));
  CHECK(x.grad()[0] == 0.25);

  auto y = Var::leaf(Tensor({2}, std::vector<double>{1, 2}));
  backward(ad::sum(mul(y, y)));
  CHECK(y.grad()[0] == 2.0);
  CHECK(y.grad()[1] == 4.0);

  auto z = Var::leaf(Tensor({2}, std::vector<double>{-1, 3}));
  backward(mean(relu(z)));
  CHECK(z.grad()[0] == 0.0);
  CHECK(z.grad()[1] == 0.5);
}

TEST_CASE("fan-out accumulates gradients") {
  auto x = Var::leaf(Tensor({3}, std::vector<double>{1, -2, 0.5}));
  backward(ad::sum(add(scale(x, 3.0), x)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 4.0);
}

TEST_CASE("errors name the op and shapes") {
  auto a = Var::constant(Tensor({2, 3}));
  auto b = Var::constant(Tensor({3, 2}));
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(ad::log(Var::constant(Tensor({2}, std::vector<double>{1.0, 0.0}))), DomainError);
  CHECK_THROWS_AS(backward(Var::leaf(Tensor({2}))), ShapeError);
}

TEST_CASE("forward is bit-identical across runs") {
  auto run = [] {
    Rng rng(11);
    auto x = Var::constant(random_tensor({2, 8, 8}, rng));
    auto w = Var::constant(random_tensor({4, 2, 3, 3}, rng));
    auto bias = Var::constant(random_tensor({4}, rng));
    return sigmoid(conv2d(relu(x), w, bias, {2, Padding::Same})).value();
  };
  CHECK(run() == run());
}

TEST_CASE("backward is linear in the root") {
  Rng rng(21);
  const Tensor x0 = random_tensor({3, 4}, rng);
  const double a = 1.7, b = -0.6;
  auto f = [](const Var& x) { return ad::sum(mul(sigmoid(x), x)); };
  auto g = [](const Var& x) { return stddev(matmul(x, transpose(x))); };

  auto grad_of = [&](auto build) {
    auto x = Var::leaf(x0);
    backward(build(x));
    return x.grad();
  };
  const Tensor gf = grad_of(f);
  const Tensor gg = grad_of(g);
  const Tensor gc = grad_of([&](const Var& x) { return add(scale(f(x), a), scale(g(x), b)); });
  for (std::size_t i = 0; i < x0.numel(); ++i) CHECK(std::abs(gc[i] - (a * gf[i] + b * gg[i])) <= 1e-12);
}
