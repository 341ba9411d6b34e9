#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "doctest.h"
#include "stas/ad/gradcheck.hpp"
#include "stas/ad/ops.hpp"
#include "stas/ad/optim.hpp"
#include "stas/errors.hpp"

using namespace stas;
using namespace stas::ad;

namespace {

Tensor random_param(Shape shape, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::parameter(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("matmul: identity and hand product") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto out = matmul(eye, m);
  CHECK(out.shape() == Shape{2, 2});
  CHECK(std::vector<double>(out.values().begin(), out.values().end()) ==
        std::vector<double>{1, 2, 3, 4});

  auto dot = matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  CHECK(dot.item() == 11.0);
}

TEST_CASE("matmul: shape mismatch names both shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x3] x [2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul: gradient of sum(A*B) matches finite differences") {
  Rng rng(3);
  auto a = random_param({3, 4}, rng);
  auto b = random_param({4, 2}, rng);
  auto result = check_gradients("matmul_sum", [&] { return sum(matmul(a, b)); }, {a, b});
  CHECK(result.passed);
  CHECK(result.max_rel_error < 1e-6);
}

TEST_CASE("softmax examples") {
  auto half = softmax(Tensor::from({2}, {0, 0}));
  CHECK(half.at(0) == doctest::Approx(0.5));
  CHECK(half.at(1) == doctest::Approx(0.5));

  auto big = softmax(Tensor::from({2}, {1000, 1000}));
  CHECK(std::isfinite(big.at(0)));
  CHECK(big.at(0) == doctest::Approx(0.5));

  auto q = softmax(Tensor::from({2}, {0, std::log(3.0)}));
  CHECK(q.at(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(q.at(1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax output is a simplex point for random finite inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng.below(4);
    const std::size_t cols = 1 + rng.below(7);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(-50.0, 50.0);
    const int axis = static_cast<int>(rng.below(2));
    auto y = softmax(Tensor::from({rows, cols}, v), axis);
    for (double p : y.values()) CHECK(p >= 0.0);
    if (axis == 1) {
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += y.at(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
    } else {
      for (std::size_t c = 0; c < cols; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < rows; ++r) s += y.at(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("softmax rejects invalid axis") {
  CHECK_THROWS_AS(softmax(Tensor::zeros({2, 2}), 2), IndexError);
}

TEST_CASE("layer_norm examples") {
  auto ones = Tensor::full({3}, 1.0);
  auto zeros = Tensor::zeros({3});
  auto flat = layer_norm(Tensor::full({1, 3}, 7.0), ones, zeros, 1e-5);
  for (double v : flat.values()) CHECK(v == 0.0);

  auto two = layer_norm(Tensor::from({1, 2}, {1, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 0.0);
  CHECK(two.at(0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(two.at(1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("layer_norm gradient matches finite differences") {
  Rng rng(5);
  auto x = random_param({2, 5}, rng);
  auto g = random_param({5}, rng);
  auto b = random_param({5}, rng);
  auto w = Tensor::from({2, 5}, {0.3, -0.2, 0.9, 0.1, -0.7, 0.5, 0.4, -0.6, 0.8, -0.1});
  auto result = check_gradients("layer_norm", [&] { return sum(mul(layer_norm(x, g, b, 1e-5), w)); },
                                {x, g, b});
  CHECK(result.max_rel_error < 1e-6);
}

TEST_CASE("cross_entropy examples") {
  const std::vector<std::size_t> target{2};
  auto uniform = cross_entropy(Tensor::zeros({1, 4}), target);
  CHECK(uniform.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  auto peaked = cross_entropy(Tensor::from({1, 4}, {0, 0, 20, 0}), target);
  CHECK(peaked.item() == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(peaked.item() < 1e-7);

  const std::vector<std::size_t> bad{4};
  CHECK_THROWS_AS(cross_entropy(Tensor::zeros({1, 4}), bad), IndexError);
}

TEST_CASE("cross_entropy gradient matches finite differences") {
  Rng rng(8);
  auto logits = random_param({3, 6}, rng);
  const std::vector<std::size_t> targets{5, 0, 3};
  auto result = check_gradients("ce", [&] { return cross_entropy(logits, targets); }, {logits});
  CHECK(result.max_rel_error < 1e-6);
}

TEST_CASE("backward: analytic examples") {
  auto w = Tensor::parameter({2, 2}, {1, 2, 3, 4});
  backward(sum(w));
  for (double g : w.grad()) CHECK(g == 1.0);

  w.zero_grad();
  backward(sum(mul(w, w)));
  CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{2, 4, 6, 8});
}

TEST_CASE("backward: repeated calls accumulate until zero_grad") {
  auto w = Tensor::parameter({2}, {1.5, -2.0});
  auto loss = sum(mul(w, w));
  backward(loss);
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(6.0));
  CHECK(w.grad()[1] == doctest::Approx(-8.0));
  w.zero_grad();
  CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("backward: non-scalar loss is a contract violation") {
  auto w = Tensor::parameter({2}, {1, 2});
  CHECK_THROWS_AS(backward(scale(w, 2.0)), ContractError);
}

TEST_CASE("graph: topological order visits each node once") {
  auto a = Tensor::parameter({2}, {1, 2});
  auto b = add(a, a);
  auto c = mul(b, a);
  auto loss = sum(add(c, b));
  Graph graph(loss);
  std::set<const TensorImpl*> seen;
  for (const auto& node : graph.nodes()) CHECK(seen.insert(node.get()).second);
  CHECK(graph.nodes().back() == loss.node());
  // Every parent appears before its child.
  std::set<const TensorImpl*> emitted;
  for (const auto& node : graph.nodes()) {
    for (const auto& p : node->parents)
      if (p->requires_grad) CHECK(emitted.count(p.get()) == 1);
    emitted.insert(node.get());
  }
  graph.backward();
  // d/da sum(2a*a + 2a) = 4a + 2
  CHECK(a.grad()[0] == doctest::Approx(6.0));
  CHECK(a.grad()[1] == doctest::Approx(10.0));
}

TEST_CASE("no-grad mode records no history") {
  auto w = Tensor::parameter({2}, {1, 2});
  NoGradGuard guard;
  auto y = sum(mul(w, w));
  CHECK_FALSE(y.requires_grad());
  CHECK(y.is_leaf());
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto p = Tensor::parameter({3}, {0.5, -1.0, 2.0});
  p.mutable_grad();  // zero-filled gradient
  Adam opt({{"all", {p}, 0.1}});
  opt.step();
  CHECK(std::vector<double>(p.values().begin(), p.values().end()) ==
        std::vector<double>{0.5, -1.0, 2.0});
}

TEST_CASE("adam: single scalar step") {
  std::vector<double> p{1.0};
  const std::vector<double> g{1.0};
  AdamMoments state;
  adam_update(p, g, state, 0.1, {}, 1);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("adam: parameter groups take distinct step sizes") {
  auto enc = Tensor::parameter({1}, {1.0});
  auto dec = Tensor::parameter({1}, {1.0});
  enc.mutable_grad()[0] = 0.3;
  dec.mutable_grad()[0] = 0.3;
  Adam opt({{"encoder", {enc}, 4e-5}, {"decoder", {dec}, 4e-4}});
  opt.step();
  const double enc_step = 1.0 - enc.item();
  const double dec_step = 1.0 - dec.item();
  CHECK(enc_step == doctest::Approx(4e-5).epsilon(1e-6));
  CHECK(dec_step == doctest::Approx(4e-4).epsilon(1e-6));
}

TEST_CASE("adam: size mismatch between parameter and gradient") {
  std::vector<double> p{1.0, 2.0};
  const std::vector<double> g{1.0};
  AdamMoments state;
  CHECK_THROWS_AS(adam_update(p, g, state, 0.1, {}, 1), DimensionError);
}

TEST_CASE("clip_grad_norm rescales to the bound") {
  auto a = Tensor::parameter({2}, {0, 0});
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  std::vector<Tensor> params{a};
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(grad_norm(params) == doctest::Approx(1.0));
}

TEST_CASE("every op passes the finite-difference check") {
  for (const auto& r : check_all_ops(42)) {
    INFO(r.name << " max rel err " << r.max_rel_error);
    CHECK(r.passed);
  }
}

TEST_CASE("an injected backward fault is reported against its op") {
  debug::inject_backward_fault("matmul");
  const auto results = check_all_ops(42);
  debug::clear_backward_faults();
  for (const auto& r : results) {
    INFO(r.name);
    CHECK(r.passed == (r.name != "matmul"));
  }
}

TEST_CASE("determinism: same seed gives bit-identical values and gradients") {
  auto run = [] {
    Rng rng(99);
    auto a = random_param({4, 4}, rng);
    auto b = random_param({4, 3}, rng);
    auto loss = cross_entropy(gelu(matmul(a, b)), std::vector<std::size_t>{0, 1, 2, 0});
    backward(loss);
    std::vector<double> out{loss.item()};
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
    return out;
  };
  CHECK(run() == run());
}
