#include "stas/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stas/ad/ops.hpp"
#include "stas/random.hpp"

namespace stas::ad {

namespace {

std::vector<std::size_t> probe_indices(std::size_t n, const GradCheckOptions& options, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (options.max_entries_per_tensor == 0 || n <= options.max_entries_per_tensor) return idx;
  // Partial Fisher-Yates for a seeded sample without replacement.
  for (std::size_t i = 0; i < options.max_entries_per_tensor; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(options.max_entries_per_tensor);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Contracts an op output with fixed random weights so that every output entry
// influences the scalar. Built as its own node so that a fault injected into
// any op under test is attributed to that op alone.
Tensor weighted(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed ^ 0x5EEDULL);
  std::vector<double> w(out.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  double total = 0.0;
  const auto v = out.values();
  for (std::size_t i = 0; i < w.size(); ++i) total += v[i] * w[i];
  return Tensor::make_node({1}, {total}, "gradcheck_contract", {out.node()},
                           [w = std::move(w)](TensorImpl& self) {
                             auto& g = self.parents[0]->grad_buffer();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
                           });
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> inputs, const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = name;

  for (auto& t : inputs) t.zero_grad();
  backward(loss_fn());

  Rng rng(options.seed);
  for (auto& input : inputs) {
    const std::size_t n = input.numel();
    std::vector<double> analytic(n, 0.0);
    if (input.has_grad()) std::copy(input.grad().begin(), input.grad().end(), analytic.begin());
    const auto probes = probe_indices(n, options, rng);

    double max_abs_diff = 0.0;
    double scale = 1e-6;
    auto values = input.mutable_values();
    for (auto i : probes) {
      const double saved = values[i];
      double plus = 0.0;
      double minus = 0.0;
      {
        NoGradGuard guard;
        values[i] = saved + options.step;
        plus = loss_fn().item();
        values[i] = saved - options.step;
        minus = loss_fn().item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      max_abs_diff = std::max(max_abs_diff, std::abs(analytic[i] - numeric));
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
    }
    result.entries_checked += probes.size();
    result.max_rel_error = std::max(result.max_rel_error, max_abs_diff / scale);
  }
  for (auto& t : inputs) t.zero_grad();
  result.passed = std::isfinite(result.max_rel_error) && result.max_rel_error < options.tolerance;
  return result;
}

std::vector<GradCheckResult> check_all_ops(std::uint64_t seed, const GradCheckOptions& options) {
  Rng rng(seed);
  std::vector<GradCheckResult> results;
  auto run = [&](const std::string& name, const std::function<Tensor()>& fn,
                 std::vector<Tensor> inputs) {
    results.push_back(check_gradients(name, fn, std::move(inputs), options));
  };

  {
    auto a = random_tensor({3, 4}, rng, true);
    auto b = random_tensor({3, 4}, rng, true);
    run("add", [=] { return weighted(add(a, b), seed); }, {a, b});
    run("sub", [=] { return weighted(sub(a, b), seed); }, {a, b});
    run("mul", [=] { return weighted(mul(a, b), seed); }, {a, b});
    run("scale", [=] { return weighted(scale(a, -1.7), seed); }, {a});
  }
  {
    auto x = random_tensor({4, 3}, rng, true);
    auto row = random_tensor({3}, rng, true);
    run("add_row", [=] { return weighted(add_row(x, row), seed); }, {x, row});
  }
  {
    auto a = random_tensor({3, 5}, rng, true);
    auto b = random_tensor({5, 2}, rng, true);
    run("matmul", [=] { return weighted(matmul(a, b), seed); }, {a, b});
    run("transpose", [=] { return weighted(transpose(a), seed); }, {a});
  }
  {
    auto x = random_tensor({3, 4}, rng, true, -2.0, 2.0);
    run("tanh", [=] { return weighted(tanh(x), seed); }, {x});
    run("gelu", [=] { return weighted(gelu(x), seed); }, {x});
    run("softmax", [=] { return weighted(softmax(x, -1), seed); }, {x});
    run("log_softmax", [=] { return weighted(log_softmax(x, -1), seed); }, {x});
    auto cube = random_tensor({2, 3, 4}, rng, true, -2.0, 2.0);
    run("softmax_axis1", [=] { return weighted(softmax(cube, 1), seed); }, {cube});
  }
  {
    auto x = random_tensor({3, 6}, rng, true, -2.0, 2.0);
    auto gain = random_tensor({6}, rng, true, 0.5, 1.5);
    auto bias = random_tensor({6}, rng, true);
    run("layer_norm", [=] { return weighted(layer_norm(x, gain, bias, 1e-5), seed); },
        {x, gain, bias});
  }
  {
    auto logits = random_tensor({4, 5}, rng, true, -3.0, 3.0);
    const std::vector<std::size_t> targets{0, 4, 2, 2};
    run("cross_entropy", [=] { return cross_entropy(logits, targets); }, {logits});
    run("cross_entropy_sum", [=] { return cross_entropy(logits, targets, Reduction::Sum); },
        {logits});
    run("pick", [=] { return weighted(pick(logits, targets), seed); }, {logits});
    run("sum", [=] { return sum(logits); }, {logits});
    run("mean", [=] { return mean(logits); }, {logits});
  }
  {
    auto table = random_tensor({5, 3}, rng, true);
    const std::vector<std::size_t> ids{4, 1, 4, 0};
    run("gather_rows", [=] { return weighted(gather_rows(table, ids), seed); }, {table});
  }
  {
    auto a = random_tensor({2, 3}, rng, true);
    auto b = random_tensor({1, 3}, rng, true);
    auto c = random_tensor({2, 4}, rng, true);
    run("concat_rows", [=] {
      const Tensor parts[] = {a, b, a};
      return weighted(concat_rows(parts), seed);
    }, {a, b});
    run("concat_cols", [=] {
      const Tensor parts[] = {a, c};
      return weighted(concat_cols(parts), seed);
    }, {a, c});
    run("slice_rows", [=] { return weighted(slice_rows(c, 1, 1), seed); }, {c});
    run("slice_cols", [=] { return weighted(slice_cols(c, 1, 2), seed); }, {c});
  }
  {
    auto x = random_tensor({3, 4}, rng, true);
    run("dropout", [=] {
      Rng mask_rng(seed + 7);
      return weighted(dropout(x, 0.3, mask_rng), seed);
    }, {x});
  }
  {
    auto q = random_tensor({3, 4}, rng, true);
    auto k = random_tensor({5, 4}, rng, true);
    auto v = random_tensor({4}, rng, true);
    run("additive_scores", [=] { return weighted(additive_scores(q, k, v), seed); }, {q, k, v});
  }
  return results;
}

}  // namespace stas::ad
