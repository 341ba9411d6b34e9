#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stas/ad/tensor.hpp"

namespace stas::ad {

struct GradCheckOptions {
  double step = 1e-5;       // central-difference half width
  double tolerance = 1e-4;  // max relative error
  // Entries probed per input tensor; 0 probes every entry. Probed entries are
  // chosen by a seeded generator.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

// Compares the backward() gradient of `loss_fn` with respect to each tensor in
// `inputs` against central finite differences. The relative error of one
// tensor is max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-6);
// the reported error is the maximum over tensors.
GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> inputs, const GradCheckOptions& options = {});

// Finite-difference checks for every differentiable op in ops.hpp, each on
// random inputs contracted with a random weight tensor.
std::vector<GradCheckResult> check_all_ops(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace stas::ad
