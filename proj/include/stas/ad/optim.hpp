#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stas/ad/tensor.hpp"

namespace stas::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment estimates for one parameter tensor.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update of `param` in place. `step` is 1-based.
void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& state,
                 double lr, const AdamConfig& config, std::int64_t step);

struct ParamGroup {
  std::string name;
  std::vector<Tensor> params;
  double lr = 1e-3;
};

class Adam {
 public:
  Adam(std::vector<ParamGroup> groups, AdamConfig config = {});

  // Updates every parameter that carries a gradient; others are left alone.
  void step();
  void zero_grad();

  // Scales all group learning rates by `factor` relative to their base value.
  void set_lr_scale(double factor) { lr_scale_ = factor; }

  std::int64_t steps() const { return step_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }

 private:
  std::vector<ParamGroup> groups_;
  std::vector<std::vector<AdamMoments>> moments_;
  AdamConfig config_;
  std::int64_t step_ = 0;
  double lr_scale_ = 1.0;
};

// Global L2 norm over all gradients.
double grad_norm(std::span<const Tensor> params);

// Rescales gradients so their global norm is at most `max_norm`; returns the
// norm before clipping. A non-positive `max_norm` disables clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace stas::ad
