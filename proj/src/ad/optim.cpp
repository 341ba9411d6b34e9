#include "stas/ad/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "stas/errors.hpp"

namespace stas::ad {

void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& state,
                 double lr, const AdamConfig& config, std::int64_t step) {
  if (param.size() != grad.size()) {
    throw DimensionError(
        fmt::format("adam: parameter has {} values but gradient has {}", param.size(), grad.size()));
  }
  if (step < 1) throw ContractError("adam: step counter starts at 1");
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size()) {
    throw DimensionError("adam: moment buffers do not match parameter size");
  }
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

Adam::Adam(std::vector<ParamGroup> groups, AdamConfig config)
    : groups_(std::move(groups)), config_(config) {
  moments_.resize(groups_.size());
  for (std::size_t g = 0; g < groups_.size(); ++g) moments_[g].resize(groups_[g].params.size());
}

void Adam::step() {
  ++step_;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    auto& group = groups_[g];
    for (std::size_t p = 0; p < group.params.size(); ++p) {
      auto& param = group.params[p];
      if (!param.has_grad()) continue;
      adam_update(param.mutable_values(), param.grad(), moments_[g][p], group.lr * lr_scale_,
                  config_, step_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& group : groups_)
    for (auto& param : group.params) param.zero_grad();
}

double grad_norm(std::span<const Tensor> params) {
  double total = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) total += g * g;
  }
  return std::sqrt(total);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm <= 0.0 || norm <= max_norm) return norm;
  const double factor = max_norm / (norm + 1e-12);
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.mutable_grad()) g *= factor;
  }
  return norm;
}

}  // namespace stas::ad
