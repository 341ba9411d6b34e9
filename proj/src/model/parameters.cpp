#include "stas/model/parameters.hpp"

#include <fmt/format.h>

#include "stas/errors.hpp"

namespace stas::model {

const ad::Tensor& Parameters::add_uniform(const std::string& name, ad::Shape shape, double range,
                                          Rng& rng) {
  std::vector<double> values(ad::numel(shape));
  for (auto& v : values) v = rng.uniform(-range, range);
  return add(name, ad::Tensor::parameter(std::move(shape), std::move(values)));
}

const ad::Tensor& Parameters::add_constant(const std::string& name, ad::Shape shape, double value) {
  const auto n = ad::numel(shape);
  return add(name, ad::Tensor::parameter(std::move(shape), std::vector<double>(n, value)));
}

const ad::Tensor& Parameters::add(const std::string& name, ad::Tensor tensor) {
  auto [it, inserted] = tensors_.emplace(name, std::move(tensor));
  if (!inserted) throw ContractError(fmt::format("parameter {} defined twice", name));
  return it->second;
}

const ad::Tensor& Parameters::get(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError(fmt::format("missing parameter {}", name));
  return it->second;
}

bool Parameters::contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }

std::vector<ad::Tensor> Parameters::tensors() const {
  std::vector<ad::Tensor> out;
  out.reserve(tensors_.size());
  for (const auto& [name, t] : tensors_) out.push_back(t);
  return out;
}

std::vector<ad::Tensor> Parameters::with_prefix(std::string_view prefix) const {
  std::vector<ad::Tensor> out;
  for (const auto& [name, t] : tensors_)
    if (std::string_view(name).substr(0, prefix.size()) == prefix) out.push_back(t);
  return out;
}

std::size_t Parameters::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.numel();
  return n;
}

void Parameters::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

Parameters Parameters::clone() const {
  Parameters out;
  for (const auto& [name, t] : tensors_) {
    out.add(name, ad::Tensor::parameter(t.shape(), std::vector<double>(t.values().begin(), t.values().end())));
  }
  return out;
}

}  // namespace stas::model
