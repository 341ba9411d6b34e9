#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "stas/ad/tensor.hpp"
#include "stas/random.hpp"

namespace stas::model {

// Named trainable tensors, iterated in name order.
class Parameters {
 public:
  // Adds a tensor with entries drawn from Uniform(-range, range).
  const ad::Tensor& add_uniform(const std::string& name, ad::Shape shape, double range, Rng& rng);
  const ad::Tensor& add_constant(const std::string& name, ad::Shape shape, double value);
  const ad::Tensor& add(const std::string& name, ad::Tensor tensor);

  const ad::Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::map<std::string, ad::Tensor, std::less<>>& all() const { return tensors_; }
  std::vector<ad::Tensor> tensors() const;
  // Tensors whose name starts with `prefix`.
  std::vector<ad::Tensor> with_prefix(std::string_view prefix) const;
  std::size_t total_size() const;

  void zero_grad();
  // Independent copy of every value (no gradients).
  Parameters clone() const;

 private:
  std::map<std::string, ad::Tensor, std::less<>> tensors_;
};

}  // namespace stas::model
