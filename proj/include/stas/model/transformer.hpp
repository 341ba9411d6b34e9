#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stas/ad/tensor.hpp"
#include "stas/model/config.hpp"
#include "stas/model/parameters.hpp"
#include "stas/random.hpp"

namespace stas::model {

// Dropout switch passed through a forward pass. Inactive without an rng.
struct Dropout {
  double p = 0.0;
  Rng* rng = nullptr;

  ad::Tensor operator()(const ad::Tensor& x) const;
};

// Additive mask with -1e9 above the diagonal.
ad::Tensor causal_mask(std::size_t n);

// Registers attention, feed-forward and the two layer norms under `prefix`.
void add_block_parameters(Parameters& params, const std::string& prefix, const ModelConfig& config,
                          Rng& rng);

struct BlockInputs {
  const ad::Tensor* mask = nullptr;       // added to attention scores
  const ad::Tensor* condition = nullptr;  // row added after the attention add&norm
  // Receives the head-averaged attention probabilities (row-major n x n).
  std::vector<double>* attention = nullptr;
};

// Multi-head scaled dot-product self-attention over the rows of x.
ad::Tensor self_attention(const ad::Tensor& x, const Parameters& params, const std::string& prefix,
                          std::size_t heads, const ad::Tensor* mask,
                          std::vector<double>* attention);

// Post-norm block: x + attn -> norm -> (+ condition) -> x + ffn -> norm.
ad::Tensor transformer_block(const ad::Tensor& x, const Parameters& params,
                             const std::string& prefix, const ModelConfig& config,
                             const BlockInputs& inputs, const Dropout& dropout);

}  // namespace stas::model
