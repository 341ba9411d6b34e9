#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "stas/ad/tensor.hpp"
#include "stas/corpus/encoded.hpp"
#include "stas/model/config.hpp"
#include "stas/model/parameters.hpp"
#include "stas/model/transformer.hpp"

namespace stas::model {

// Sentence-to-sentence attention averaged over heads, then over layers.
struct AttentionMatrix {
  std::size_t n = 0;
  std::vector<double> weights;  // row-major n x n

  double at(std::size_t i, std::size_t j) const { return weights[i * n + j]; }
};

struct EncoderOutput {
  ad::Tensor H;  // [|D| x d] sentence representations
  ad::Tensor V;  // [|D| x d] token-level outputs at each BOS
  AttentionMatrix A;
};

struct MspOutput {
  ad::Tensor log_probs;         // [L x vocab], row j predicts target[j + 1]
  ad::Tensor target_log_probs;  // [L]
};

// Parameter name prefixes. The encoder group trains with the encoder
// learning rate, the rest with the decoder rate.
inline constexpr std::string_view kEncoderPrefix = "enc.";
inline constexpr std::string_view kMspPrefix = "msp.";
inline constexpr std::string_view kPointerPrefix = "ptr.";

class StasModel {
 public:
  // Fresh parameters, Uniform(-init_range, init_range) for weights.
  StasModel(ModelConfig config, std::uint64_t seed);
  // Adopts existing parameters; names and shapes must match the config.
  StasModel(ModelConfig config, Parameters params);

  const ModelConfig& config() const { return config_; }
  const Parameters& params() const { return params_; }
  Parameters& params() { return params_; }

  EncoderOutput encode(const corpus::EncodedDocument& doc, const Dropout& dropout = {}) const;

  // Teacher-forced masked-sentence decoder for a wrapped sentence
  // (BOS ... EOS) conditioned on one sentence representation.
  MspOutput msp_decode(const corpus::TokenList& target, const ad::Tensor& condition,
                       const Dropout& dropout = {}) const;

  // Teacher-forced pointer decoder. `target[i]` is the shuffled position of
  // original sentence i. Row t of the result holds log p(P_t = . | P_<t).
  ad::Tensor pointer_log_probs(const ad::Tensor& h_shuffled, std::span<const std::size_t> target,
                               const Dropout& dropout = {}) const;

  // Distribution over shuffled positions for the step after `prefix`.
  std::vector<double> pointer_step(const ad::Tensor& h_shuffled,
                                   std::span<const std::size_t> prefix) const;

  static bool is_encoder_parameter(std::string_view name);
  static bool is_pointer_parameter(std::string_view name);

 private:
  ad::Tensor pointer_outputs(const ad::Tensor& h_shuffled, std::span<const std::size_t> prefix,
                             std::size_t steps, const Dropout& dropout) const;
  const ad::Tensor& decoder_embeddings() const;

  ModelConfig config_;
  Parameters params_;
};

}  // namespace stas::model
