#pragma once

#include <cstddef>

namespace stas::model {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t token_layers = 2;
  std::size_t sentence_layers = 2;
  std::size_t decoder_layers = 1;
  // The lowest this many token-level layers attend only within the token's
  // own sentence; the rest attend over the whole flat document.
  std::size_t local_token_layers = 0;
  std::size_t ffn_multiplier = 4;
  std::size_t max_tokens = 512;
  std::size_t max_sentences = 64;
  std::size_t vocab_size = 0;
  double dropout = 0.0;
  double layer_norm_eps = 1e-5;
  double init_range = 0.02;
  // Positional variants: sentence-level positions can be dropped, token
  // positions can restart at every sentence.
  bool use_sentence_pos_embedding = true;
  bool reset_token_positions_per_sentence = false;
  // Decoders read token embeddings from the encoder table when true.
  bool share_decoder_embeddings = true;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t ffn_hidden() const { return ffn_multiplier * d_model; }

  // Throws ConfigError on inconsistent values.
  void validate() const;
};

}  // namespace stas::model
