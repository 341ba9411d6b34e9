#include "stas/model/stas_model.hpp"

#include <numeric>

#include <fmt/format.h>

#include "stas/ad/ops.hpp"
#include "stas/corpus/vocab.hpp"
#include "stas/errors.hpp"

namespace stas::model {

using ad::Tensor;

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError(fmt::format("d_model {} is not divisible by n_heads {}", d_model, n_heads));
  if (ffn_multiplier != 4) throw ConfigError("ffn_multiplier is fixed at 4");
  if (token_layers == 0 || sentence_layers == 0 || decoder_layers == 0)
    throw ConfigError("layer counts must be positive");
  if (local_token_layers > token_layers)
    throw ConfigError("local_token_layers exceeds token_layers");
  if (max_tokens < 2 || max_sentences == 0) throw ConfigError("max_tokens/max_sentences too small");
  if (vocab_size <= corpus::kNumReserved)
    throw ConfigError(fmt::format("vocab_size {} leaves no regular tokens", vocab_size));
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(layer_norm_eps >= 0.0)) throw ConfigError("layer_norm_eps must be nonnegative");
  if (!(init_range > 0.0)) throw ConfigError("init_range must be positive");
}

namespace {

std::string layer(std::string_view prefix, std::size_t i) { return fmt::format("{}L{}", prefix, i); }

Parameters init_parameters(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng(seed);
  Parameters p;
  const std::size_t d = c.d_model;
  const double r = c.init_range;
  const std::string enc(kEncoderPrefix), msp(kMspPrefix), ptr(kPointerPrefix);

  p.add_uniform(enc + "tok_emb", {c.vocab_size, d}, r, rng);
  p.add_uniform(enc + "tok_pos", {c.max_tokens, d}, r, rng);
  p.add_constant(enc + "emb_ln.g", {d}, 1.0);
  p.add_constant(enc + "emb_ln.b", {d}, 0.0);
  for (std::size_t i = 0; i < c.token_layers; ++i) add_block_parameters(p, layer(enc + "tok.", i), c, rng);
  if (c.use_sentence_pos_embedding) p.add_uniform(enc + "sent_pos", {c.max_sentences, d}, r, rng);
  for (std::size_t i = 0; i < c.sentence_layers; ++i)
    add_block_parameters(p, layer(enc + "sent.", i), c, rng);

  if (!c.share_decoder_embeddings) p.add_uniform(msp + "tok_emb", {c.vocab_size, d}, r, rng);
  p.add_uniform(msp + "pos", {c.max_tokens, d}, r, rng);
  p.add_constant(msp + "emb_ln.g", {d}, 1.0);
  p.add_constant(msp + "emb_ln.b", {d}, 0.0);
  for (std::size_t i = 0; i < c.decoder_layers; ++i) add_block_parameters(p, layer(msp, i), c, rng);
  p.add_uniform(msp + "out", {d, c.vocab_size}, r, rng);

  p.add_uniform(ptr + "step_pos", {c.max_sentences + 1, d}, r, rng);
  p.add_uniform(ptr + "orig_pos", {c.max_sentences + 1, d}, r, rng);
  p.add_constant(ptr + "emb_ln.g", {d}, 1.0);
  p.add_constant(ptr + "emb_ln.b", {d}, 0.0);
  for (std::size_t i = 0; i < c.decoder_layers; ++i) add_block_parameters(p, layer(ptr, i), c, rng);
  p.add_uniform(ptr + "u_a", {d, d}, r, rng);
  p.add_uniform(ptr + "w_a", {d, d}, r, rng);
  p.add_uniform(ptr + "v_a", {d}, r, rng);
  return p;
}

// Additive mask confining attention to the token's own sentence.
Tensor sentence_block_mask(const corpus::EncodedDocument& doc) {
  const std::size_t len = doc.num_tokens();
  std::vector<double> m(len * len, -1e9);
  for (std::size_t s = 0; s < doc.num_sentences(); ++s) {
    const std::size_t begin = doc.boundary_index[s];
    const std::size_t end = begin + doc.sentences[s].size();
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t j = begin; j < end; ++j) m[i * len + j] = 0.0;
  }
  return Tensor::from({len, len}, std::move(m));
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

StasModel::StasModel(ModelConfig config, std::uint64_t seed)
    : config_(config), params_(init_parameters(config, seed)) {}

StasModel::StasModel(ModelConfig config, Parameters params) : config_(config) {
  const Parameters reference = init_parameters(config_, 0);
  for (const auto& [name, t] : reference.all()) {
    if (!params.contains(name)) throw DataError(fmt::format("missing parameter {}", name));
    if (params.get(name).shape() != t.shape()) {
      throw DataError(fmt::format("parameter {} has shape {}, expected {}", name,
                                  ad::shape_str(params.get(name).shape()), ad::shape_str(t.shape())));
    }
  }
  for (const auto& [name, t] : params.all())
    if (!reference.contains(name)) throw DataError(fmt::format("unexpected parameter {}", name));
  params_ = std::move(params);
}

bool StasModel::is_encoder_parameter(std::string_view name) {
  return name.substr(0, kEncoderPrefix.size()) == kEncoderPrefix;
}

bool StasModel::is_pointer_parameter(std::string_view name) {
  return name.substr(0, kPointerPrefix.size()) == kPointerPrefix;
}

const Tensor& StasModel::decoder_embeddings() const {
  return params_.get(config_.share_decoder_embeddings ? "enc.tok_emb" : "msp.tok_emb");
}

EncoderOutput StasModel::encode(const corpus::EncodedDocument& doc, const Dropout& dropout) const {
  const auto& c = config_;
  const std::size_t n = doc.num_sentences();
  const std::size_t len = doc.num_tokens();
  if (n == 0 || len == 0) throw ContractError("encode: empty document");
  if (len > c.max_tokens || n > c.max_sentences) {
    throw ContractError(fmt::format("encode: document of {} tokens / {} sentences exceeds limits {}/{}",
                                    len, n, c.max_tokens, c.max_sentences));
  }
  for (auto id : doc.flat)
    if (id >= c.vocab_size) throw ContractError(fmt::format("encode: token id {} outside vocabulary", id));

  std::vector<std::size_t> positions = doc.positions;
  if (c.reset_token_positions_per_sentence) {
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t start = doc.boundary_index[s];
      for (std::size_t k = 0; k < doc.sentences[s].size(); ++k) positions[start + k] = k;
    }
  }

  Tensor x = ad::add(ad::gather_rows(params_.get("enc.tok_emb"), doc.flat),
                     ad::gather_rows(params_.get("enc.tok_pos"), positions));
  x = dropout(ad::layer_norm(x, params_.get("enc.emb_ln.g"), params_.get("enc.emb_ln.b"),
                             c.layer_norm_eps));
  Tensor local_mask;
  if (c.local_token_layers > 0) local_mask = sentence_block_mask(doc);
  for (std::size_t i = 0; i < c.token_layers; ++i) {
    BlockInputs inputs;
    if (i < c.local_token_layers) inputs.mask = &local_mask;
    x = transformer_block(x, params_, layer("enc.tok.", i), c, inputs, dropout);
  }

  EncoderOutput out;
  out.V = ad::gather_rows(x, doc.boundary_index);
  Tensor s = out.V;
  if (c.use_sentence_pos_embedding) s = ad::add(s, ad::gather_rows(params_.get("enc.sent_pos"), iota(n)));

  out.A.n = n;
  out.A.weights.assign(n * n, 0.0);
  std::vector<double> layer_attention;
  for (std::size_t i = 0; i < c.sentence_layers; ++i) {
    BlockInputs inputs;
    inputs.attention = &layer_attention;
    s = transformer_block(s, params_, layer("enc.sent.", i), c, inputs, dropout);
    for (std::size_t e = 0; e < layer_attention.size(); ++e) out.A.weights[e] += layer_attention[e];
  }
  for (auto& w : out.A.weights) w /= static_cast<double>(c.sentence_layers);
  out.H = s;
  return out;
}

MspOutput StasModel::msp_decode(const corpus::TokenList& target, const Tensor& condition,
                                const Dropout& dropout) const {
  const auto& c = config_;
  if (target.size() < 2) throw ContractError("msp_decode: target needs BOS and at least one more token");
  if (target.front() != corpus::kBos || target.back() != corpus::kEos)
    throw ContractError("msp_decode: target must start with BOS and end with EOS");
  const std::size_t steps = target.size() - 1;
  if (steps > c.max_tokens) throw ContractError("msp_decode: target longer than max_tokens");
  if (condition.numel() != c.d_model) throw DimensionError("msp_decode: condition width differs from d_model");
  for (auto id : target)
    if (id >= c.vocab_size) throw ContractError(fmt::format("msp_decode: token id {} outside vocabulary", id));

  const std::span<const std::size_t> inputs(target.data(), steps);
  Tensor x = ad::add(ad::gather_rows(decoder_embeddings(), inputs),
                     ad::gather_rows(params_.get("msp.pos"), iota(steps)));
  x = dropout(ad::layer_norm(x, params_.get("msp.emb_ln.g"), params_.get("msp.emb_ln.b"),
                             c.layer_norm_eps));
  const Tensor mask = causal_mask(steps);
  BlockInputs block;
  block.mask = &mask;
  block.condition = &condition;
  for (std::size_t i = 0; i < c.decoder_layers; ++i)
    x = transformer_block(x, params_, layer("msp.", i), c, block, dropout);

  MspOutput out;
  out.log_probs = ad::log_softmax(ad::matmul(x, params_.get("msp.out")), -1);
  out.target_log_probs =
      ad::pick(out.log_probs, std::span<const std::size_t>(target.data() + 1, steps));
  return out;
}

Tensor StasModel::pointer_outputs(const Tensor& h_shuffled, std::span<const std::size_t> prefix,
                                  std::size_t steps, const Dropout& dropout) const {
  const auto& c = config_;
  const std::size_t d = c.d_model;
  std::vector<std::size_t> step_ids = iota(steps);
  std::vector<std::size_t> orig_ids(steps, 0);
  for (std::size_t k = 1; k < steps; ++k) orig_ids[k] = prefix[k - 1] + 1;

  Tensor rows = Tensor::zeros({1, d});
  if (steps > 1) {
    const Tensor picked = ad::gather_rows(h_shuffled, prefix.subspan(0, steps - 1));
    const Tensor parts[] = {rows, picked};
    rows = ad::concat_rows(parts);
  }
  Tensor x = ad::add(rows, ad::add(ad::gather_rows(params_.get("ptr.step_pos"), step_ids),
                                   ad::gather_rows(params_.get("ptr.orig_pos"), orig_ids)));
  x = dropout(ad::layer_norm(x, params_.get("ptr.emb_ln.g"), params_.get("ptr.emb_ln.b"),
                             c.layer_norm_eps));
  const Tensor mask = causal_mask(steps);
  BlockInputs block;
  block.mask = &mask;
  for (std::size_t i = 0; i < c.decoder_layers; ++i)
    x = transformer_block(x, params_, layer("ptr.", i), c, block, dropout);

  return ad::additive_scores(ad::matmul(x, params_.get("ptr.u_a")),
                             ad::matmul(h_shuffled, params_.get("ptr.w_a")), params_.get("ptr.v_a"));
}

Tensor StasModel::pointer_log_probs(const Tensor& h_shuffled, std::span<const std::size_t> target,
                                    const Dropout& dropout) const {
  const std::size_t n = h_shuffled.rows();
  if (target.size() != n) {
    throw DimensionError(fmt::format("pointer_log_probs: {} targets for {} sentences", target.size(), n));
  }
  if (n > config_.max_sentences) throw ContractError("pointer_log_probs: too many sentences");
  for (auto t : target)
    if (t >= n) throw IndexError(fmt::format("pointer_log_probs: position {} outside {}", t, n));
  return ad::log_softmax(pointer_outputs(h_shuffled, target, n, dropout), -1);
}

std::vector<double> StasModel::pointer_step(const Tensor& h_shuffled,
                                            std::span<const std::size_t> prefix) const {
  const std::size_t n = h_shuffled.rows();
  if (prefix.size() >= n) {
    throw ContractError(fmt::format("pointer_step: step {} exceeds {} sentences", prefix.size() + 1, n));
  }
  if (n > config_.max_sentences) throw ContractError("pointer_step: too many sentences");
  for (auto t : prefix)
    if (t >= n) throw IndexError(fmt::format("pointer_step: position {} outside {}", t, n));
  ad::NoGradGuard guard;
  const std::size_t steps = prefix.size() + 1;
  const Tensor scores = pointer_outputs(h_shuffled, prefix, steps, {});
  const Tensor last = ad::slice_rows(scores, steps - 1, 1);
  const Tensor probs = ad::softmax(last, -1);
  return {probs.values().begin(), probs.values().end()};
}

}  // namespace stas::model
