#include "stas/model/transformer.hpp"

#include <cmath>

#include "stas/ad/ops.hpp"

namespace stas::model {

using ad::Tensor;

Tensor Dropout::operator()(const Tensor& x) const {
  if (rng == nullptr || p <= 0.0) return x;
  return ad::dropout(x, p, *rng);
}

Tensor causal_mask(std::size_t n) {
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = -1e9;
  return Tensor::from({n, n}, std::move(m));
}

void add_block_parameters(Parameters& params, const std::string& prefix, const ModelConfig& config,
                          Rng& rng) {
  const std::size_t d = config.d_model;
  const std::size_t f = config.ffn_hidden();
  const double r = config.init_range;
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    params.add_uniform(prefix + ".attn." + w, {d, d}, r, rng);
    params.add_constant(prefix + ".attn.b" + std::string(w + 1), {d}, 0.0);
  }
  params.add_constant(prefix + ".ln1.g", {d}, 1.0);
  params.add_constant(prefix + ".ln1.b", {d}, 0.0);
  params.add_uniform(prefix + ".ffn.w1", {d, f}, r, rng);
  params.add_constant(prefix + ".ffn.b1", {f}, 0.0);
  params.add_uniform(prefix + ".ffn.w2", {f, d}, r, rng);
  params.add_constant(prefix + ".ffn.b2", {d}, 0.0);
  params.add_constant(prefix + ".ln2.g", {d}, 1.0);
  params.add_constant(prefix + ".ln2.b", {d}, 0.0);
}

namespace {

Tensor affine(const Tensor& x, const Parameters& params, const std::string& w,
              const std::string& b) {
  return ad::add_row(ad::matmul(x, params.get(w)), params.get(b));
}

}  // namespace

Tensor self_attention(const Tensor& x, const Parameters& params, const std::string& prefix,
                      std::size_t heads, const Tensor* mask, std::vector<double>* attention) {
  const std::string p = prefix + ".attn.";
  const Tensor q = affine(x, params, p + "wq", p + "bq");
  const Tensor k = affine(x, params, p + "wk", p + "bk");
  const Tensor v = affine(x, params, p + "wv", p + "bv");
  const std::size_t n = x.rows();
  const std::size_t dh = x.cols() / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

  if (attention) attention->assign(n * n, 0.0);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : ad::slice_cols(q, h * dh, dh);
    const Tensor kh = heads == 1 ? k : ad::slice_cols(k, h * dh, dh);
    const Tensor vh = heads == 1 ? v : ad::slice_cols(v, h * dh, dh);
    Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv);
    if (mask) scores = ad::add(scores, *mask);
    const Tensor probs = ad::softmax(scores, -1);
    if (attention) {
      const auto pv = probs.values();
      for (std::size_t e = 0; e < pv.size(); ++e) (*attention)[e] += pv[e];
    }
    outs.push_back(ad::matmul(probs, vh));
  }
  if (attention)
    for (auto& a : *attention) a /= static_cast<double>(heads);
  const Tensor joined = heads == 1 ? outs[0] : ad::concat_cols(outs);
  return affine(joined, params, p + "wo", p + "bo");
}

Tensor transformer_block(const Tensor& x, const Parameters& params, const std::string& prefix,
                         const ModelConfig& config, const BlockInputs& inputs,
                         const Dropout& dropout) {
  const double eps = config.layer_norm_eps;
  const Tensor attn =
      self_attention(x, params, prefix, config.n_heads, inputs.mask, inputs.attention);
  Tensor h = ad::layer_norm(ad::add(x, dropout(attn)), params.get(prefix + ".ln1.g"),
                            params.get(prefix + ".ln1.b"), eps);
  if (inputs.condition) h = ad::add_row(h, *inputs.condition);
  const Tensor hidden = ad::gelu(affine(h, params, prefix + ".ffn.w1", prefix + ".ffn.b1"));
  const Tensor ffn = affine(hidden, params, prefix + ".ffn.w2", prefix + ".ffn.b2");
  return ad::layer_norm(ad::add(h, dropout(ffn)), params.get(prefix + ".ln2.g"),
                        params.get(prefix + ".ln2.b"), eps);
}

}  // namespace stas::model
