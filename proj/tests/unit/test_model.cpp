#include <cmath>
#include <sstream>

#include "doctest.h"
#include "stas/ad/gradcheck.hpp"
#include "stas/ad/ops.hpp"
#include "stas/corpus/instances.hpp"
#include "stas/errors.hpp"
#include "stas/model/checkpoint.hpp"
#include "stas/model/stas_model.hpp"

using namespace stas;
using corpus::EncodedDocument;
using corpus::TokenList;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.token_layers = 1;
  c.sentence_layers = 2;
  c.decoder_layers = 1;
  c.max_tokens = 64;
  c.max_sentences = 8;
  c.vocab_size = 20;
  c.init_range = 0.3;
  return c;
}

EncodedDocument random_doc(Rng& rng, std::size_t sentences, std::size_t vocab) {
  std::vector<TokenList> s;
  for (std::size_t i = 0; i < sentences; ++i) {
    TokenList t{corpus::kBos};
    const std::size_t len = 1 + rng.below(4);
    for (std::size_t k = 0; k < len; ++k) t.push_back(corpus::kNumReserved + rng.below(vocab - corpus::kNumReserved));
    t.push_back(corpus::kEos);
    s.push_back(std::move(t));
  }
  return EncodedDocument::from_sentences(std::move(s));
}

ad::Tensor random_row(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return ad::Tensor::from({1, d}, v);
}

}  // namespace

TEST_CASE("single sentence gives A = [[1]]") {
  model::StasModel m(small_config(), 3);
  Rng rng(1);
  const auto doc = random_doc(rng, 1, 20);
  const auto out = m.encode(doc);
  REQUIRE(out.A.n == 1);
  CHECK(out.A.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.H.rows() == 1);
}

TEST_CASE("H and V have one row per sentence") {
  model::StasModel m(small_config(), 3);
  Rng rng(2);
  for (std::size_t n = 1; n <= 8; ++n) {
    const auto out = m.encode(random_doc(rng, n, 20));
    CHECK(out.H.rows() == n);
    CHECK(out.V.rows() == n);
    CHECK(out.H.cols() == 8);
  }
}

TEST_CASE("averaged attention is row-stochastic over random configurations") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto c = small_config();
    c.n_heads = 1 + rng.below(4);
    c.d_model = c.n_heads * (2 + rng.below(3));
    c.token_layers = 1 + rng.below(3);
    c.sentence_layers = 1 + rng.below(3);
    c.init_range = rng.uniform(0.02, 1.0);
    model::StasModel m(c, trial);
    const auto out = m.encode(random_doc(rng, 1 + rng.below(8), c.vocab_size));
    for (std::size_t i = 0; i < out.A.n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < out.A.n; ++j) {
        CHECK(out.A.at(i, j) >= 0.0);
        row += out.A.at(i, j);
      }
      CHECK(std::abs(row - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("encode rejects documents beyond the configured limits") {
  auto c = small_config();
  c.max_sentences = 2;
  model::StasModel m(c, 1);
  Rng rng(3);
  CHECK_THROWS_AS(m.encode(random_doc(rng, 3, 20)), ContractError);
  c = small_config();
  c.max_tokens = 4;
  model::StasModel m2(c, 1);
  CHECK_THROWS_AS(m2.encode(random_doc(rng, 2, 20)), ContractError);
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.ffn_multiplier = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.vocab_size = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("msp decoder rows are log-probability vectors") {
  model::StasModel m(small_config(), 5);
  Rng rng(4);
  const TokenList target{corpus::kBos, 7, 9, 12, corpus::kEos};
  const auto out = m.msp_decode(target, random_row(rng, 8));
  REQUIRE(out.log_probs.rows() == 4);
  REQUIRE(out.target_log_probs.numel() == 4);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t v = 0; v < 20; ++v) s += std::exp(out.log_probs.at(r, v));
    CHECK(std::log(s) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.target_log_probs.at(r) == out.log_probs.at(r, target[r + 1]));
  }
  CHECK_THROWS_AS(m.msp_decode({corpus::kBos}, random_row(rng, 8)), ContractError);
  CHECK_THROWS_AS(m.msp_decode({corpus::kBos, 7, 9}, random_row(rng, 8)), ContractError);
}

TEST_CASE("msp decoder is causal") {
  model::StasModel m(small_config(), 6);
  Rng rng(5);
  const auto cond = random_row(rng, 8);
  const TokenList a{corpus::kBos, 7, 9, 12, 15, corpus::kEos};
  for (std::size_t k = 1; k + 1 < a.size(); ++k) {
    TokenList b = a;
    b[k] = b[k] == 6 ? 8 : 6;
    const auto oa = m.msp_decode(a, cond).log_probs;
    const auto ob = m.msp_decode(b, cond).log_probs;
    // Row r sees inputs 0..r, so rows before k are untouched.
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t v = 0; v < 20; ++v) CHECK(oa.at(r, v) == ob.at(r, v));
    bool changed = false;
    for (std::size_t v = 0; v < 20; ++v) changed |= oa.at(k, v) != ob.at(k, v);
    CHECK(changed);
  }
}

TEST_CASE("msp conditioning vector changes the output") {
  model::StasModel m(small_config(), 7);
  Rng rng(6);
  const TokenList t{corpus::kBos, 7, 9, corpus::kEos};
  const auto zero = m.msp_decode(t, ad::Tensor::zeros({1, 8})).log_probs;
  const auto rnd = m.msp_decode(t, random_row(rng, 8)).log_probs;
  double diff = 0.0;
  for (std::size_t e = 0; e < zero.numel(); ++e) diff += std::abs(zero.at(e) - rnd.at(e));
  CHECK(diff > 1e-6);
}

TEST_CASE("pointer step distributions") {
  model::StasModel m(small_config(), 8);
  Rng rng(7);
  const auto one = m.encode(random_doc(rng, 1, 20));
  const auto p1 = m.pointer_step(one.H, {});
  REQUIRE(p1.size() == 1);
  CHECK(p1[0] == doctest::Approx(1.0).epsilon(1e-15));

  const auto enc = m.encode(random_doc(rng, 5, 20));
  std::vector<std::size_t> prefix;
  for (std::size_t t = 0; t < 5; ++t) {
    const auto p = m.pointer_step(enc.H, prefix);
    double s = 0.0;
    for (double x : p) s += x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    prefix.push_back((t * 3) % 5);
  }
  CHECK_THROWS_AS(m.pointer_step(enc.H, prefix), ContractError);
}

TEST_CASE("pointer step agrees with teacher-forced log-probabilities and argmax of scores") {
  model::StasModel m(small_config(), 9);
  Rng rng(8);
  const auto enc = m.encode(random_doc(rng, 4, 20));
  const std::vector<std::size_t> target{2, 0, 3, 1};
  const auto lp = m.pointer_log_probs(enc.H, target);
  for (std::size_t t = 0; t < 4; ++t) {
    const auto p = m.pointer_step(enc.H, std::span(target).subspan(0, t));
    std::size_t arg_p = 0, arg_lp = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::log(p[j]) == doctest::Approx(lp.at(t, j)).epsilon(1e-10));
      if (p[j] > p[arg_p]) arg_p = j;
      if (lp.at(t, j) > lp.at(t, arg_lp)) arg_lp = j;
    }
    CHECK(arg_p == arg_lp);
  }
}

TEST_CASE("transformer block gradients match finite differences") {
  auto c = small_config();
  Rng rng(9);
  model::Parameters params;
  model::add_block_parameters(params, "blk", c, rng);
  std::vector<double> xv(5 * 8), cv(8), wv(5 * 8);
  for (auto& v : xv) v = rng.uniform(-1, 1);
  for (auto& v : cv) v = rng.uniform(-1, 1);
  for (auto& v : wv) v = rng.uniform(-1, 1);
  const auto x = ad::Tensor::parameter({5, 8}, xv);
  const auto cond = ad::Tensor::parameter({1, 8}, cv);
  const auto w = ad::Tensor::from({5, 8}, wv);
  const auto mask = model::causal_mask(5);
  auto inputs = params.tensors();
  inputs.push_back(x);
  inputs.push_back(cond);
  auto loss = [&] {
    model::BlockInputs in;
    in.mask = &mask;
    in.condition = &cond;
    const auto y = model::transformer_block(x, params, "blk", c, in, {});
    return ad::sum(ad::mul(ad::tanh(y), w));
  };
  const auto r = ad::check_gradients("block", loss, inputs);
  CHECK(r.passed);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("permuting sentences permutes H when no position signal crosses sentences") {
  auto c = small_config();
  c.use_sentence_pos_embedding = false;
  c.reset_token_positions_per_sentence = true;
  model::StasModel m(c, 10);
  Rng rng(10);
  const auto doc = random_doc(rng, 4, 20);
  const std::vector<std::size_t> order{2, 0, 3, 1};
  const auto perm = corpus::apply_permutation(doc, order).shuffled;
  const auto a = m.encode(doc);
  const auto b = m.encode(perm);
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t k = 0; k < 8; ++k) CHECK(b.H.at(p, k) == doctest::Approx(a.H.at(order[p], k)).epsilon(1e-12));
    for (std::size_t q = 0; q < 4; ++q)
      CHECK(b.A.at(p, q) == doctest::Approx(a.A.at(order[p], order[q])).epsilon(1e-12));
  }
}

TEST_CASE("sentence positions break permutation covariance") {
  model::StasModel m(small_config(), 10);
  Rng rng(10);
  const auto doc = random_doc(rng, 3, 20);
  const auto perm = corpus::apply_permutation(doc, {1, 0, 2}).shuffled;
  const auto a = m.encode(doc);
  const auto b = m.encode(perm);
  CHECK(std::abs(b.H.at(0, 0) - a.H.at(1, 0)) > 1e-9);
}

TEST_CASE("forward pass is deterministic") {
  Rng rng(12);
  const auto doc = random_doc(rng, 4, 20);
  model::StasModel m1(small_config(), 42), m2(small_config(), 42);
  const auto a = m1.encode(doc);
  const auto b = m2.encode(doc);
  for (std::size_t e = 0; e < a.H.numel(); ++e) CHECK(a.H.at(e) == b.H.at(e));
  CHECK(a.A.weights == b.A.weights);
}

TEST_CASE("checkpoint round trip is byte-identical") {
  model::StasModel m(small_config(), 13);
  std::stringstream first;
  model::save_checkpoint(first, m);
  const std::string bytes = first.str();
  std::istringstream in(bytes);
  const auto loaded = model::load_checkpoint(in);
  std::stringstream second;
  model::save_checkpoint(second, loaded);
  CHECK(second.str() == bytes);

  Rng rng(14);
  const auto doc = random_doc(rng, 3, 20);
  const auto a = m.encode(doc);
  const auto b = loaded.encode(doc);
  for (std::size_t e = 0; e < a.H.numel(); ++e) CHECK(a.H.at(e) == b.H.at(e));
  CHECK(loaded.config().share_decoder_embeddings == m.config().share_decoder_embeddings);

  std::istringstream bad("not a checkpoint");
  CHECK_THROWS_AS(model::load_checkpoint(bad), DataError);
  std::istringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(model::load_checkpoint(cut), DataError);
}

TEST_CASE("separate decoder embeddings are optional") {
  auto c = small_config();
  c.share_decoder_embeddings = false;
  model::StasModel m(c, 1);
  CHECK(m.params().contains("msp.tok_emb"));
  model::StasModel shared(small_config(), 1);
  CHECK_FALSE(shared.params().contains("msp.tok_emb"));
}

TEST_CASE("local token layers keep sentence representations independent of other sentences") {
  auto c = small_config();
  c.token_layers = 2;
  c.local_token_layers = 2;
  model::StasModel m(c, 15);
  const auto a = EncodedDocument::from_sentences({{0, 7, 8, 1}, {0, 9, 10, 11, 1}});
  const auto b = EncodedDocument::from_sentences({{0, 7, 8, 1}, {0, 12, 6, 13, 1}});
  const auto va = m.encode(a).V;
  const auto vb = m.encode(b).V;
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(va.at(0, k) == vb.at(0, k));
  }
  c.local_token_layers = 1;
  model::StasModel mixed(c, 15);
  CHECK(mixed.encode(a).V.at(0, 0) != mixed.encode(b).V.at(0, 0));
  c.local_token_layers = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
