#include "stas/corpus/instances.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "stas/errors.hpp"

namespace stas::corpus {

SentencePool SentencePool::from(std::span<const EncodedDocument> docs) {
  SentencePool pool;
  for (const auto& doc : docs)
    for (const auto& s : doc.sentences) pool.interiors.emplace_back(s.begin() + 1, s.end() - 1);
  return pool;
}

std::vector<std::size_t> MaskedInstance::masked_indices() const {
  std::vector<std::size_t> out;
  out.reserve(decisions.size());
  for (const auto& d : decisions) out.push_back(d.sentence);
  return out;
}

std::vector<MaskDecision> draw_mask_plan(std::size_t num_sentences, std::size_t pool_size, Rng& rng,
                                         const MaskingConfig& config) {
  if (num_sentences == 0) throw ContractError("cannot mask an empty document");
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < num_sentences; ++i) {
    if (rng.uniform() < config.sentence_prob) selected.push_back(i);
  }
  if (selected.empty()) selected.push_back(rng.below(num_sentences));

  std::vector<MaskDecision> plan;
  plan.reserve(selected.size());
  for (auto i : selected) {
    MaskDecision d;
    d.sentence = i;
    const double u = rng.uniform();
    if (u < config.mask_prob) {
      d.action = MaskAction::Masked;
    } else if (u < config.mask_prob + config.random_prob) {
      d.action = MaskAction::RandomReplaced;
      // An empty pool cannot supply a replacement; fall back to masking.
      if (pool_size == 0) {
        d.action = MaskAction::Masked;
      } else {
        d.replacement = rng.below(pool_size);
      }
    } else {
      d.action = MaskAction::Kept;
    }
    plan.push_back(d);
  }
  return plan;
}

MaskedInstance apply_mask_plan(const EncodedDocument& doc, std::vector<MaskDecision> plan,
                               const SentencePool& pool) {
  if (plan.empty()) throw ContractError("mask plan selects no sentence");
  std::sort(plan.begin(), plan.end(),
            [](const MaskDecision& a, const MaskDecision& b) { return a.sentence < b.sentence; });

  MaskedInstance out;
  out.source = doc;
  auto sentences = doc.sentences;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const auto& d = plan[k];
    if (d.sentence >= sentences.size()) {
      throw IndexError(fmt::format("mask plan names sentence {} of {}", d.sentence, sentences.size()));
    }
    if (k > 0 && plan[k - 1].sentence == d.sentence) {
      throw ContractError(fmt::format("mask plan names sentence {} twice", d.sentence));
    }
    out.targets.push_back(doc.sentences[d.sentence]);
    auto& s = sentences[d.sentence];
    switch (d.action) {
      case MaskAction::Masked:
        std::fill(s.begin() + 1, s.end() - 1, kMask);
        break;
      case MaskAction::RandomReplaced: {
        if (d.replacement >= pool.size()) {
          throw IndexError(fmt::format("replacement {} outside pool of {}", d.replacement, pool.size()));
        }
        const auto& repl = pool.interiors[d.replacement];
        const std::size_t len = std::min(repl.size(), s.size() - 2);
        TokenList replaced{kBos};
        replaced.insert(replaced.end(), repl.begin(), repl.begin() + static_cast<std::ptrdiff_t>(len));
        replaced.push_back(kEos);
        s = std::move(replaced);
        break;
      }
      case MaskAction::Kept:
        break;
    }
  }
  out.masked = EncodedDocument::from_sentences(std::move(sentences));
  out.decisions = std::move(plan);
  return out;
}

MaskedInstance make_masked(const EncodedDocument& doc, const SentencePool& pool, Rng& rng,
                           const MaskingConfig& config) {
  return apply_mask_plan(doc, draw_mask_plan(doc.num_sentences(), pool.size(), rng, config), pool);
}

EncodedDocument mask_sentence(const EncodedDocument& doc, std::size_t sentence) {
  if (sentence >= doc.num_sentences()) {
    throw IndexError(fmt::format("sentence {} of {}", sentence, doc.num_sentences()));
  }
  auto sentences = doc.sentences;
  auto& s = sentences[sentence];
  std::fill(s.begin() + 1, s.end() - 1, kMask);
  return EncodedDocument::from_sentences(std::move(sentences));
}

ShuffledInstance apply_permutation(const EncodedDocument& doc, std::vector<std::size_t> order) {
  const std::size_t n = doc.num_sentences();
  if (order.size() != n) {
    throw DimensionError(fmt::format("permutation of length {} for {} sentences", order.size(), n));
  }
  ShuffledInstance out;
  out.target.assign(n, n);
  std::vector<TokenList> sentences;
  sentences.reserve(n);
  for (std::size_t p = 0; p < n; ++p) {
    if (order[p] >= n || out.target[order[p]] != n) throw ContractError("order is not a permutation");
    out.target[order[p]] = p;
    sentences.push_back(doc.sentences[order[p]]);
  }
  out.shuffled = EncodedDocument::from_sentences(std::move(sentences));
  out.order = std::move(order);
  return out;
}

ShuffledInstance make_shuffled(const EncodedDocument& doc, Rng& rng) {
  const std::size_t n = doc.num_sentences();
  if (n == 0) throw ContractError("cannot shuffle an empty document");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  return apply_permutation(doc, std::move(order));
}

}  // namespace stas::corpus
