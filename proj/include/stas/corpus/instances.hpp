#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stas/corpus/encoded.hpp"
#include "stas/random.hpp"

namespace stas::corpus {

// Sentence-level masking rates. A selected sentence is masked with
// probability `mask_prob`, replaced by a random corpus sentence with
// `random_prob`, and left unchanged otherwise.
struct MaskingConfig {
  double sentence_prob = 0.15;
  double mask_prob = 0.8;
  double random_prob = 0.1;
};

enum class MaskAction { Masked, RandomReplaced, Kept };

struct MaskDecision {
  std::size_t sentence = 0;
  MaskAction action = MaskAction::Masked;
  std::size_t replacement = 0;  // pool index, RandomReplaced only
};

// Interior token lists of every sentence in the training corpus; the source
// of replacement sentences.
struct SentencePool {
  std::vector<TokenList> interiors;

  static SentencePool from(std::span<const EncodedDocument> docs);
  std::size_t size() const { return interiors.size(); }
};

struct MaskedInstance {
  EncodedDocument source;
  EncodedDocument masked;
  // Sorted by sentence index; the sentence indices form the masked set.
  std::vector<MaskDecision> decisions;
  // Original wrapped sentence (BOS ... EOS) for each decision.
  std::vector<TokenList> targets;

  std::vector<std::size_t> masked_indices() const;
};

struct ShuffledInstance {
  EncodedDocument shuffled;
  // order[p] = original index of the sentence at position p of the shuffled document.
  std::vector<std::size_t> order;
  // target[i] = position of original sentence i in the shuffled document (0-based).
  std::vector<std::size_t> target;
};

// Independent per-sentence selection, then a branch draw for each selected
// sentence. At least one sentence is always selected.
std::vector<MaskDecision> draw_mask_plan(std::size_t num_sentences, std::size_t pool_size, Rng& rng,
                                         const MaskingConfig& config = {});

// Applies a plan. Masked sentences keep BOS/EOS and replace every interior
// token with MASK; replacement sentences are cut to the original interior
// length.
MaskedInstance apply_mask_plan(const EncodedDocument& doc, std::vector<MaskDecision> plan,
                               const SentencePool& pool);

MaskedInstance make_masked(const EncodedDocument& doc, const SentencePool& pool, Rng& rng,
                           const MaskingConfig& config = {});

// Document with sentence i's interior replaced by MASK tokens.
EncodedDocument mask_sentence(const EncodedDocument& doc, std::size_t sentence);

ShuffledInstance apply_permutation(const EncodedDocument& doc, std::vector<std::size_t> order);
ShuffledInstance make_shuffled(const EncodedDocument& doc, Rng& rng);

}  // namespace stas::corpus
