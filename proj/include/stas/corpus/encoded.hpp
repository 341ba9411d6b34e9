#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stas/corpus/document.hpp"
#include "stas/corpus/vocab.hpp"

namespace stas::corpus {

using TokenList = std::vector<TokenId>;

// A document as the hierarchical encoder sees it. Every sentence starts with
// BOS and ends with EOS; `flat` is their concatenation and
// `boundary_index[i]` is the flat position of sentence i's BOS.
struct EncodedDocument {
  std::vector<TokenList> sentences;
  TokenList flat;
  std::vector<std::size_t> boundary_index;
  std::vector<std::size_t> positions;  // flat absolute position of each token

  std::size_t num_sentences() const { return sentences.size(); }
  std::size_t num_tokens() const { return flat.size(); }

  // Builds flat/boundary/position views from wrapped sentences.
  static EncodedDocument from_sentences(std::vector<TokenList> sentences);
};

struct EncodeLimits {
  std::size_t max_tokens = 512;
  std::size_t max_sentences = 64;
};

// Wraps each sentence in BOS/EOS, keeps the first `max_sentences` sentences
// and then stops before the first sentence that would push the flat length
// past `max_tokens`. The first sentence is always kept; if it alone is too
// long its interior is cut so that it fits.
EncodedDocument encode(const Document& doc, const Vocab& vocab, const EncodeLimits& limits);

// Interior tokens (no BOS/EOS) of each sentence as strings.
std::vector<std::vector<std::string>> decode(const EncodedDocument& doc, const Vocab& vocab);

}  // namespace stas::corpus
