#include "stas/corpus/encoded.hpp"

#include <fmt/format.h>

#include "stas/errors.hpp"

namespace stas::corpus {

EncodedDocument EncodedDocument::from_sentences(std::vector<TokenList> sentences) {
  EncodedDocument out;
  for (const auto& s : sentences) {
    if (s.size() < 2 || s.front() != kBos || s.back() != kEos) {
      throw ContractError("encoded sentences must start with BOS and end with EOS");
    }
    out.boundary_index.push_back(out.flat.size());
    out.flat.insert(out.flat.end(), s.begin(), s.end());
  }
  out.positions.resize(out.flat.size());
  for (std::size_t i = 0; i < out.positions.size(); ++i) out.positions[i] = i;
  out.sentences = std::move(sentences);
  return out;
}

EncodedDocument encode(const Document& doc, const Vocab& vocab, const EncodeLimits& limits) {
  if (limits.max_tokens < 2 || limits.max_sentences < 1) {
    throw ContractError(fmt::format("encode limits too small (max_tokens={}, max_sentences={})",
                                    limits.max_tokens, limits.max_sentences));
  }
  if (doc.sentences.empty()) throw ContractError("document " + doc.doc_id + " has no sentences");

  std::vector<TokenList> wrapped;
  std::size_t total = 0;
  for (const auto& raw : doc.sentences) {
    if (wrapped.size() == limits.max_sentences) break;
    TokenList ids{kBos};
    for (const auto& tok : tokenize(raw)) ids.push_back(vocab.id(tok));
    ids.push_back(kEos);
    if (total + ids.size() > limits.max_tokens) {
      if (!wrapped.empty()) break;
      ids.resize(limits.max_tokens - 1);
      ids.push_back(kEos);
    }
    total += ids.size();
    wrapped.push_back(std::move(ids));
  }
  return EncodedDocument::from_sentences(std::move(wrapped));
}

std::vector<std::vector<std::string>> decode(const EncodedDocument& doc, const Vocab& vocab) {
  std::vector<std::vector<std::string>> out;
  out.reserve(doc.sentences.size());
  for (const auto& s : doc.sentences) {
    std::vector<std::string> words;
    for (std::size_t j = 1; j + 1 < s.size(); ++j) words.push_back(vocab.token(s[j]));
    out.push_back(std::move(words));
  }
  return out;
}

}  // namespace stas::corpus
