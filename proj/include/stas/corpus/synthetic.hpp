#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stas/corpus/document.hpp"

namespace stas::corpus {

// Parameters of the toy topic corpus used by smoke tests, the acceptance
// suite and `stas synth`.
struct SyntheticConfig {
  std::size_t num_docs = 8;
  std::size_t min_sentences = 5;
  std::size_t max_sentences = 8;
  std::size_t min_words = 4;
  std::size_t max_words = 8;
  std::size_t num_topics = 4;
  std::size_t topic_words = 12;   // per topic
  std::size_t filler_words = 30;  // shared across topics
  std::size_t key_sentences = 3;  // per document, placed at random positions
  std::uint64_t seed = 1;
};

// Each document draws a topic; most sentences mix filler with a few topic
// words, while `key_sentences` sentences at uniformly random positions are
// dense in topic words. The reference summary is a light paraphrase of the
// key sentences, so the extractive oracle is not tied to the lead.
std::vector<Document> make_synthetic_corpus(const SyntheticConfig& config);

}  // namespace stas::corpus
