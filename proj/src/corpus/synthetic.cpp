#include "stas/corpus/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include <fmt/format.h>

#include "stas/errors.hpp"
#include "stas/random.hpp"

namespace stas::corpus {

namespace {

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ru", "te", "sa", "no", "vi",
                                      "pe", "da", "zu", "ho", "ri", "be", "go", "fa"};
constexpr std::size_t kNumSyllables = std::size(kSyllables);

// Deterministic pseudo-word for a global word index.
std::string word(std::size_t index) {
  std::string w = kSyllables[index % kNumSyllables];
  index /= kNumSyllables;
  w += kSyllables[index % kNumSyllables];
  index /= kNumSyllables;
  w += kSyllables[(index + 3) % kNumSyllables];
  return w;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

std::vector<Document> make_synthetic_corpus(const SyntheticConfig& config) {
  if (config.min_sentences == 0 || config.max_sentences < config.min_sentences ||
      config.min_words == 0 || config.max_words < config.min_words || config.num_topics == 0 ||
      config.topic_words == 0 || config.filler_words == 0) {
    throw ConfigError("inconsistent synthetic corpus configuration");
  }
  Rng rng(config.seed);
  const std::size_t filler_base = 0;
  const std::size_t topic_base = config.filler_words;
  auto filler = [&] { return word(filler_base + rng.below(config.filler_words)); };
  auto topic_word = [&](std::size_t topic) {
    return word(topic_base + topic * config.topic_words + rng.below(config.topic_words));
  };

  std::vector<Document> docs;
  docs.reserve(config.num_docs);
  for (std::size_t d = 0; d < config.num_docs; ++d) {
    Document doc;
    doc.doc_id = fmt::format("synth-{:04d}", d);
    const std::size_t topic = rng.below(config.num_topics);
    const std::size_t n =
        config.min_sentences + rng.below(config.max_sentences - config.min_sentences + 1);

    std::vector<std::size_t> slots(n);
    std::iota(slots.begin(), slots.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(slots[i], slots[rng.below(i + 1)]);
    const std::size_t n_key = std::min(config.key_sentences, n);
    std::vector<bool> is_key(n, false);
    for (std::size_t k = 0; k < n_key; ++k) is_key[slots[k]] = true;

    std::vector<std::string> summary;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t len = config.min_words + rng.below(config.max_words - config.min_words + 1);
      std::vector<std::string> words;
      for (std::size_t w = 0; w < len; ++w) {
        const double topical = is_key[i] ? 0.75 : 0.2;
        words.push_back(rng.uniform() < topical ? topic_word(topic) : filler());
      }
      doc.sentences.push_back(join(words));
      if (is_key[i]) {
        // Paraphrase: drop one word and substitute another.
        auto para = words;
        if (para.size() > 2) para.erase(para.begin() + static_cast<std::ptrdiff_t>(rng.below(para.size())));
        para[rng.below(para.size())] = topic_word(topic);
        summary.push_back(join(para));
      }
    }
    doc.summary = std::move(summary);
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace stas::corpus
