#include "stas/corpus/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "stas/errors.hpp"

namespace stas::corpus {

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> tokens) {
  tokens_.reserve(kNumReserved + tokens.size());
  for (auto name : kReservedNames) tokens_.emplace_back(name);
  for (auto& t : tokens) tokens_.push_back(std::move(t));
  for (TokenId i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw DataError(fmt::format("duplicate vocabulary entry \"{}\"", tokens_[i]));
    }
  }
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw IndexError(fmt::format("token id {} outside vocabulary of size {}", id, tokens_.size()));
  }
  return tokens_[id];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write vocabulary {}", path.string()));
  for (const auto& t : regular_tokens()) out << t << '\n';
  if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open vocabulary {}", path.string()));
  std::vector<std::string> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw DataError(fmt::format("{}:{}: empty vocabulary line", path.string(), line_no));
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

Vocab build_vocab(std::span<const Document> corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus)
    for (const auto& sentence : doc.sentences)
      for (auto& tok : tokenize(sentence)) ++counts[std::move(tok)];

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, count] : counts) {
    const bool reserved = std::find(std::begin(Vocab::kReservedNames), std::end(Vocab::kReservedNames),
                                    tok) != std::end(Vocab::kReservedNames);
    if (count >= min_count && !reserved) kept.emplace_back(tok, count);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, count] : kept) tokens.push_back(std::move(tok));
  return Vocab(std::move(tokens));
}

}  // namespace stas::corpus
