#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stas/corpus/document.hpp"

namespace stas::corpus {

using TokenId = std::size_t;

// Reserved ids, fixed in this order.
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kMask = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kPad = 4;
inline constexpr std::size_t kNumReserved = 5;

class Vocab {
 public:
  // Reserved tokens only.
  Vocab();

  // `tokens` are the non-reserved entries in id order (first gets id 5).
  explicit Vocab(std::vector<std::string> tokens);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  // Total size including reserved ids.
  std::size_t size() const { return tokens_.size(); }
  // Entries after the reserved block.
  std::span<const std::string> regular_tokens() const {
    return std::span(tokens_).subspan(kNumReserved);
  }

  // One token per line; line number (0-based) = id - 5.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  static constexpr std::string_view kReservedNames[kNumReserved] = {"<s>", "</s>", "[MASK]", "<unk>",
                                                                    "<pad>"};

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Lowercased whitespace tokens of all document sentences with count >=
// min_count, ordered by (count desc, token asc). Summaries are not counted.
Vocab build_vocab(std::span<const Document> corpus, std::size_t min_count);

}  // namespace stas::corpus
