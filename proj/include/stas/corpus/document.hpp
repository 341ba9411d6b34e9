#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stas::corpus {

struct Document {
  std::string doc_id;
  std::vector<std::string> sentences;
  // Evaluation only; never read by training.
  std::optional<std::vector<std::string>> summary;
};

struct LoadResult {
  std::vector<Document> documents;
  // Documents dropped because no non-empty sentence remained.
  std::size_t rejected = 0;
};

// Reads JSONL: one object per line with `doc_id` (string), `sentences`
// (array of strings) and optional `summary` (array of strings). Blank lines
// are skipped; empty sentence strings are dropped. Throws DataError carrying
// "<source>:<line>" for malformed lines.
LoadResult load_corpus(std::istream& in, std::string_view source_name = "<stream>");
LoadResult load_corpus(const std::filesystem::path& path);

void write_corpus(std::ostream& out, std::span<const Document> docs);
void write_corpus(const std::filesystem::path& path, std::span<const Document> docs);

// Rule-based sentence splitter. A sentence ends at '.', '!' or '?' (plus any
// closing quotes or brackets) when followed by whitespace and an uppercase
// letter, or by the end of the text. Known abbreviations never end a sentence.
std::vector<std::string> segment(std::string_view raw_text);

// ASCII-lowercased whitespace tokens.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace stas::corpus
