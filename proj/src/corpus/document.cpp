#include "stas/corpus/document.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include "json.hpp"

#include "stas/errors.hpp"

namespace stas::corpus {

namespace {

using nlohmann::json;

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::vector<std::string> string_array(const json& value, const char* key, std::string_view where) {
  if (!value.is_array()) throw DataError(fmt::format("{}: \"{}\" must be an array of strings", where, key));
  std::vector<std::string> out;
  for (const auto& item : value) {
    if (!item.is_string()) {
      throw DataError(fmt::format("{}: \"{}\" must contain only strings", where, key));
    }
    auto s = item.get<std::string>();
    if (!is_blank(s)) out.push_back(std::move(s));
  }
  return out;
}

constexpr std::array<std::string_view, 34> kAbbreviations = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e",
    "inc", "ltd", "co", "corp", "p.m", "gen", "gov", "sen", "rep", "u.s", "u.k", "jan",
    "feb", "mar", "apr", "aug", "sept", "oct", "nov", "dec", "a.m"};

bool is_abbreviation(std::string_view word) {
  std::string lower;
  for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  // Single capital initials such as "J." in "J. Smith".
  if (word.size() == 1 && std::isupper(static_cast<unsigned char>(word[0]))) return true;
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), lower) != kAbbreviations.end();
}

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

LoadResult load_corpus(std::istream& in, std::string_view source_name) {
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const std::string where = fmt::format("{}:{}", source_name, line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(fmt::format("{}: invalid JSON ({})", where, e.what()));
    }
    if (!obj.is_object()) throw DataError(where + ": expected a JSON object");
    if (!obj.contains("doc_id") || !obj["doc_id"].is_string()) {
      throw DataError(where + ": missing string \"doc_id\"");
    }
    if (!obj.contains("sentences")) throw DataError(where + ": missing \"sentences\"");

    Document doc;
    doc.doc_id = obj["doc_id"].get<std::string>();
    doc.sentences = string_array(obj["sentences"], "sentences", where);
    if (obj.contains("summary") && !obj["summary"].is_null()) {
      doc.summary = string_array(obj["summary"], "summary", where);
    }
    if (doc.sentences.empty()) {
      ++result.rejected;
      continue;
    }
    result.documents.push_back(std::move(doc));
  }
  return result;
}

LoadResult load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open corpus {}", path.string()));
  return load_corpus(in, path.string());
}

void write_corpus(std::ostream& out, std::span<const Document> docs) {
  for (const auto& doc : docs) {
    json obj = {{"doc_id", doc.doc_id}, {"sentences", doc.sentences}};
    if (doc.summary) obj["summary"] = *doc.summary;
    out << obj.dump() << '\n';
  }
}

void write_corpus(const std::filesystem::path& path, std::span<const Document> docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write corpus {}", path.string()));
  write_corpus(out, docs);
  if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

std::vector<std::string> segment(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    while (end < n && (text[end] == '.' || text[end] == '!' || text[end] == '?')) ++end;
    while (end < n && is_closer(text[end])) ++end;

    bool boundary = false;
    if (end == n) {
      boundary = true;
    } else if (std::isspace(static_cast<unsigned char>(text[end]))) {
      std::size_t next = end;
      while (next < n && std::isspace(static_cast<unsigned char>(text[next]))) ++next;
      boundary = next == n || std::isupper(static_cast<unsigned char>(text[next])) ||
                 text[next] == '"' || text[next] == '\'';
    }
    if (boundary && c == '.') {
      // The word immediately before the period decides the abbreviation guard.
      std::size_t w = i;
      while (w > start && !std::isspace(static_cast<unsigned char>(text[w - 1]))) --w;
      std::string_view word = text.substr(w, i - w);
      while (!word.empty() && (word.front() == '(' || word.front() == '"')) word.remove_prefix(1);
      if (!word.empty() && is_abbreviation(word) && end < n) boundary = false;
    }
    if (boundary) {
      auto sentence = trim(text.substr(start, end - start));
      if (!sentence.empty()) out.push_back(std::move(sentence));
      start = end;
    }
    i = end;
  }
  auto tail = trim(text.substr(start));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

}  // namespace stas::corpus
