#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stas/corpus/document.hpp"
#include "stas/corpus/encoded.hpp"
#include "stas/corpus/vocab.hpp"
#include "stas/model/stas_model.hpp"

namespace stas::rank {

// JI: r'_i = sum_j A[j][i] r~_j. IJ: r'_i = sum_j A[i][j] r~_j.
enum class AttentionDirection { JI, IJ };

struct RankConfig {
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  std::size_t T = 1;
  // Upper bound accepted for T.
  std::size_t max_iterations = 3;
  bool use_trigram_blocking = true;
  std::size_t summary_len = 3;
  AttentionDirection direction = AttentionDirection::JI;
  bool uniform_r_tilde = false;  // r~ := 1/|D|
  bool zero_r_prime = false;     // r' := 0
  bool no_renorm = false;        // skip renormalizing r between iterations

  void validate() const;
};

struct SentenceScores {
  std::vector<double> r_hat;
  std::vector<double> r_tilde;
  std::vector<double> r_prime;
  std::vector<double> r;
};

// p(w_j | w_<j, D with S_i masked) for j = 1..|S_i| (interior tokens and EOS).
std::vector<double> token_probabilities(const model::StasModel& model,
                                        const corpus::EncodedDocument& doc, std::size_t i);

// Arithmetic mean of token_probabilities.
double sentence_prob(const model::StasModel& model, const corpus::EncodedDocument& doc,
                     std::size_t i);

// Number of masked encoder passes run by sentence_prob since the last reset.
std::uint64_t masked_forward_count();
void reset_masked_forward_count();

std::vector<double> normalize_scores(std::span<const double> r_hat);

std::vector<double> propagate(std::span<const double> r_tilde, const model::AttentionMatrix& A,
                              AttentionDirection direction);

// Iterates r = gamma1 * r~ + gamma2 * r' for T rounds, feeding r back in as r~.
SentenceScores combine_iterate(std::span<const double> r_tilde, const model::AttentionMatrix& A,
                               const RankConfig& config);

// Lowercased whitespace tokens of a raw sentence.
std::vector<std::string> raw_tokens(const std::string& sentence);

// Indices chosen by descending score (ties to the lower index), skipping
// sentences that share a word trigram with earlier picks when blocking is
// on. Returned in ascending document order.
std::vector<std::size_t> select_summary(std::span<const std::string> sentences,
                                        std::span<const double> scores, const RankConfig& config);

// weight_self * r + (1 - weight_self) * external.
std::vector<double> combine_external(std::span<const double> r, std::span<const double> external,
                                     double weight_self);

struct DocumentSummary {
  std::string doc_id;
  std::vector<std::size_t> selected;
  std::vector<std::string> sentences;
  SentenceScores scores;
};

// r-hat for every sentence plus the attention matrix of the unmasked document.
struct DocumentEvidence {
  std::vector<double> r_hat;
  model::AttentionMatrix A;
};

DocumentEvidence analyze_document(const model::StasModel& model, const corpus::EncodedDocument& doc);

struct SummarizeOptions {
  RankConfig rank;
  corpus::EncodeLimits limits;
  std::size_t threads = 1;
  // Optional per-document external scores blended into r before selection.
  const std::map<std::string, std::vector<double>>* external = nullptr;
  double weight_self = 0.9;
};

// Documents longer than the model limits are truncated by corpus::encode;
// `truncated` (if given) receives how many documents lost sentences.
std::vector<DocumentSummary> summarize(const model::StasModel& model,
                                       std::span<const corpus::Document> docs,
                                       const corpus::Vocab& vocab, const SummarizeOptions& options,
                                       std::size_t* truncated = nullptr);

// One JSON object per line: doc_id, selected, sentences, scores{r_hat, r_tilde, r_prime, r}.
void write_summaries(std::ostream& out, std::span<const DocumentSummary> summaries);
std::vector<DocumentSummary> read_summaries(std::istream& in, const std::string& source = "<stream>");

// Score exchange: one {"doc_id": ..., "scores": [...]} object per line.
void write_scores(std::ostream& out, const std::map<std::string, std::vector<double>>& scores);
std::map<std::string, std::vector<double>> read_scores(std::istream& in,
                                                       const std::string& source = "<stream>");

}  // namespace stas::rank
