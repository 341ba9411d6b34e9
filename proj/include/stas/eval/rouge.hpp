#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stas/corpus/document.hpp"

namespace stas::eval {

using Tokens = std::vector<std::string>;

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RougeScore {
  Prf rouge1;
  Prf rouge2;
  Prf rougeL;
};

// Lowercases, turns every non-alphanumeric byte into a separator and splits.
Tokens rouge_tokens(const std::string& text);

// F1 from precision and recall, 0 when both are 0.
Prf make_prf(double precision, double recall);

// Clipped n-gram overlap against a single reference.
Prf rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
            std::size_t n);

// Summary-level ROUGE-L: for every reference sentence, the union of the LCS
// positions it shares with each candidate sentence.
Prf rouge_l(std::span<const Tokens> candidate, std::span<const Tokens> reference);

// Plain longest common subsequence length.
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// ROUGE-1/2 on the concatenated sentences, ROUGE-L sentence-wise.
RougeScore score_summary(std::span<const std::string> candidate_sentences,
                         std::span<const std::string> reference_sentences);

// mean(ROUGE-1 F1, ROUGE-2 F1); the oracle's objective.
double oracle_objective(std::span<const std::string> candidate_sentences,
                        std::span<const std::string> reference_sentences);

// Greedy forward selection on oracle_objective. The first pick is always
// made; later picks only while they improve the objective. Ascending order.
std::vector<std::size_t> oracle_extract(const corpus::Document& doc, std::size_t max_sentences = 3);

std::vector<std::size_t> lead_k(std::size_t num_sentences, std::size_t k = 3);

struct CorpusEvaluation {
  RougeScore mean;
  std::size_t documents = 0;
  std::vector<std::string> errors;  // one message per unscored summary
};

struct SystemOutput {
  std::string doc_id;
  std::vector<std::string> sentences;
};

// Averages per-document scores of every summary whose document has a
// reference; other summaries are reported in `errors`.
CorpusEvaluation evaluate_corpus(std::span<const SystemOutput> summaries,
                                 std::span<const corpus::Document> docs);

// Header "system,metric,precision,recall,f1"; rouge-1, rouge-2, rouge-l rows.
void write_metric_csv(std::ostream& out,
                      std::span<const std::pair<std::string, RougeScore>> systems);

}  // namespace stas::eval
