#include "stas/eval/rouge.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "stas/errors.hpp"

namespace stas::eval {

Tokens rouge_tokens(const std::string& text) {
  Tokens out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Prf make_prf(double precision, double recall) {
  Prf p{precision, recall, 0.0};
  if (precision + recall > 0.0) p.f1 = 2.0 * precision * recall / (precision + recall);
  return p;
}

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(std::span<const std::string> toks,
                                                             std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                      toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

Tokens join_tokens(std::span<const std::string> sentences) {
  Tokens out;
  for (const auto& s : sentences) {
    auto t = rouge_tokens(s);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

std::vector<Tokens> sentence_tokens(std::span<const std::string> sentences) {
  std::vector<Tokens> out;
  for (const auto& s : sentences) out.push_back(rouge_tokens(s));
  return out;
}

std::vector<std::vector<std::size_t>> lcs_table(std::span<const std::string> a,
                                                std::span<const std::string> b) {
  std::vector<std::vector<std::size_t>> dp(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
  return dp;
}

// Positions in `ref` covered by one LCS with `cand`.
void lcs_positions(std::span<const std::string> ref, std::span<const std::string> cand,
                   std::set<std::size_t>& hits) {
  const auto dp = lcs_table(ref, cand);
  std::size_t i = ref.size(), j = cand.size();
  while (i > 0 && j > 0) {
    if (ref[i - 1] == cand[j - 1]) {
      hits.insert(i - 1);
      --i;
      --j;
    } else if (dp[i - 1][j] >= dp[i][j - 1]) {
      --i;
    } else {
      --j;
    }
  }
}

}  // namespace

Prf rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
            std::size_t n) {
  if (n == 0) throw ConfigError("rouge_n: n must be at least 1");
  const auto c = ngram_counts(candidate, n);
  const auto r = ngram_counts(reference, n);
  std::size_t c_total = 0, r_total = 0, overlap = 0;
  for (const auto& [g, k] : c) c_total += k;
  for (const auto& [g, k] : r) {
    r_total += k;
    auto it = c.find(g);
    if (it != c.end()) overlap += std::min(k, it->second);
  }
  if (c_total == 0 || r_total == 0) return {};
  return make_prf(static_cast<double>(overlap) / static_cast<double>(c_total),
                  static_cast<double>(overlap) / static_cast<double>(r_total));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  return lcs_table(a, b)[a.size()][b.size()];
}

Prf rouge_l(std::span<const Tokens> candidate, std::span<const Tokens> reference) {
  std::size_t c_total = 0, r_total = 0, hits = 0;
  for (const auto& c : candidate) c_total += c.size();
  for (const auto& r : reference) {
    r_total += r.size();
    std::set<std::size_t> covered;
    for (const auto& c : candidate) lcs_positions(r, c, covered);
    hits += covered.size();
  }
  if (c_total == 0 || r_total == 0) return {};
  return make_prf(static_cast<double>(hits) / static_cast<double>(c_total),
                  static_cast<double>(hits) / static_cast<double>(r_total));
}

RougeScore score_summary(std::span<const std::string> candidate_sentences,
                         std::span<const std::string> reference_sentences) {
  const Tokens c = join_tokens(candidate_sentences);
  const Tokens r = join_tokens(reference_sentences);
  RougeScore s;
  s.rouge1 = rouge_n(c, r, 1);
  s.rouge2 = rouge_n(c, r, 2);
  const auto cs = sentence_tokens(candidate_sentences);
  const auto rs = sentence_tokens(reference_sentences);
  s.rougeL = rouge_l(cs, rs);
  return s;
}

double oracle_objective(std::span<const std::string> candidate_sentences,
                        std::span<const std::string> reference_sentences) {
  const Tokens c = join_tokens(candidate_sentences);
  const Tokens r = join_tokens(reference_sentences);
  return 0.5 * (rouge_n(c, r, 1).f1 + rouge_n(c, r, 2).f1);
}

std::vector<std::size_t> oracle_extract(const corpus::Document& doc, std::size_t max_sentences) {
  if (!doc.summary) throw DataError(fmt::format("document {} has no reference summary", doc.doc_id));
  const auto& ref = *doc.summary;
  std::vector<std::size_t> picked;
  double best_so_far = 0.0;
  while (picked.size() < std::min(max_sentences, doc.sentences.size())) {
    double best = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
      if (std::find(picked.begin(), picked.end(), i) != picked.end()) continue;
      auto trial = picked;
      trial.push_back(i);
      std::sort(trial.begin(), trial.end());
      std::vector<std::string> sents;
      for (auto k : trial) sents.push_back(doc.sentences[k]);
      const double v = oracle_objective(sents, ref);
      if (v > best) {
        best = v;
        best_i = i;
      }
    }
    if (!picked.empty() && best <= best_so_far) break;
    picked.push_back(best_i);
    best_so_far = best;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<std::size_t> lead_k(std::size_t num_sentences, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, num_sentences); ++i) out.push_back(i);
  return out;
}

CorpusEvaluation evaluate_corpus(std::span<const SystemOutput> summaries,
                                 std::span<const corpus::Document> docs) {
  std::unordered_map<std::string, const corpus::Document*> by_id;
  for (const auto& d : docs) by_id.emplace(d.doc_id, &d);
  CorpusEvaluation ev;
  RougeScore total;
  for (const auto& s : summaries) {
    auto it = by_id.find(s.doc_id);
    if (it == by_id.end()) {
      ev.errors.push_back(fmt::format("{}: no such document in the corpus", s.doc_id));
      continue;
    }
    if (!it->second->summary) {
      ev.errors.push_back(fmt::format("{}: document has no reference summary", s.doc_id));
      continue;
    }
    const auto sc = score_summary(s.sentences, *it->second->summary);
    for (auto [acc, add] : {std::pair{&total.rouge1, &sc.rouge1}, std::pair{&total.rouge2, &sc.rouge2},
                            std::pair{&total.rougeL, &sc.rougeL}}) {
      acc->precision += add->precision;
      acc->recall += add->recall;
      acc->f1 += add->f1;
    }
    ++ev.documents;
  }
  if (ev.documents > 0) {
    const double k = static_cast<double>(ev.documents);
    for (Prf* p : {&total.rouge1, &total.rouge2, &total.rougeL}) {
      p->precision /= k;
      p->recall /= k;
      p->f1 /= k;
    }
  }
  ev.mean = total;
  return ev;
}

void write_metric_csv(std::ostream& out,
                      std::span<const std::pair<std::string, RougeScore>> systems) {
  out << "system,metric,precision,recall,f1\n";
  for (const auto& [name, s] : systems) {
    for (const auto& [metric, p] : {std::pair{"rouge-1", s.rouge1}, std::pair{"rouge-2", s.rouge2},
                                    std::pair{"rouge-l", s.rougeL}}) {
      out << fmt::format("{},{},{:.6f},{:.6f},{:.6f}\n", name, metric, p.precision, p.recall, p.f1);
    }
  }
}

}  // namespace stas::eval
