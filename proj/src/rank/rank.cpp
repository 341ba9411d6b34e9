#include "stas/rank/rank.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "json.hpp"
#include "stas/ad/ops.hpp"
#include "stas/corpus/instances.hpp"
#include "stas/errors.hpp"

namespace stas::rank {

namespace {

std::atomic<std::uint64_t> g_masked_forwards{0};

using json = nlohmann::json;

void normalize_in_place(std::vector<double>& v) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  if (total > 0.0) {
    for (auto& x : v) x /= total;
  } else {
    std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(v.size()));
  }
}

}  // namespace

void RankConfig::validate() const {
  if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0)) throw ConfigError("gamma1 and gamma2 must be nonnegative");
  if (gamma1 == 0.0 && gamma2 == 0.0) throw ConfigError("gamma1 and gamma2 cannot both be zero");
  if (T > max_iterations)
    throw ConfigError(fmt::format("T = {} exceeds the allowed maximum of {}", T, max_iterations));
  if (zero_r_prime && gamma1 == 0.0) throw ConfigError("zero_r_prime needs gamma1 > 0");
}

std::vector<double> token_probabilities(const model::StasModel& model,
                                        const corpus::EncodedDocument& doc, std::size_t i) {
  if (i >= doc.num_sentences())
    throw IndexError(fmt::format("sentence {} outside document of {}", i, doc.num_sentences()));
  ad::NoGradGuard guard;
  const auto masked = corpus::mask_sentence(doc, i);
  const auto enc = model.encode(masked);
  g_masked_forwards.fetch_add(1, std::memory_order_relaxed);
  const auto out = model.msp_decode(doc.sentences[i], ad::slice_rows(enc.H, i, 1));
  std::vector<double> probs;
  for (double lp : out.target_log_probs.values()) probs.push_back(std::exp(lp));
  return probs;
}

double sentence_prob(const model::StasModel& model, const corpus::EncodedDocument& doc,
                     std::size_t i) {
  const auto p = token_probabilities(model, doc, i);
  return std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
}

std::uint64_t masked_forward_count() { return g_masked_forwards.load(); }
void reset_masked_forward_count() { g_masked_forwards.store(0); }

std::vector<double> normalize_scores(std::span<const double> r_hat) {
  if (r_hat.empty()) throw ContractError("normalize_scores: no scores");
  double total = 0.0;
  for (double x : r_hat) {
    if (!(x >= 0.0)) throw ContractError("normalize_scores: negative or NaN score");
    total += x;
  }
  if (total <= 0.0) throw ContractError("normalize_scores: all scores are zero");
  std::vector<double> out(r_hat.begin(), r_hat.end());
  for (auto& x : out) x /= total;
  return out;
}

std::vector<double> propagate(std::span<const double> r_tilde, const model::AttentionMatrix& A,
                              AttentionDirection direction) {
  const std::size_t n = r_tilde.size();
  if (A.n != n || A.weights.size() != n * n)
    throw DimensionError(fmt::format("propagate: {} scores against a {}x{} attention matrix", n, A.n, A.n));
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      s += (direction == AttentionDirection::JI ? A.at(j, i) : A.at(i, j)) * r_tilde[j];
    }
    out[i] = s;
  }
  return out;
}

SentenceScores combine_iterate(std::span<const double> r_tilde, const model::AttentionMatrix& A,
                               const RankConfig& config) {
  config.validate();
  const std::size_t n = r_tilde.size();
  if (n == 0) throw ContractError("combine_iterate: empty document");
  SentenceScores s;
  s.r_tilde.assign(r_tilde.begin(), r_tilde.end());
  if (config.uniform_r_tilde) s.r_tilde.assign(n, 1.0 / static_cast<double>(n));
  s.r_prime.assign(n, 0.0);
  std::vector<double> current = s.r_tilde;
  for (std::size_t t = 0; t < config.T; ++t) {
    if (config.zero_r_prime)
      std::fill(s.r_prime.begin(), s.r_prime.end(), 0.0);
    else
      s.r_prime = propagate(current, A, config.direction);
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = config.gamma1 * current[i] + config.gamma2 * s.r_prime[i];
    if (!config.no_renorm) normalize_in_place(next);
    current = std::move(next);
  }
  s.r = std::move(current);
  return s;
}

std::vector<std::string> raw_tokens(const std::string& sentence) {
  std::vector<std::string> out;
  std::istringstream in(sentence);
  std::string tok;
  while (in >> tok) {
    for (auto& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    out.push_back(tok);
  }
  return out;
}

namespace {

std::set<std::string> trigrams(const std::string& sentence) {
  const auto toks = raw_tokens(sentence);
  std::set<std::string> out;
  for (std::size_t k = 0; k + 2 < toks.size(); ++k) out.insert(toks[k] + ' ' + toks[k + 1] + ' ' + toks[k + 2]);
  return out;
}

}  // namespace

std::vector<std::size_t> select_summary(std::span<const std::string> sentences,
                                        std::span<const double> scores, const RankConfig& config) {
  if (scores.size() > sentences.size())
    throw DimensionError(fmt::format("select_summary: {} scores for {} sentences", scores.size(), sentences.size()));
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> picked;
  std::set<std::string> seen;
  for (std::size_t i : order) {
    if (picked.size() >= config.summary_len) break;
    const auto tri = trigrams(sentences[i]);
    if (config.use_trigram_blocking &&
        std::any_of(tri.begin(), tri.end(), [&](const std::string& g) { return seen.count(g) > 0; }))
      continue;
    picked.push_back(i);
    seen.insert(tri.begin(), tri.end());
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<double> combine_external(std::span<const double> r, std::span<const double> external,
                                     double weight_self) {
  if (r.size() != external.size())
    throw DimensionError(fmt::format("combine_external: {} vs {} scores", r.size(), external.size()));
  if (!(weight_self >= 0.0 && weight_self <= 1.0)) throw ConfigError("weight_self must lie in [0, 1]");
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = weight_self * r[i] + (1.0 - weight_self) * external[i];
  return out;
}

DocumentEvidence analyze_document(const model::StasModel& model, const corpus::EncodedDocument& doc) {
  DocumentEvidence ev;
  {
    ad::NoGradGuard guard;
    ev.A = model.encode(doc).A;
  }
  for (std::size_t i = 0; i < doc.num_sentences(); ++i) ev.r_hat.push_back(sentence_prob(model, doc, i));
  return ev;
}

std::vector<DocumentSummary> summarize(const model::StasModel& model,
                                       std::span<const corpus::Document> docs,
                                       const corpus::Vocab& vocab, const SummarizeOptions& options,
                                       std::size_t* truncated) {
  options.rank.validate();
  std::vector<DocumentSummary> out(docs.size());
  std::vector<char> was_truncated(docs.size(), 0);

  auto work = [&](std::size_t d) {
    const auto& doc = docs[d];
    const auto enc = corpus::encode(doc, vocab, options.limits);
    was_truncated[d] = enc.num_sentences() < doc.sentences.size();
    const auto ev = analyze_document(model, enc);
    auto& s = out[d];
    s.doc_id = doc.doc_id;
    s.scores = combine_iterate(normalize_scores(ev.r_hat), ev.A, options.rank);
    s.scores.r_hat = ev.r_hat;
    std::vector<double> final_scores = s.scores.r;
    if (options.external) {
      auto it = options.external->find(doc.doc_id);
      if (it == options.external->end())
        throw DataError(fmt::format("no external scores for document {}", doc.doc_id));
      if (it->second.size() < enc.num_sentences())
        throw DataError(fmt::format("document {}: {} external scores for {} sentences", doc.doc_id,
                                    it->second.size(), enc.num_sentences()));
      const std::vector<double> ext = normalize_scores(
          std::span<const double>(it->second.data(), enc.num_sentences()));
      final_scores = combine_external(s.scores.r, ext, options.weight_self);
      s.scores.r = final_scores;
    }
    s.selected = select_summary(doc.sentences, final_scores, options.rank);
    for (auto i : s.selected) s.sentences.push_back(doc.sentences[i]);
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, docs.size()));
  if (threads <= 1) {
    for (std::size_t d = 0; d < docs.size(); ++d) work(d);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t d = next++; d < docs.size(); d = next++) work(d);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  if (truncated) *truncated = static_cast<std::size_t>(std::count(was_truncated.begin(), was_truncated.end(), 1));
  return out;
}

void write_summaries(std::ostream& out, std::span<const DocumentSummary> summaries) {
  for (const auto& s : summaries) {
    json j{{"doc_id", s.doc_id},
           {"selected", s.selected},
           {"sentences", s.sentences},
           {"scores",
            {{"r_hat", s.scores.r_hat},
             {"r_tilde", s.scores.r_tilde},
             {"r_prime", s.scores.r_prime},
             {"r", s.scores.r}}}};
    out << j.dump() << '\n';
  }
}

std::vector<DocumentSummary> read_summaries(std::istream& in, const std::string& source) {
  std::vector<DocumentSummary> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      DocumentSummary s;
      s.doc_id = j.at("doc_id").get<std::string>();
      s.selected = j.at("selected").get<std::vector<std::size_t>>();
      if (j.contains("sentences")) s.sentences = j.at("sentences").get<std::vector<std::string>>();
      if (j.contains("scores")) {
        const auto& sc = j.at("scores");
        s.scores.r_hat = sc.value("r_hat", std::vector<double>{});
        s.scores.r_tilde = sc.value("r_tilde", std::vector<double>{});
        s.scores.r_prime = sc.value("r_prime", std::vector<double>{});
        s.scores.r = sc.value("r", std::vector<double>{});
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", source, lineno, e.what()));
    }
  }
  return out;
}

void write_scores(std::ostream& out, const std::map<std::string, std::vector<double>>& scores) {
  for (const auto& [id, v] : scores) out << json{{"doc_id", id}, {"scores", v}}.dump() << '\n';
}

std::map<std::string, std::vector<double>> read_scores(std::istream& in, const std::string& source) {
  std::map<std::string, std::vector<double>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      out[j.at("doc_id").get<std::string>()] = j.at("scores").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", source, lineno, e.what()));
    }
  }
  return out;
}

}  // namespace stas::rank
