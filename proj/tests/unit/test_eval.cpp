#include <bit>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "stas/corpus/synthetic.hpp"
#include "stas/errors.hpp"
#include "stas/eval/positions.hpp"
#include "stas/eval/rouge.hpp"
#include "stas/random.hpp"

using namespace stas;
using eval::Tokens;

namespace {

Tokens toks(const std::string& s) { return eval::rouge_tokens(s); }

void check_prf(const eval::Prf& got, double p, double r, double f) {
  CHECK(std::abs(got.precision - p) < 1e-12);
  CHECK(std::abs(got.recall - r) < 1e-12);
  CHECK(std::abs(got.f1 - f) < 1e-12);
}

eval::Prf rl(std::vector<std::string> cand, std::vector<std::string> ref) {
  std::vector<Tokens> c, r;
  for (auto& s : cand) c.push_back(toks(s));
  for (auto& s : ref) r.push_back(toks(s));
  return eval::rouge_l(c, r);
}

}  // namespace

TEST_CASE("rouge fixture suite") {
  // 1-2: partial unigram and bigram overlap
  check_prf(eval::rouge_n(toks("the cat"), toks("the cat sat"), 1), 1.0, 2.0 / 3, 0.8);
  check_prf(eval::rouge_n(toks("the cat"), toks("the cat sat"), 2), 1.0, 0.5, 2.0 / 3);
  // 3: identical text, every n up to the length
  for (std::size_t n = 1; n <= 3; ++n) check_prf(eval::rouge_n(toks("a b c"), toks("a b c"), n), 1, 1, 1);
  // 4: clipping
  check_prf(eval::rouge_n(toks("the the the"), toks("the cat"), 1), 1.0 / 3, 0.5, 0.4);
  // 5: disjoint
  check_prf(eval::rouge_n(toks("x y"), toks("a b"), 1), 0, 0, 0);
  // 6: no candidate bigrams
  check_prf(eval::rouge_n(toks("a"), toks("a b"), 2), 0, 0, 0);
  // 7: single-sentence LCS
  check_prf(rl({"a b c d"}, {"a c"}), 0.5, 1.0, 2.0 / 3);
  check_prf(rl({"a c"}, {"a b c d"}), 1.0, 0.5, 2.0 / 3);
  // 8: union LCS across two candidate sentences
  check_prf(rl({"w1 w2 w6 w7 w8", "w1 w3 w8 w9 w5"}, {"w1 w2 w3 w4 w5"}), 0.4, 0.8, 8.0 / 15);
  // 9: several reference sentences
  check_prf(rl({"a b c d"}, {"a b", "c d"}), 1, 1, 1);
  // 10: punctuation and case are ignored
  const auto s = eval::score_summary(std::vector<std::string>{"The Cat, sat!"},
                                     std::vector<std::string>{"the cat sat"});
  check_prf(s.rouge1, 1, 1, 1);
  check_prf(s.rouge2, 1, 1, 1);
  check_prf(s.rougeL, 1, 1, 1);
}

TEST_CASE("rouge_n rejects n = 0") {
  CHECK_THROWS_AS(eval::rouge_n(toks("a"), toks("a"), 0), ConfigError);
}

TEST_CASE("rouge symmetry and self-score") {
  Rng rng(3);
  const std::vector<std::string> words{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 100; ++trial) {
    Tokens x, y;
    for (std::size_t k = 0, n = 1 + rng.below(8); k < n; ++k) x.push_back(words[rng.below(5)]);
    for (std::size_t k = 0, n = 1 + rng.below(8); k < n; ++k) y.push_back(words[rng.below(5)]);
    for (std::size_t n = 1; n <= 2; ++n) {
      const auto xy = eval::rouge_n(x, y, n);
      const auto yx = eval::rouge_n(y, x, n);
      CHECK(xy.precision == doctest::Approx(yx.recall));
      CHECK(xy.recall == doctest::Approx(yx.precision));
      CHECK(xy.f1 == doctest::Approx(yx.f1));
    }
    CHECK(eval::rouge_n(x, x, 1).f1 == 1.0);
    // single sentences reduce to plain LCS
    const auto l = eval::rouge_l(std::vector<Tokens>{x}, std::vector<Tokens>{y});
    const double lcs = static_cast<double>(eval::lcs_length(x, y));
    CHECK(l.precision == doctest::Approx(lcs / static_cast<double>(x.size())));
    CHECK(l.recall == doctest::Approx(lcs / static_cast<double>(y.size())));
  }
}

TEST_CASE("clipping never exceeds reference counts") {
  const auto p = eval::rouge_n(toks("a a a a a b"), toks("a b b"), 1);
  CHECK(p.precision == doctest::Approx(2.0 / 6));
  CHECK(p.recall == doctest::Approx(2.0 / 3));
}

TEST_CASE("oracle picks a verbatim reference sentence first") {
  corpus::Document d{"d", {"alpha beta gamma", "delta epsilon zeta", "eta theta iota"}, std::vector<std::string>{"delta epsilon zeta"}};
  CHECK(eval::oracle_extract(d) == std::vector<std::size_t>{1});
  corpus::Document none{"n", {"x y", "z w"}, std::vector<std::string>{"q r"}};
  CHECK(eval::oracle_extract(none).size() == 1);
  corpus::Document missing{"m", {"x"}, std::nullopt};
  CHECK_THROWS_AS(eval::oracle_extract(missing), DataError);
}

TEST_CASE("greedy oracle agrees with exhaustive search") {
  corpus::SyntheticConfig cfg;
  cfg.num_docs = 50;
  cfg.min_sentences = 3;
  cfg.max_sentences = 6;
  cfg.seed = 11;
  const auto docs = corpus::make_synthetic_corpus(cfg);
  std::size_t agree = 0;
  for (const auto& d : docs) {
    const auto& ref = *d.summary;
    auto value = [&](const std::vector<std::size_t>& idx) {
      std::vector<std::string> s;
      for (auto i : idx) s.push_back(d.sentences[i]);
      return eval::oracle_objective(s, ref);
    };
    const std::size_t n = d.sentences.size();
    double best = -1.0;
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
      if (std::popcount(mask) > 3) continue;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) idx.push_back(i);
      best = std::max(best, value(idx));
    }
    const auto greedy = eval::oracle_extract(d, 3);
    CHECK(greedy.size() <= 3);
    if (std::abs(value(greedy) - best) < 1e-12) ++agree;
  }
  CHECK(agree >= 45);
}

TEST_CASE("lead_k") {
  CHECK(eval::lead_k(5, 3) == std::vector<std::size_t>{0, 1, 2});
  CHECK(eval::lead_k(2, 3) == std::vector<std::size_t>{0, 1});
  CHECK(eval::lead_k(5, 0).empty());
}

TEST_CASE("evaluate_corpus averages per-document scores") {
  std::vector<corpus::Document> docs{
      {"a", {"the cat sat", "on the mat"}, std::vector<std::string>{"the cat sat"}},
      {"b", {"a b c d", "e f"}, std::vector<std::string>{"a c", "f"}},
      {"c", {"x y z"}, std::vector<std::string>{"x z q"}},
      {"nosum", {"p"}, std::nullopt}};
  std::vector<eval::SystemOutput> outs{{"a", {"the cat sat", "on the mat"}},
                                       {"b", {"a b c d"}},
                                       {"c", {"x y z"}},
                                       {"nosum", {"p"}},
                                       {"ghost", {"p"}}};
  const auto ev = eval::evaluate_corpus(outs, docs);
  CHECK(ev.documents == 3);
  CHECK(ev.errors.size() == 2);
  eval::RougeScore sum;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto s = eval::score_summary(outs[k].sentences, *docs[k].summary);
    sum.rouge1.f1 += s.rouge1.f1 / 3;
    sum.rouge2.recall += s.rouge2.recall / 3;
    sum.rougeL.precision += s.rougeL.precision / 3;
  }
  CHECK(ev.mean.rouge1.f1 == doctest::Approx(sum.rouge1.f1).epsilon(1e-14));
  CHECK(ev.mean.rouge2.recall == doctest::Approx(sum.rouge2.recall).epsilon(1e-14));
  CHECK(ev.mean.rougeL.precision == doctest::Approx(sum.rougeL.precision).epsilon(1e-14));

  std::vector<eval::SystemOutput> perfect{{"a", {"the cat sat"}}};
  const auto one = eval::evaluate_corpus(perfect, docs);
  CHECK(one.mean.rouge1.f1 == 1.0);
  CHECK(one.mean.rouge2.f1 == 1.0);
  CHECK(one.mean.rougeL.f1 == 1.0);

  std::ostringstream csv;
  eval::write_metric_csv(csv, std::vector<std::pair<std::string, eval::RougeScore>>{{"sys", one.mean}});
  CHECK(csv.str() ==
        "system,metric,precision,recall,f1\n"
        "sys,rouge-1,1.000000,1.000000,1.000000\n"
        "sys,rouge-2,1.000000,1.000000,1.000000\n"
        "sys,rouge-l,1.000000,1.000000,1.000000\n");
}

TEST_CASE("position histogram") {
  eval::PositionHistogram h;
  CHECK(h.K() == 12);
  h.add(std::vector<std::size_t>{0, 1, 2});
  h.add(std::vector<std::size_t>{0, 13});
  CHECK(h.counts()[0] == 2.0);
  CHECK(h.counts()[1] == 1.0);
  const auto n = h.normalized();
  CHECK(n[0] == doctest::Approx(0.5));
  double total = 0;
  for (double x : n) total += x;
  CHECK(total == doctest::Approx(1.0));
  for (double x : eval::PositionHistogram(4).normalized()) CHECK(x == 0.0);
  CHECK_THROWS_AS(eval::PositionHistogram(0), ConfigError);

  std::ostringstream csv;
  eval::write_histogram_csv(csv, std::vector<std::pair<std::string, eval::PositionHistogram>>{
                                     {"m", eval::PositionHistogram::from_distribution({1, 3})}});
  CHECK(csv.str() == "position,m\n1,0.250000\n2,0.750000\n");
}

TEST_CASE("position_kl") {
  const auto p = eval::PositionHistogram::from_distribution({0.5, 0.5});
  const auto q = eval::PositionHistogram::from_distribution({0.25, 0.75});
  CHECK(eval::position_kl(p, p) == doctest::Approx(0.0));
  CHECK(std::abs(eval::position_kl(p, q) - (0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0))) < 1e-12);
  CHECK(std::abs(eval::position_kl(p, q) - 0.1438) < 1e-4);
  const auto zero_q = eval::PositionHistogram::from_distribution({1.0, 0.0});
  const double kl = eval::position_kl(p, zero_q);
  CHECK(std::isfinite(kl));
  CHECK(kl > 5.0);
  CHECK(eval::position_kl(zero_q, p) >= 0.0);
  CHECK_THROWS_AS(eval::position_kl(p, eval::PositionHistogram(3)), DimensionError);
}
