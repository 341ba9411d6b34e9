// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "stas/ad/gradcheck.hpp"
#include "stas/cli/cli.hpp"
#include "stas/corpus/instances.hpp"
#include "stas/corpus/synthetic.hpp"
#include "stas/corpus/vocab.hpp"
#include "stas/eval/positions.hpp"
#include "stas/eval/rouge.hpp"
#include "stas/pretrain/train.hpp"
#include "stas/rank/rank.hpp"

using namespace stas;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

corpus::EncodedDocument random_doc(Rng& rng, std::size_t sentences, std::size_t vocab) {
  std::vector<corpus::TokenList> s;
  for (std::size_t i = 0; i < sentences; ++i) {
    corpus::TokenList t{corpus::kBos};
    for (std::size_t k = 0, len = 1 + rng.below(5); k < len; ++k)
      t.push_back(corpus::kNumReserved + rng.below(vocab - corpus::kNumReserved));
    t.push_back(corpus::kEos);
    s.push_back(std::move(t));
  }
  return corpus::EncodedDocument::from_sentences(std::move(s));
}

model::ModelConfig tiny(std::size_t vocab) {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.token_layers = 1;
  c.sentence_layers = 1;
  c.decoder_layers = 1;
  c.max_tokens = 128;
  c.max_sentences = 16;
  c.vocab_size = vocab;
  c.init_range = 0.3;
  return c;
}

// --- criteria ---------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  auto results = ad::check_all_ops(1);
  results.push_back(pretrain::check_joint_loss(1));
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed && r.max_rel_error < 1e-4;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
  }
  return {all && secs < 60.0, fmt::format("{} checks, worst {} = {:.2e}, {:.1f} s", results.size(), worst_name,
                                          worst, secs)};
}

Outcome attention_contract() {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    model::ModelConfig c;
    c.n_heads = 1 + rng.below(4);
    c.d_model = 4 * c.n_heads;
    c.token_layers = 1 + rng.below(3);
    c.sentence_layers = 1 + rng.below(3);
    c.local_token_layers = rng.below(c.token_layers + 1);
    c.decoder_layers = 1;
    c.max_tokens = 128;
    c.max_sentences = 16;
    c.vocab_size = 30;
    c.init_range = rng.uniform(0.02, 1.0);
    const model::StasModel m(c, 100 + static_cast<std::uint64_t>(trial));
    const auto doc = random_doc(rng, 1 + rng.below(10), c.vocab_size);
    const auto A = m.encode(doc).A;
    for (std::size_t i = 0; i < A.n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < A.n; ++j) {
        if (A.at(i, j) < 0.0) return {false, fmt::format("negative weight in trial {}", trial)};
        s += A.at(i, j);
      }
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  return {worst <= 1e-9, fmt::format("100 configs, max |row sum - 1| = {:.2e}", worst)};
}

// Power iteration on the diagonal-zeroed attention graph, written with Eigen.
Eigen::VectorXd power_iteration(const model::AttentionMatrix& A, bool transposed, int rounds) {
  const auto n = static_cast<Eigen::Index>(A.n);
  Eigen::MatrixXd M(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) M(i, j) = A.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  M.diagonal().setZero();
  const Eigen::MatrixXd P = transposed ? Eigen::MatrixXd(M.transpose()) : M;
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int t = 0; t < rounds; ++t) {
    Eigen::VectorXd next = P * v;
    next /= next.sum();
    v = next;
  }
  return v;
}

Outcome ranking_oracle() {
  Rng rng(77);
  double worst = 0.0;
  int cases = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 3);
    const model::StasModel m(tiny(40), 500 + static_cast<std::uint64_t>(trial));
    const auto A = m.encode(random_doc(rng, n, 40)).A;
    for (auto dir : {rank::AttentionDirection::JI, rank::AttentionDirection::IJ}) {
      for (std::size_t T : {1u, 3u, 200u}) {
        rank::RankConfig cfg;
        cfg.gamma1 = 0.0;
        cfg.gamma2 = 1.0;
        cfg.uniform_r_tilde = true;
        cfg.direction = dir;
        cfg.T = T;
        cfg.max_iterations = std::max<std::size_t>(3, T);
        const auto s = rank::combine_iterate(std::vector<double>(n, 0.0), A, cfg);
        const auto v = power_iteration(A, dir == rank::AttentionDirection::JI, static_cast<int>(T));
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(s.r[i] - v(static_cast<Eigen::Index>(i))));
        ++cases;
      }
    }
  }
  return {worst <= 1e-9, fmt::format("{} cases (3-5 sentences, T in 1/3/200, JI and IJ), max diff {:.2e}", cases, worst)};
}

Outcome hand_propagation() {
  const model::AttentionMatrix A{2, {0, 1, 1, 0}};
  const std::vector<double> rt{0.6, 0.4};
  const auto ji = rank::propagate(rt, A, rank::AttentionDirection::JI);
  const bool ji_ok = std::abs(ji[0] - 0.4) < 1e-15 && std::abs(ji[1] - 0.6) < 1e-15;

  const model::AttentionMatrix B{2, {0.3, 0.7, 0.9, 0.1}};
  const model::AttentionMatrix Bt{2, {0.3, 0.9, 0.7, 0.1}};
  const auto ij = rank::propagate(rt, B, rank::AttentionDirection::IJ);
  const auto ji_t = rank::propagate(rt, Bt, rank::AttentionDirection::JI);
  const bool ij_ok = std::abs(ij[0] - 0.7 * 0.4) < 1e-15 && std::abs(ij[1] - 0.9 * 0.6) < 1e-15 &&
                     ij[0] == ji_t[0] && ij[1] == ji_t[1];
  return {ji_ok && ij_ok, fmt::format("JI r' = ({}, {}); IJ on asymmetric A equals JI on its transpose", ji[0], ji[1])};
}

Outcome rouge_oracle() {
  auto t = [](const char* s) { return eval::rouge_tokens(s); };
  auto rl = [&](std::vector<const char*> c, std::vector<const char*> r) {
    std::vector<eval::Tokens> cs, rs;
    for (auto* s : c) cs.push_back(t(s));
    for (auto* s : r) rs.push_back(t(s));
    return eval::rouge_l(cs, rs);
  };
  struct Fixture {
    eval::Prf got;
    double p, r, f;
  };
  const std::vector<Fixture> fixtures{
      {eval::rouge_n(t("the cat"), t("the cat sat"), 1), 1.0, 2.0 / 3, 0.8},
      {eval::rouge_n(t("the cat"), t("the cat sat"), 2), 1.0, 0.5, 2.0 / 3},
      {eval::rouge_n(t("a b c"), t("a b c"), 3), 1, 1, 1},
      {eval::rouge_n(t("the the the"), t("the cat"), 1), 1.0 / 3, 0.5, 0.4},
      {eval::rouge_n(t("x y"), t("a b"), 1), 0, 0, 0},
      {eval::rouge_n(t("a"), t("a b"), 2), 0, 0, 0},
      {rl({"a c"}, {"a b c d"}), 1.0, 0.5, 2.0 / 3},
      {rl({"w1 w2 w6 w7 w8", "w1 w3 w8 w9 w5"}, {"w1 w2 w3 w4 w5"}), 0.4, 0.8, 8.0 / 15},
      {rl({"a b c d"}, {"a b", "c d"}), 1, 1, 1},
      {rl({"p q"}, {"x y z"}), 0, 0, 0},
  };
  std::size_t exact = 0;
  for (const auto& f : fixtures)
    if (std::abs(f.got.precision - f.p) < 1e-12 && std::abs(f.got.recall - f.r) < 1e-12 &&
        std::abs(f.got.f1 - f.f) < 1e-12)
      ++exact;

  corpus::SyntheticConfig sc;
  sc.num_docs = 50;
  sc.min_sentences = 3;
  sc.max_sentences = 6;
  sc.seed = 11;
  std::size_t agree = 0;
  const auto docs = corpus::make_synthetic_corpus(sc);
  for (const auto& d : docs) {
    auto value = [&](const std::vector<std::size_t>& idx) {
      std::vector<std::string> s;
      for (auto i : idx) s.push_back(d.sentences[i]);
      return eval::oracle_objective(s, *d.summary);
    };
    double best = -1.0;
    const auto n = d.sentences.size();
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
      if (std::popcount(mask) > 3) continue;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) idx.push_back(i);
      best = std::max(best, value(idx));
    }
    if (std::abs(value(eval::oracle_extract(d, 3)) - best) < 1e-12) ++agree;
  }
  const double rate = static_cast<double>(agree) / static_cast<double>(docs.size());
  return {exact == fixtures.size() && rate >= 0.9,
          fmt::format("{}/{} fixtures exact; greedy oracle optimal on {}/{} docs", exact, fixtures.size(), agree,
                      docs.size())};
}

// Shared by the smoke and KL criteria.
struct SmokeRun {
  std::vector<corpus::Document> docs;
  corpus::Vocab vocab;
  std::unique_ptr<model::StasModel> model;
  pretrain::TrainReport report;
  double accuracy = 0.0;
};

SmokeRun& smoke_run() {
  static SmokeRun run = [] {
    SmokeRun r;
    r.docs = corpus::make_synthetic_corpus({});
    r.vocab = corpus::build_vocab(r.docs, 1);
    model::ModelConfig mc;
    mc.d_model = 32;
    mc.n_heads = 4;
    mc.token_layers = 2;
    mc.sentence_layers = 2;
    mc.decoder_layers = 1;
    mc.local_token_layers = 1;
    mc.max_tokens = 128;
    mc.max_sentences = 16;
    mc.vocab_size = r.vocab.size();
    std::vector<corpus::EncodedDocument> enc;
    for (const auto& d : r.docs) enc.push_back(corpus::encode(d, r.vocab, {mc.max_tokens, mc.max_sentences}));
    r.model = std::make_unique<model::StasModel>(mc, 1);
    pretrain::TrainConfig tc;
    tc.epochs = 500;
    tc.batch_size = 8;
    tc.encoder_lr = 3e-3;
    tc.decoder_lr = 3e-3;
    tc.seed = 1;
    r.report = pretrain::train(*r.model, enc, tc);
    std::vector<corpus::ShuffledInstance> shuffles;
    Rng rng(99);
    for (const auto& e : enc)
      for (int k = 0; k < 4; ++k) shuffles.push_back(corpus::make_shuffled(e, rng));
    r.accuracy = pretrain::pointer_accuracy(*r.model, shuffles);
    return r;
  }();
  return run;
}

Outcome training_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& r = smoke_run();
  const double secs = seconds_since(t0);
  const auto& steps = r.report.steps;
  if (steps.size() != 500) return {false, fmt::format("expected 500 steps, ran {}", steps.size())};
  double tail = 0.0;
  for (std::size_t i = steps.size() - 10; i < steps.size(); ++i) tail += steps[i].total / 10.0;
  const double first = steps.front().total;
  const double reduction = 1.0 - tail / first;
  return {reduction >= 0.9 && r.accuracy >= 0.9 && secs < 300.0 && r.vocab.size() <= 200,
          fmt::format("vocab {}, loss {:.4f} -> {:.4f} (last step {:.4f}, mean of last 10 steps {:.4f}), "
                      "reduction {:.1f}%, pointer accuracy {:.3f}, {:.0f} s",
                      r.vocab.size(), first, tail, steps.back().total, tail, 100.0 * reduction, r.accuracy, secs)};
}

Outcome ablation_semantics() {
  const auto docs = corpus::make_synthetic_corpus({});
  const auto vocab = corpus::build_vocab(docs, 1);
  const auto cfg = tiny(vocab.size());

  // zero r': selection follows descending r-hat
  const model::StasModel m(cfg, 3);
  rank::SummarizeOptions opts;
  opts.limits = {cfg.max_tokens, cfg.max_sentences};
  opts.rank.zero_r_prime = true;
  opts.rank.use_trigram_blocking = false;
  bool order_ok = true;
  for (const auto& s : rank::summarize(m, docs, vocab, opts)) {
    std::vector<std::size_t> by_r(s.scores.r.size()), by_hat(s.scores.r_hat.size());
    std::iota(by_r.begin(), by_r.end(), 0);
    std::iota(by_hat.begin(), by_hat.end(), 0);
    std::stable_sort(by_r.begin(), by_r.end(), [&](auto a, auto b) { return s.scores.r[a] > s.scores.r[b]; });
    std::stable_sort(by_hat.begin(), by_hat.end(),
                     [&](auto a, auto b) { return s.scores.r_hat[a] > s.scores.r_hat[b]; });
    order_ok = order_ok && by_r == by_hat;
  }

  // msp only: pointer parameters untouched
  std::vector<corpus::EncodedDocument> enc;
  for (const auto& d : docs) enc.push_back(corpus::encode(d, vocab, {cfg.max_tokens, cfg.max_sentences}));
  model::StasModel trained(cfg, 5);
  const model::StasModel init(cfg, 5);
  pretrain::TrainConfig tc;
  tc.epochs = 3;
  tc.enable_ss = false;
  tc.encoder_lr = 1e-2;
  tc.decoder_lr = 1e-2;
  pretrain::train(trained, enc, tc);
  bool ptr_same = true, others_moved = false;
  for (const auto& [name, t] : trained.params().all()) {
    const auto a = t.values();
    const auto b = init.params().get(name).values();
    const bool same = std::equal(a.begin(), a.end(), b.begin(), b.end());
    if (model::StasModel::is_pointer_parameter(name))
      ptr_same = ptr_same && same;
    else
      others_moved = others_moved || !same;
  }

  // trigram blocking on a constructed fixture
  const std::vector<std::string> sents{"the quick brown fox jumps", "A quick brown fox sleeps", "the lazy dog",
                                       "lazy dog barks loudly", "the lazy dog barks", "red green blue"};
  const std::vector<double> scores{0.30, 0.25, 0.05, 0.20, 0.15, 0.05};
  rank::RankConfig rc;
  rc.summary_len = 6;
  const auto picked = rank::select_summary(sents, scores, rc);
  const bool block_ok = picked == std::vector<std::size_t>{0, 2, 3, 5};
  std::multiset<std::string> grams;
  for (auto i : picked) {
    const auto toks = rank::raw_tokens(sents[i]);
    std::set<std::string> own;
    for (std::size_t k = 0; k + 2 < toks.size(); ++k) own.insert(toks[k] + " " + toks[k + 1] + " " + toks[k + 2]);
    grams.insert(own.begin(), own.end());
  }
  bool disjoint = true;
  for (const auto& g : grams) disjoint = disjoint && grams.count(g) == 1;

  return {order_ok && ptr_same && others_moved && block_ok && disjoint,
          fmt::format("zero-r' order {}, msp-only pointer params {}, blocking picks {{{}}}",
                      order_ok ? "matches r-hat" : "DIFFERS", ptr_same ? "unchanged" : "CHANGED",
                      fmt::join(picked, ","))};
}

Outcome masking_statistics() {
  Rng rng(31337);
  const std::size_t n = 20;
  std::size_t selected = 0, masked = 0, random = 0, kept = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    for (const auto& d : corpus::draw_mask_plan(n, 100, rng)) {
      ++selected;
      switch (d.action) {
        case corpus::MaskAction::Masked: ++masked; break;
        case corpus::MaskAction::RandomReplaced: ++random; break;
        case corpus::MaskAction::Kept: ++kept; break;
      }
    }
  }
  const double rate = static_cast<double>(selected) / (10000.0 * n);
  const double s = static_cast<double>(selected);
  const double pm = masked / s, pr = random / s, pk = kept / s;
  const bool ok = std::abs(rate - 0.15) <= 0.02 && std::abs(pm - 0.8) <= 0.03 && std::abs(pr - 0.1) <= 0.03 &&
                  std::abs(pk - 0.1) <= 0.03;
  return {ok, fmt::format("10000 draws of {} sentences: rate {:.2f}%, split {:.1f}/{:.1f}/{:.1f}", n, 100 * rate,
                          100 * pm, 100 * pr, 100 * pk)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// The whole CLI pipeline inside `dir`, with relative paths.
bool run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto cwd = fs::current_path();
  fs::current_path(dir);
  std::ostringstream out, err;
  const std::vector<std::string> small{"--set", "model.d_model=16", "--set", "model.n_heads=2",
                                       "--set", "model.max_tokens=128", "--set", "model.max_sentences=16"};
  std::vector<std::vector<std::string>> steps{
      {"synth", "--out", "corpus.jsonl", "--seed", "5"},
      {"build-vocab", "--corpus", "corpus.jsonl", "--out", "vocab.txt"},
      {"pretrain", "--corpus", "corpus.jsonl", "--vocab", "vocab.txt", "--out", "model.ckpt", "--epochs", "5"},
      {"summarize", "--corpus", "corpus.jsonl", "--vocab", "vocab.txt", "--checkpoint", "model.ckpt", "--out",
       "summaries.jsonl", "--threads", "3"},
      {"evaluate", "--corpus", "corpus.jsonl", "--summaries", "stas=summaries.jsonl", "--baseline", "lead3",
       "--baseline", "oracle", "--out", "rouge.csv"},
      {"positions", "--corpus", "corpus.jsonl", "--summaries", "stas=summaries.jsonl", "--baseline", "lead3",
       "--out", "positions.csv", "--kl-out", "kl.csv"},
  };
  steps[2].insert(steps[2].end(), small.begin(), small.end());
  bool ok = true;
  for (const auto& s : steps) ok = ok && cli::run(s, out, err) == 0;
  fs::current_path(cwd);
  return ok;
}

Outcome determinism() {
  const auto base = fs::temp_directory_path() / fmt::format("stas-acceptance-{}", std::chrono::steady_clock::now().time_since_epoch().count());
  const auto a = base / "a", b = base / "b";
  if (!run_pipeline(a) || !run_pipeline(b)) {
    fs::remove_all(base);
    return {false, "pipeline command failed"};
  }
  std::size_t files = 0, identical = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    if (slurp(e.path()) == slurp(b / e.path().filename())) ++identical;
  }
  fs::remove_all(base);
  return {files >= 10 && files == identical,
          fmt::format("pretrain->summarize->evaluate->positions twice: {}/{} output files byte-identical", identical,
                      files)};
}

Outcome kl_analysis() {
  const auto p = eval::PositionHistogram::from_distribution({0.5, 0.5});
  const auto q = eval::PositionHistogram::from_distribution({0.25, 0.75});
  const double same = eval::position_kl(p, p);
  const double direct = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  const double kl = eval::position_kl(p, q);
  const bool fixtures_ok = std::abs(same) < 1e-15 && std::abs(kl - direct) < 1e-12 && std::abs(kl - 0.1438) < 1e-4;

  auto& r = smoke_run();
  rank::SummarizeOptions opts;
  opts.limits = {r.model->config().max_tokens, r.model->config().max_sentences};
  eval::PositionHistogram model_h, lead_h, oracle_h;
  for (const auto& s : rank::summarize(*r.model, r.docs, r.vocab, opts)) model_h.add(s.selected);
  for (const auto& d : r.docs) {
    lead_h.add(eval::lead_k(d.sentences.size(), 3));
    oracle_h.add(eval::oracle_extract(d, 3));
  }
  const double kl_lead = eval::position_kl(lead_h, oracle_h);
  const double kl_model = eval::position_kl(model_h, oracle_h);
  return {fixtures_ok && kl_lead > kl_model,
          fmt::format("KL(p||p) = {}, KL((.5,.5)||(.25,.75)) = {:.6f}; synthetic corpus KL(LEAD-3||ORACLE) = {:.4f}, "
                      "KL(model||ORACLE) = {:.4f}",
                      same, kl, kl_lead, kl_model)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"attention contract", attention_contract},
      {"ranking oracle", ranking_oracle},
      {"hand-computed propagation", hand_propagation},
      {"ROUGE oracle", rouge_oracle},
      {"training smoke", training_smoke},
      {"ablation semantics", ablation_semantics},
      {"masking statistics", masking_statistics},
      {"determinism", determinism},
      {"KL analysis", kl_analysis},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  }
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - static_cast<std::size_t>(failures),
                           criteria.size())
            << std::endl;
  return failures == 0 ? 0 : 1;
}
