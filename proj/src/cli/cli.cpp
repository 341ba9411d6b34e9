#include "stas/cli/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "stas/ad/gradcheck.hpp"
#include "stas/ad/tensor.hpp"
#include "stas/cli/run_config.hpp"
#include "stas/corpus/document.hpp"
#include "stas/corpus/encoded.hpp"
#include "stas/corpus/synthetic.hpp"
#include "stas/corpus/vocab.hpp"
#include "stas/errors.hpp"
#include "stas/eval/positions.hpp"
#include "stas/eval/rouge.hpp"
#include "stas/model/checkpoint.hpp"
#include "stas/pretrain/train.hpp"
#include "stas/rank/rank.hpp"

namespace stas::cli {

namespace {

namespace fs = std::filesystem;

class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Options shared by every subcommand.
struct Common {
  std::string config;
  std::vector<std::string> sets;
  Overrides overrides;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key=value config file");
  sub->add_option("--set", c.sets, "extra key=value override (repeatable)");
  sub->add_option_function<std::string>(
      "--seed", [&c](const std::string& v) { c.overrides.emplace_back("seed", v); }, "random seed");
}

// Adds a flag that maps straight onto one config key.
void add_key(CLI::App* sub, Common& c, const std::string& flag, const std::string& key,
             const std::string& help) {
  sub->add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.overrides.emplace_back(key, v); }, help);
}

void add_switch(CLI::App* sub, Common& c, const std::string& flag, const std::string& key,
                const std::string& value, const std::string& help) {
  sub->add_flag_callback(flag, [&c, key, value] { c.overrides.emplace_back(key, value); }, help);
}

RunConfig resolve(const Common& c) {
  RunConfig run;
  if (!c.config.empty()) run.apply_file(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    run.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : c.overrides) run.set(k, v);
  return run;
}

fs::path require(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(fmt::format("missing {} path", what));
  return p;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", p.string()));
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read {}", p.string()));
  return in;
}

// The resolved config lands next to the command's main output.
void echo_config(const RunConfig& run, const fs::path& output) {
  auto out = open_out(fs::path(output.string() + ".config"));
  run.write(out);
}

std::vector<corpus::Document> load_docs(const fs::path& p, std::ostream& err) {
  auto r = corpus::load_corpus(require(p, "corpus"));
  if (r.rejected > 0) err << fmt::format("warning: {} empty documents skipped\n", r.rejected);
  return std::move(r.documents);
}

// "name=path" or a bare path named after its stem.
std::pair<std::string, fs::path> named_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos) return {arg.substr(0, eq), arg.substr(eq + 1)};
  return {fs::path(arg).stem().string(), arg};
}

std::vector<eval::SystemOutput> load_system(const fs::path& p, const std::vector<corpus::Document>& docs) {
  auto in = open_in(p);
  std::map<std::string, const corpus::Document*> by_id;
  for (const auto& d : docs) by_id.emplace(d.doc_id, &d);
  std::vector<eval::SystemOutput> out;
  for (auto& s : rank::read_summaries(in, p.string())) {
    eval::SystemOutput o{s.doc_id, s.sentences};
    if (o.sentences.empty()) {
      auto it = by_id.find(s.doc_id);
      if (it != by_id.end())
        for (auto i : s.selected)
          if (i < it->second->sentences.size()) o.sentences.push_back(it->second->sentences[i]);
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<eval::SystemOutput> baseline_outputs(const std::string& which,
                                                 const std::vector<corpus::Document>& docs) {
  std::vector<eval::SystemOutput> out;
  for (const auto& d : docs) {
    if (!d.summary) continue;
    const auto idx = which == "lead3" ? eval::lead_k(d.sentences.size(), 3) : eval::oracle_extract(d, 3);
    eval::SystemOutput o{d.doc_id, {}};
    for (auto i : idx) o.sentences.push_back(d.sentences[i]);
    out.push_back(std::move(o));
  }
  return out;
}

// --- commands --------------------------------------------------------------

int cmd_build_vocab(const RunConfig& run, std::size_t min_count, std::ostream& out, std::ostream& err) {
  const auto docs = load_docs(run.paths.corpus, err);
  const auto vocab = corpus::build_vocab(docs, min_count);
  const auto path = require(run.paths.vocab, "vocab");
  vocab.save(path);
  out << fmt::format("vocab size {} written to {} (model vocab_size {} with the reserved ids)\n",
                     vocab.size() - corpus::kNumReserved, path.string(), vocab.size());
  return kExitOk;
}

int cmd_pretrain(RunConfig run, const fs::path& log_path, std::ostream& out, std::ostream& err) {
  const auto docs = load_docs(run.paths.corpus, err);
  const auto vocab = corpus::Vocab::load(require(run.paths.vocab, "vocab"));
  const auto ckpt = require(run.paths.checkpoint, "checkpoint");
  run.model.vocab_size = vocab.size();
  run.model.validate();
  run.train.seed = run.seed;
  run.train.checkpoint_path = ckpt;
  run.train.validate();
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());

  const corpus::EncodeLimits limits{run.model.max_tokens, run.model.max_sentences};
  std::vector<corpus::EncodedDocument> encoded;
  std::size_t truncated = 0;
  for (const auto& d : docs) {
    encoded.push_back(corpus::encode(d, vocab, limits));
    if (encoded.back().num_sentences() < d.sentences.size()) ++truncated;
  }
  if (truncated > 0) err << fmt::format("warning: {} documents truncated to the model limits\n", truncated);

  model::StasModel m(run.model, run.seed);
  const auto report = pretrain::train(m, encoded, run.train);
  const fs::path csv = log_path.empty() ? fs::path(ckpt.string() + ".csv") : log_path;
  {
    auto f = open_out(csv);
    report.write_csv(f, run.train.enable_ss);
  }
  echo_config(run, ckpt);
  if (!report.steps.empty()) {
    const auto& first = report.steps.front();
    const auto& last = report.steps.back();
    out << fmt::format("steps {} total loss {:.6f} -> {:.6f}\n", report.steps.size(), first.total, last.total);
  } else {
    out << "no training steps; checkpoint holds the initial parameters\n";
  }
  out << fmt::format("checkpoint {}\nloss log {}\n", ckpt.string(), csv.string());
  return kExitOk;
}

int cmd_summarize(const RunConfig& run, const std::string& external_path, std::ostream& out,
                  std::ostream& err) {
  const auto docs = load_docs(run.paths.corpus, err);
  const auto vocab = corpus::Vocab::load(require(run.paths.vocab, "vocab"));
  const auto m = model::load_checkpoint(require(run.paths.checkpoint, "checkpoint"));
  if (m.config().vocab_size != vocab.size())
    throw DataError(fmt::format("checkpoint expects a vocabulary of {} but {} has {}", m.config().vocab_size,
                                run.paths.vocab.string(), vocab.size()));
  const auto dest = require(run.paths.output, "output");

  std::map<std::string, std::vector<double>> external;
  rank::SummarizeOptions opts;
  opts.rank = run.rank;
  opts.limits = {m.config().max_tokens, m.config().max_sentences};
  opts.threads = run.threads;
  opts.weight_self = run.weight_self;
  if (!external_path.empty()) {
    auto in = open_in(external_path);
    external = rank::read_scores(in, external_path);
    opts.external = &external;
  }
  std::size_t truncated = 0;
  const auto summaries = rank::summarize(m, docs, vocab, opts, &truncated);
  if (truncated > 0) err << fmt::format("warning: {} documents truncated to the model limits\n", truncated);
  {
    auto f = open_out(dest);
    rank::write_summaries(f, summaries);
  }
  echo_config(run, dest);
  out << fmt::format("{} summaries written to {}\n", summaries.size(), dest.string());
  return kExitOk;
}

int cmd_evaluate(const RunConfig& run, const std::vector<std::string>& systems,
                 const std::vector<std::string>& baselines, std::ostream& out, std::ostream& err) {
  const auto docs = load_docs(run.paths.corpus, err);
  std::vector<std::pair<std::string, eval::RougeScore>> rows;
  auto score = [&](const std::string& name, const std::vector<eval::SystemOutput>& outputs) {
    const auto ev = eval::evaluate_corpus(outputs, docs);
    for (const auto& e : ev.errors) err << fmt::format("{}: {}\n", name, e);
    if (ev.documents == 0) throw DataError(fmt::format("{}: no document could be scored", name));
    rows.emplace_back(name, ev.mean);
  };
  for (const auto& s : systems) {
    const auto [name, path] = named_path(s);
    score(name, load_system(path, docs));
  }
  for (const auto& b : baselines) score(b, baseline_outputs(b, docs));
  if (rows.empty()) throw ConfigError("nothing to evaluate: pass --summaries or --baseline");
  if (run.paths.output.empty()) {
    eval::write_metric_csv(out, rows);
  } else {
    auto f = open_out(run.paths.output);
    eval::write_metric_csv(f, rows);
    echo_config(run, run.paths.output);
  }
  return kExitOk;
}

int cmd_positions(const RunConfig& run, const std::vector<std::string>& systems,
                  const std::vector<std::string>& baselines, std::size_t K, const fs::path& kl_path,
                  std::ostream& out, std::ostream& err) {
  const auto docs = load_docs(run.paths.corpus, err);
  std::map<std::string, const corpus::Document*> by_id;
  for (const auto& d : docs) by_id.emplace(d.doc_id, &d);

  eval::PositionHistogram oracle(K);
  for (const auto& d : docs)
    if (d.summary) oracle.add(eval::oracle_extract(d, 3));

  std::vector<std::pair<std::string, eval::PositionHistogram>> models;
  for (const auto& s : systems) {
    const auto [name, path] = named_path(s);
    auto in = open_in(path);
    eval::PositionHistogram h(K);
    for (const auto& summary : rank::read_summaries(in, path.string())) {
      if (!by_id.count(summary.doc_id)) {
        err << fmt::format("{}: {}: no such document in the corpus\n", name, summary.doc_id);
        continue;
      }
      h.add(summary.selected);
    }
    models.emplace_back(name, std::move(h));
  }
  for (const auto& b : baselines) {
    if (b != "lead3") throw ConfigError(fmt::format("unknown position baseline '{}'", b));
    eval::PositionHistogram h(K);
    for (const auto& d : docs) h.add(eval::lead_k(d.sentences.size(), 3));
    models.emplace_back("lead3", std::move(h));
  }
  models.emplace_back("oracle", oracle);

  const auto dest = require(run.paths.output, "output");
  {
    auto f = open_out(dest);
    eval::write_histogram_csv(f, models);
  }
  echo_config(run, dest);

  std::ostringstream kl;
  kl << "model,kl_to_oracle\n";
  for (const auto& [name, h] : models) kl << fmt::format("{},{:.6f}\n", name, eval::position_kl(h, oracle));
  if (kl_path.empty()) {
    out << kl.str();
  } else {
    auto f = open_out(kl_path);
    f << kl.str();
  }
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& run, double tolerance, const std::string& fault, std::ostream& out) {
  ad::GradCheckOptions opts;
  opts.tolerance = tolerance;
  opts.seed = run.seed;
  ad::debug::clear_backward_faults();
  if (!fault.empty()) ad::debug::inject_backward_fault(fault);
  std::vector<ad::GradCheckResult> results;
  try {
    results = ad::check_all_ops(run.seed, opts);
    results.push_back(pretrain::check_joint_loss(run.seed, opts));
  } catch (...) {
    ad::debug::clear_backward_faults();
    throw;
  }
  ad::debug::clear_backward_faults();
  std::vector<std::string> failed;
  for (const auto& r : results) {
    out << fmt::format("{:<20} max_rel_error={:.3e} entries={} {}\n", r.name, r.max_rel_error, r.entries_checked,
                       r.passed ? "PASS" : "FAIL");
    if (!r.passed) failed.push_back(r.name);
  }
  if (!failed.empty()) {
    std::string names;
    for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
    throw VerificationFailure(fmt::format("gradient check failed: {}", names));
  }
  out << fmt::format("all {} checks passed (tolerance {})\n", results.size(), tolerance);
  return kExitOk;
}

int cmd_synth(const RunConfig& run, corpus::SyntheticConfig cfg, std::ostream& out) {
  cfg.seed = run.seed;
  const auto docs = corpus::make_synthetic_corpus(cfg);
  const auto dest = require(run.paths.output, "output");
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  corpus::write_corpus(dest, docs);
  out << fmt::format("{} documents written to {}\n", docs.size(), dest.string());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"stas: unsupervised extractive summarization"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  // build-vocab
  Common c_vocab;
  std::size_t min_count = 1;
  auto* vocab_cmd = app.add_subcommand("build-vocab", "build a vocabulary from a corpus");
  add_common(vocab_cmd, c_vocab);
  add_key(vocab_cmd, c_vocab, "--corpus", "paths.corpus", "corpus JSONL");
  add_key(vocab_cmd, c_vocab, "--out", "paths.vocab", "vocabulary file to write");
  vocab_cmd->add_option("--min-count", min_count, "minimum token frequency")->check(CLI::PositiveNumber);

  // pretrain
  Common c_train;
  std::string log_path;
  auto* train_cmd = app.add_subcommand("pretrain", "pre-train the model");
  add_common(train_cmd, c_train);
  add_key(train_cmd, c_train, "--corpus", "paths.corpus", "corpus JSONL");
  add_key(train_cmd, c_train, "--vocab", "paths.vocab", "vocabulary file");
  add_key(train_cmd, c_train, "--out", "paths.checkpoint", "checkpoint to write");
  add_key(train_cmd, c_train, "--epochs", "train.epochs", "training epochs");
  train_cmd->add_option_function<std::string>(
      "--objectives",
      [&c_train](const std::string& v) {
        if (v == "msp") {
          c_train.overrides.emplace_back("train.enable_msp", "true");
          c_train.overrides.emplace_back("train.enable_ss", "false");
        } else if (v == "msp+ss") {
          c_train.overrides.emplace_back("train.enable_msp", "true");
          c_train.overrides.emplace_back("train.enable_ss", "true");
        } else {
          throw CLI::ValidationError("--objectives", "expected msp or msp+ss");
        }
      },
      "msp or msp+ss");
  train_cmd->add_option("--log", log_path, "per-step loss CSV (default <checkpoint>.csv)");

  // summarize
  Common c_sum;
  std::string external;
  auto* sum_cmd = app.add_subcommand("summarize", "rank and select sentences");
  add_common(sum_cmd, c_sum);
  add_key(sum_cmd, c_sum, "--corpus", "paths.corpus", "corpus JSONL");
  add_key(sum_cmd, c_sum, "--vocab", "paths.vocab", "vocabulary file");
  add_key(sum_cmd, c_sum, "--checkpoint", "paths.checkpoint", "model checkpoint");
  add_key(sum_cmd, c_sum, "--out", "paths.output", "summaries JSONL to write");
  add_key(sum_cmd, c_sum, "--gamma1", "rank.gamma1", "weight of the sentence's own score");
  add_key(sum_cmd, c_sum, "--gamma2", "rank.gamma2", "weight of the propagated score");
  add_key(sum_cmd, c_sum, "--T", "rank.T", "combination rounds");
  add_key(sum_cmd, c_sum, "--direction", "rank.direction", "ji or ij");
  add_key(sum_cmd, c_sum, "--summary-len", "rank.summary_len", "sentences per summary");
  add_key(sum_cmd, c_sum, "--threads", "rank.threads", "worker threads");
  add_key(sum_cmd, c_sum, "--weight-self", "rank.weight_self", "weight of our scores against --external");
  add_switch(sum_cmd, c_sum, "--no-trigram-blocking", "rank.use_trigram_blocking", "false", "disable trigram blocking");
  add_switch(sum_cmd, c_sum, "--uniform-rtilde", "rank.uniform_r_tilde", "true", "replace r~ with 1/|D|");
  add_switch(sum_cmd, c_sum, "--zero-rprime", "rank.zero_r_prime", "true", "force r' to zero");
  add_switch(sum_cmd, c_sum, "--no-renorm", "rank.no_renorm", "true", "do not renormalize between rounds");
  sum_cmd->add_option("--external", external, "JSONL of external per-sentence scores");

  // evaluate
  Common c_eval;
  std::vector<std::string> eval_systems, eval_baselines;
  auto* eval_cmd = app.add_subcommand("evaluate", "ROUGE against reference summaries");
  add_common(eval_cmd, c_eval);
  add_key(eval_cmd, c_eval, "--corpus", "paths.corpus", "corpus JSONL with summaries");
  add_key(eval_cmd, c_eval, "--out", "paths.output", "metric CSV (default stdout)");
  eval_cmd->add_option("--summaries", eval_systems, "summaries JSONL, optionally name=path (repeatable)");
  eval_cmd->add_option("--baseline", eval_baselines, "lead3 or oracle (repeatable)")
      ->check(CLI::IsMember({"lead3", "oracle"}));

  // positions
  Common c_pos;
  std::vector<std::string> pos_systems, pos_baselines;
  std::size_t K = 12;
  std::string kl_out;
  auto* pos_cmd = app.add_subcommand("positions", "position histograms and KL to the oracle");
  add_common(pos_cmd, c_pos);
  add_key(pos_cmd, c_pos, "--corpus", "paths.corpus", "corpus JSONL with summaries");
  add_key(pos_cmd, c_pos, "--out", "paths.output", "histogram CSV to write");
  pos_cmd->add_option("--summaries", pos_systems, "summaries JSONL, optionally name=path (repeatable)");
  pos_cmd->add_option("--baseline", pos_baselines, "lead3 (repeatable)")->check(CLI::IsMember({"lead3"}));
  pos_cmd->add_option("--K", K, "number of leading positions")->check(CLI::PositiveNumber);
  pos_cmd->add_option("--kl-out", kl_out, "KL table CSV (default stdout)");

  // gradcheck
  Common c_grad;
  double tolerance = 1e-4;
  std::string fault;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(grad_cmd, c_grad);
  grad_cmd->add_option("--tolerance", tolerance, "maximum relative error");
  grad_cmd->add_option("--inject-fault", fault, "")->group("");

  // synth
  Common c_synth;
  corpus::SyntheticConfig synth;
  auto* synth_cmd = app.add_subcommand("synth", "write the synthetic toy corpus");
  add_common(synth_cmd, c_synth);
  add_key(synth_cmd, c_synth, "--out", "paths.output", "corpus JSONL to write");
  synth_cmd->add_option("--num-docs", synth.num_docs, "documents");
  synth_cmd->add_option("--min-sentences", synth.min_sentences, "fewest sentences per document");
  synth_cmd->add_option("--max-sentences", synth.max_sentences, "most sentences per document");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (vocab_cmd->parsed()) return cmd_build_vocab(resolve(c_vocab), min_count, out, err);
    if (train_cmd->parsed()) return cmd_pretrain(resolve(c_train), log_path, out, err);
    if (sum_cmd->parsed()) return cmd_summarize(resolve(c_sum), external, out, err);
    if (eval_cmd->parsed()) return cmd_evaluate(resolve(c_eval), eval_systems, eval_baselines, out, err);
    if (pos_cmd->parsed()) return cmd_positions(resolve(c_pos), pos_systems, pos_baselines, K, kl_out, out, err);
    if (grad_cmd->parsed()) return cmd_gradcheck(resolve(c_grad), tolerance, fault, out);
    if (synth_cmd->parsed()) return cmd_synth(resolve(c_synth), synth, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const VerificationFailure& e) {
    err << "error: " << e.what() << '\n';
    return kExitVerification;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace stas::cli
