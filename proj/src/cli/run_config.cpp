#include "stas/cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "stas/errors.hpp"

namespace stas::cli {

namespace {

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError(fmt::format("{}: cannot parse '{}'", key, v));
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("{}: expected a boolean, got '{}'", key, v));
}

Field num(std::string key, std::size_t& x) {
  return {key, [&x, key](const std::string& v) { x = parse_number<std::size_t>(key, v); },
          [&x] { return fmt::format("{}", x); }};
}

Field num64(std::string key, std::uint64_t& x) {
  return {key, [&x, key](const std::string& v) { x = parse_number<std::uint64_t>(key, v); },
          [&x] { return fmt::format("{}", x); }};
}

Field real(std::string key, double& x) {
  return {key, [&x, key](const std::string& v) { x = parse_number<double>(key, v); },
          [&x] { return fmt::format("{}", x); }};
}

Field flag(std::string key, bool& x) {
  return {key, [&x, key](const std::string& v) { x = parse_bool(key, v); },
          [&x] { return std::string(x ? "true" : "false"); }};
}

Field path(std::string key, std::filesystem::path& x) {
  return {key, [&x](const std::string& v) { x = v; }, [&x] { return x.string(); }};
}

std::vector<Field> fields(RunConfig& c) {
  auto& m = c.model;
  auto& t = c.train;
  auto& r = c.rank;
  return {
      num64("seed", c.seed),
      num("model.d_model", m.d_model),
      num("model.n_heads", m.n_heads),
      num("model.token_layers", m.token_layers),
      num("model.sentence_layers", m.sentence_layers),
      num("model.decoder_layers", m.decoder_layers),
      num("model.local_token_layers", m.local_token_layers),
      num("model.ffn_multiplier", m.ffn_multiplier),
      num("model.max_tokens", m.max_tokens),
      num("model.max_sentences", m.max_sentences),
      real("model.dropout", m.dropout),
      real("model.layer_norm_eps", m.layer_norm_eps),
      real("model.init_range", m.init_range),
      flag("model.use_sentence_pos_embedding", m.use_sentence_pos_embedding),
      flag("model.reset_token_positions_per_sentence", m.reset_token_positions_per_sentence),
      flag("model.share_decoder_embeddings", m.share_decoder_embeddings),
      num("train.epochs", t.epochs),
      num("train.batch_size", t.batch_size),
      real("train.encoder_lr", t.encoder_lr),
      real("train.decoder_lr", t.decoder_lr),
      real("train.clip_norm", t.clip_norm),
      num("train.checkpoint_every", t.checkpoint_every),
      flag("train.enable_msp", t.enable_msp),
      flag("train.enable_ss", t.enable_ss),
      flag("train.raw_sum_loss", t.raw_sum_loss),
      num("train.warmup_steps", t.warmup_steps),
      real("train.masking.sentence_prob", t.masking.sentence_prob),
      real("train.masking.mask_prob", t.masking.mask_prob),
      real("train.masking.random_prob", t.masking.random_prob),
      real("rank.gamma1", r.gamma1),
      real("rank.gamma2", r.gamma2),
      num("rank.T", r.T),
      num("rank.max_iterations", r.max_iterations),
      flag("rank.use_trigram_blocking", r.use_trigram_blocking),
      num("rank.summary_len", r.summary_len),
      {"rank.direction",
       [&r](const std::string& v) {
         if (v == "ji")
           r.direction = rank::AttentionDirection::JI;
         else if (v == "ij")
           r.direction = rank::AttentionDirection::IJ;
         else
           throw ConfigError(fmt::format("rank.direction: expected ji or ij, got '{}'", v));
       },
       [&r] { return std::string(r.direction == rank::AttentionDirection::JI ? "ji" : "ij"); }},
      flag("rank.uniform_r_tilde", r.uniform_r_tilde),
      flag("rank.zero_r_prime", r.zero_r_prime),
      flag("rank.no_renorm", r.no_renorm),
      num("rank.threads", c.threads),
      real("rank.weight_self", c.weight_self),
      path("paths.corpus", c.paths.corpus),
      path("paths.vocab", c.paths.vocab),
      path("paths.checkpoint", c.paths.checkpoint),
      path("paths.output", c.paths.output),
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (auto& f : fields(*this)) {
    if (f.key == key) {
      f.set(value);
      return;
    }
  }
  throw ConfigError(fmt::format("unknown config key '{}'", key));
}

void RunConfig::apply(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected key=value", source, lineno));
    try {
      set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", source, lineno, e.what()));
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError(fmt::format("cannot open config file {}", p.string()));
  apply(in, p.string());
}

void RunConfig::write(std::ostream& out) const {
  RunConfig copy = *this;
  for (const auto& f : fields(copy)) out << f.key << '=' << f.get() << '\n';
}

std::vector<std::string> RunConfig::keys() {
  RunConfig c;
  std::vector<std::string> out;
  for (const auto& f : fields(c)) out.push_back(f.key);
  return out;
}

}  // namespace stas::cli
