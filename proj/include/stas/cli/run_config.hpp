#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stas/model/config.hpp"
#include "stas/pretrain/train.hpp"
#include "stas/rank/rank.hpp"

namespace stas::cli {

struct Paths {
  std::filesystem::path corpus;
  std::filesystem::path vocab;
  std::filesystem::path checkpoint;
  std::filesystem::path output;
};

// Everything a command reads from a config file. `model.vocab_size` is not a
// key: it always comes from the vocabulary file.
struct RunConfig {
  model::ModelConfig model;
  pretrain::TrainConfig train;
  rank::RankConfig rank;
  std::size_t threads = 1;
  double weight_self = 0.9;
  std::uint64_t seed = 1;
  Paths paths;

  // Sets one dotted key, e.g. "model.d_model" = "32". Throws ConfigError on
  // unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);

  // Applies "key=value" lines. Blank lines and lines starting with '#' are
  // skipped; whitespace around keys and values is trimmed.
  void apply(std::istream& in, const std::string& source = "<config>");
  void apply_file(const std::filesystem::path& path);

  // Every key in a fixed order, one "key=value" per line; feeding the text
  // back through apply() reproduces this config.
  void write(std::ostream& out) const;

  static std::vector<std::string> keys();
};

}  // namespace stas::cli
