#include "stas/model/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "json.hpp"
#include "stas/errors.hpp"

namespace stas::model {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'S', 'C', 'K', 'P', '1'};

using json = nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"token_layers", c.token_layers},
              {"sentence_layers", c.sentence_layers},
              {"decoder_layers", c.decoder_layers},
              {"local_token_layers", c.local_token_layers},
              {"ffn_multiplier", c.ffn_multiplier},
              {"max_tokens", c.max_tokens},
              {"max_sentences", c.max_sentences},
              {"vocab_size", c.vocab_size},
              {"dropout", c.dropout},
              {"layer_norm_eps", c.layer_norm_eps},
              {"init_range", c.init_range},
              {"use_sentence_pos_embedding", c.use_sentence_pos_embedding},
              {"reset_token_positions_per_sentence", c.reset_token_positions_per_sentence},
              {"share_decoder_embeddings", c.share_decoder_embeddings}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.token_layers = j.at("token_layers").get<std::size_t>();
  c.sentence_layers = j.at("sentence_layers").get<std::size_t>();
  c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
  c.local_token_layers = j.at("local_token_layers").get<std::size_t>();
  c.ffn_multiplier = j.at("ffn_multiplier").get<std::size_t>();
  c.max_tokens = j.at("max_tokens").get<std::size_t>();
  c.max_sentences = j.at("max_sentences").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  c.init_range = j.at("init_range").get<double>();
  c.use_sentence_pos_embedding = j.at("use_sentence_pos_embedding").get<bool>();
  c.reset_token_positions_per_sentence = j.at("reset_token_positions_per_sentence").get<bool>();
  c.share_decoder_embeddings = j.at("share_decoder_embeddings").get<bool>();
  return c;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated checkpoint header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const StasModel& model) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : model.params().all()) {
    tensors.push_back(json{{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel() * sizeof(double);
  }
  json meta{{"format", "stas-checkpoint"},
            {"version", 1},
            {"model", config_to_json(model.config())},
            {"tensors", std::move(tensors)},
            {"payload_bytes", offset}};
  const std::string text = meta.dump();
  out.write(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : model.params().all()) {
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      put_u64(out, bits);
    }
  }
  if (!out) throw IoError("checkpoint write failed");
}

void save_checkpoint(const std::filesystem::path& path, const StasModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  save_checkpoint(out, model);
  out.close();
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

StasModel load_checkpoint(std::istream& in, const std::string& source) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError(fmt::format("{}: not a checkpoint file", source));
  const std::uint64_t meta_len = get_u64(in);
  std::string text(meta_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(meta_len)))
    throw DataError(fmt::format("{}: truncated metadata", source));

  json meta;
  try {
    meta = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: bad metadata: {}", source, e.what()));
  }
  try {
    const ModelConfig config = config_from_json(meta.at("model"));
    Parameters params;
    std::uint64_t expected_offset = 0;
    for (const auto& entry : meta.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<ad::Shape>();
      if (entry.at("offset").get<std::uint64_t>() != expected_offset)
        throw DataError(fmt::format("{}: tensor {} has unexpected offset", source, name));
      std::vector<double> values(ad::numel(shape));
      for (auto& v : values) v = std::bit_cast<double>(get_u64(in));
      expected_offset += values.size() * sizeof(double);
      params.add(name, ad::Tensor::parameter(shape, std::move(values)));
    }
    if (in.peek() != std::char_traits<char>::eof())
      throw DataError(fmt::format("{}: trailing bytes after payload", source));
    return StasModel(config, std::move(params));
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: bad metadata: {}", source, e.what()));
  } catch (const ConfigError& e) {
    throw DataError(fmt::format("{}: {}", source, e.what()));
  }
}

StasModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return load_checkpoint(in, path.string());
}

}  // namespace stas::model
