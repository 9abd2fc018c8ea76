#include <bit>
#include <cstring>
#include <fstream>

#include "flowslm/binary_io.hpp"
#include "flowslm/corpus.hpp"

namespace flowslm {

namespace {

nlohmann::json matrix_to_json(const MatD& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatD matrix_from_json(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  MatD m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) throw IoError("ragged matrix in json");
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

constexpr char kShardMagic[8] = {'F', 'S', 'L', 'M', 'S', 'H', 'D', '1'};

}  // namespace

nlohmann::json to_json(const GrammarSpec& g) {
  nlohmann::json j;
  j["vocab_size"] = g.vocab_size;
  j["lexicon"] = g.lexicon;
  std::vector<std::string> classes;
  for (WordClass c : g.word_classes) classes.push_back(to_string(c));
  j["word_classes"] = classes;
  nlohmann::json tmpls = nlohmann::json::array();
  for (const auto& t : g.templates) {
    std::vector<std::string> names;
    for (WordClass c : t) names.push_back(to_string(c));
    tmpls.push_back(names);
  }
  j["templates"] = tmpls;
  j["min_sentences"] = g.min_sentences;
  j["max_sentences"] = g.max_sentences;
  j["silence_stop_prob"] = g.silence_stop_prob;
  j["smoothing"] = g.smoothing;
  j["seed"] = g.seed;
  return j;
}

GrammarSpec grammar_from_json(const nlohmann::json& j) {
  GrammarSpec g;
  try {
    g.vocab_size = j.at("vocab_size").get<int>();
    g.lexicon = j.at("lexicon").get<std::vector<std::vector<int>>>();
    for (const auto& s : j.at("word_classes")) g.word_classes.push_back(word_class_from_string(s));
    for (const auto& t : j.at("templates")) {
      std::vector<WordClass> tmpl;
      for (const auto& s : t) tmpl.push_back(word_class_from_string(s));
      g.templates.push_back(std::move(tmpl));
    }
    g.min_sentences = j.at("min_sentences").get<int>();
    g.max_sentences = j.at("max_sentences").get<int>();
    g.silence_stop_prob = j.at("silence_stop_prob").get<double>();
    g.smoothing = j.at("smoothing").get<double>();
    g.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("grammar json: ") + e.what());
  }
  g.validate();
  return g;
}

nlohmann::json to_json(const RenderSpec& r) {
  nlohmann::json j;
  j["embed_dim"] = r.embed_dim;
  j["attr_dim"] = r.attr_dim;
  j["token_codebook"] = matrix_to_json(r.token_codebook);
  j["current_mixing"] = matrix_to_json(r.current_mixing);
  j["lookahead_mixing"] = matrix_to_json(r.lookahead_mixing);
  j["attr_projection"] = matrix_to_json(r.attr_projection);
  j["speakers"] = matrix_to_json(r.speakers);
  j["leak_beta"] = r.leak_beta;
  j["smooth_alpha"] = r.smooth_alpha;
  j["noise_sigma"] = r.noise_sigma;
  return j;
}

RenderSpec render_from_json(const nlohmann::json& j) {
  RenderSpec r;
  try {
    r.embed_dim = j.at("embed_dim").get<int>();
    r.attr_dim = j.at("attr_dim").get<int>();
    r.token_codebook = matrix_from_json(j.at("token_codebook"));
    r.current_mixing = matrix_from_json(j.at("current_mixing"));
    r.lookahead_mixing = matrix_from_json(j.at("lookahead_mixing"));
    r.attr_projection = matrix_from_json(j.at("attr_projection"));
    r.speakers = matrix_from_json(j.at("speakers"));
    r.leak_beta = j.at("leak_beta").get<double>();
    r.smooth_alpha = j.at("smooth_alpha").get<double>();
    r.noise_sigma = j.at("noise_sigma").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("render json: ") + e.what());
  }
  r.validate();
  return r;
}

void write_shard(const std::filesystem::path& path, const std::vector<Utterance>& utterances,
                 int embed_dim, int attr_dim) {
  BinaryWriter w(path);
  w.bytes(kShardMagic, sizeof kShardMagic);
  w.u32(kShardVersion);
  w.u32(static_cast<std::uint32_t>(utterances.size()));
  w.u32(static_cast<std::uint32_t>(embed_dim));
  w.u32(static_cast<std::uint32_t>(attr_dim));
  for (const Utterance& u : utterances) {
    if (u.embeddings.rows() != u.length() || u.embeddings.cols() != embed_dim) {
      throw IoError("write_shard: embedding shape does not match tokens/embed_dim");
    }
    if (u.attribute.size() != attr_dim) throw IoError("write_shard: attribute dimension mismatch");
    w.u32(static_cast<std::uint32_t>(u.length()));
    w.i32(u.speaker);
    w.f32s(u.attribute.data(), u.attribute.size());
    for (int tok : u.tokens) {
      if (tok < 0 || tok > 0xFFFF) throw IoError("write_shard: token id exceeds 16 bits");
      w.u16(static_cast<std::uint16_t>(tok));
    }
    w.f32s(u.embeddings.data(), u.embeddings.size());
  }
  w.close();
}

std::vector<Utterance> read_shard(const std::filesystem::path& path) {
  BinaryReader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kShardMagic, sizeof magic) != 0) {
    throw IoError("read_shard: bad magic in " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kShardVersion) {
    throw IoError("read_shard: unsupported shard version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  const int embed_dim = static_cast<int>(r.u32());
  const int attr_dim = static_cast<int>(r.u32());
  std::vector<Utterance> out(count);
  for (Utterance& u : out) {
    const int frames = static_cast<int>(r.u32());
    u.speaker = r.i32();
    u.attribute.resize(attr_dim);
    r.f32s(u.attribute.data(), attr_dim);
    u.tokens.resize(frames);
    for (int& tok : u.tokens) tok = r.u16();
    u.embeddings.resize(frames, embed_dim);
    r.f32s(u.embeddings.data(), u.embeddings.size());
  }
  r.expect_eof();
  return out;
}

void write_pair_shard(const std::filesystem::path& path, const MinimalPairSet& set,
                      int embed_dim, int attr_dim) {
  std::vector<Utterance> flat;
  flat.reserve(set.pairs.size() * 2);
  for (const auto& p : set.pairs) {
    flat.push_back(p.positive);
    flat.push_back(p.negative);
  }
  write_shard(path, flat, embed_dim, attr_dim);
}

MinimalPairSet read_pair_shard(const std::filesystem::path& path, PairKind kind) {
  auto flat = read_shard(path);
  if (flat.size() % 2 != 0) throw IoError("read_pair_shard: odd record count in " + path.string());
  MinimalPairSet set;
  set.kind = kind;
  for (std::size_t i = 0; i < flat.size(); i += 2) {
    set.pairs.push_back({std::move(flat[i]), std::move(flat[i + 1])});
  }
  return set;
}

}  // namespace flowslm
