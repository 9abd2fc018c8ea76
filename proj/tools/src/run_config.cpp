#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "flowslm/rng.hpp"

namespace flowslm::cli {

namespace pt = boost::property_tree;

namespace {

std::string join_strings(const std::vector<std::string>& v) { return boost::algorithm::join(v, ","); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, s, boost::algorithm::is_any_of(","));
  std::vector<std::string> out;
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

bool parse_bool(const std::string& s) {
  const std::string v = boost::algorithm::to_lower_copy(s);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

// Reads or writes every field through one visitor so load and save cannot drift.
struct Reader {
  const pt::ptree& tree;
  template <typename T>
  void operator()(const std::string& key, T& value) const {
    if (auto v = tree.get_optional<std::string>(key)) {
      try {
        if constexpr (std::is_same_v<T, bool>) {
          value = parse_bool(*v);
        } else {
          std::istringstream is(*v);
          T parsed{};
          is >> parsed;
          if (is.fail() || !is.eof()) throw ConfigError("");
          value = parsed;
        }
      } catch (const ConfigError&) {
        throw ConfigError("config key " + key + ": cannot parse '" + *v + "'");
      }
    }
  }
  void operator()(const std::string& key, std::string& value) const {
    if (auto v = tree.get_optional<std::string>(key)) value = *v;
  }
};

// Shortest text that parses back to the same double.
std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Writer {
  pt::ptree& tree;
  template <typename T>
  void operator()(const std::string& key, const T& value) const {
    if constexpr (std::is_same_v<T, bool>) {
      tree.put(key, value ? "true" : "false");
    } else if constexpr (std::is_floating_point_v<T>) {
      tree.put(key, shortest(value));
    } else {
      tree.put(key, value);
    }
  }
};

template <typename Cfg, typename V>
void visit(Cfg& c, const V& f) {
  f("global.seed", c.seed);
  f("global.out_dir", c.out_dir);

  f("grammar.vocab_size", c.grammar.vocab_size);
  f("grammar.n_words", c.grammar.n_words);
  f("grammar.min_word_len", c.grammar.min_word_len);
  f("grammar.max_word_len", c.grammar.max_word_len);
  f("grammar.min_sentences", c.grammar.min_sentences);
  f("grammar.max_sentences", c.grammar.max_sentences);
  f("grammar.silence_stop_prob", c.grammar.silence_stop_prob);
  f("grammar.smoothing", c.grammar.smoothing);

  f("render.embed_dim", c.render.embed_dim);
  f("render.token_dim", c.render.token_dim);
  f("render.attr_dim", c.render.attr_dim);
  f("render.n_speakers", c.render.n_speakers);
  f("render.attr_scale", c.render.attr_scale);
  f("render.leak_beta", c.render.leak_beta);
  f("render.smooth_alpha", c.render.smooth_alpha);
  f("render.noise_sigma", c.render.noise_sigma);

  f("data.n_train", c.data.n_train);
  f("data.n_heldout", c.data.n_heldout);
  f("data.n_lexical_pairs", c.data.n_lexical_pairs);
  f("data.n_syntactic_pairs", c.data.n_syntactic_pairs);
  f("data.n_consistency_pairs", c.data.n_consistency_pairs);
  f("data.shard_size", c.data.shard_size);

  f("model.d_model", c.model.d_model);
  f("model.n_layers", c.model.n_layers);
  f("model.n_heads", c.model.n_heads);
  f("model.k_future", c.model.k_future);
  f("model.cfm_enabled", c.model.cfm_enabled);
  f("model.cfm_blocks", c.model.cfm_blocks);
  f("model.cfm_hidden", c.model.cfm_hidden);
  f("model.time_embed_dim", c.model.time_embed_dim);
  f("model.cond_dropout_p", c.model.cond_dropout_p);
  f("model.sigma_min", c.model.sigma_min);
  f("model.max_positions", c.model.max_positions);
  f("model.init_std", c.model.init_std);

  f("train.steps", c.train.steps);
  f("train.batch_utterances", c.train.batch_utterances);
  f("train.lr_peak", c.train.lr_peak);
  f("train.warmup_steps", c.train.warmup_steps);
  f("train.adam_beta1", c.train.adam_beta1);
  f("train.adam_beta2", c.train.adam_beta2);
  f("train.adam_eps", c.train.adam_eps);
  f("train.weight_decay", c.train.weight_decay);
  f("train.grad_clip_norm", c.train.grad_clip_norm);
  f("train.checkpoint_every", c.train.checkpoint_every);
  f("train.log_every", c.train.log_every);

  f("generation.top_p", c.generation.top_p);
  f("generation.silence_penalty", c.generation.silence_penalty);
  f("generation.cfg_scale", c.generation.cfg_scale);
  f("generation.prior_temperature", c.generation.prior_temperature);
  f("generation.nfe", c.generation.solver.nfe);
  f("generation.max_frames", c.generation.max_frames);

  f("eval.n_prompts", c.eval.n_prompts);
  f("eval.continuations_per_prompt", c.eval.continuations_per_prompt);
  f("eval.prompt_frames", c.eval.prompt_frames);
  f("eval.n_consistency_pairs", c.eval.n_consistency_pairs);
  f("eval.run_generation", c.eval.run_generation);
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path* path, const std::vector<std::string>& overrides) {
  pt::ptree tree;
  if (path) {
    try {
      pt::read_ini(path->string(), tree);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(std::string("cannot read config: ") + e.what());
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || o.find('.') > eq) {
      throw ConfigError("override must look like section.key=value: '" + o + "'");
    }
    tree.put(o.substr(0, eq), o.substr(eq + 1));
  }
  RunConfig c;
  visit(c, Reader{tree});
  // Enumerated and list-valued keys.
  if (auto v = tree.get_optional<std::string>("model.input_mode")) {
    c.model.input_mode = input_mode_from_string(*v);
  }
  if (auto v = tree.get_optional<std::string>("train.schedule")) c.train.schedule = schedule_from_string(*v);
  if (auto v = tree.get_optional<std::string>("generation.solver")) {
    c.generation.solver.method = solver_method_from_string(*v);
  }
  if (auto v = tree.get_optional<std::string>("grammar.class_fractions")) {
    c.grammar.class_fractions.clear();
    for (const auto& s : split_list(*v)) c.grammar.class_fractions.push_back(std::stod(s));
  }
  if (auto v = tree.get_optional<std::string>("ablate.input_modes")) {
    c.ablation.input_modes.clear();
    for (const auto& s : split_list(*v)) c.ablation.input_modes.push_back(input_mode_from_string(s));
  }
  if (auto v = tree.get_optional<std::string>("ablate.k_values")) {
    c.ablation.k_values.clear();
    for (const auto& s : split_list(*v)) c.ablation.k_values.push_back(std::stoi(s));
  }
  if (auto v = tree.get_optional<std::string>("ablate.cfm_enabled")) {
    c.ablation.cfm_enabled.clear();
    for (const auto& s : split_list(*v)) c.ablation.cfm_enabled.push_back(parse_bool(s));
  }
  // Sections whose keys we do not know are almost always typos.
  static const std::vector<std::string> known = {"global", "grammar", "render", "data", "model",
                                                 "train", "generation", "eval", "ablate"};
  pt::ptree defaults;
  RunConfig fresh;
  fresh.seed = c.seed;
  std::istringstream is(fresh.to_ini());
  pt::read_ini(is, defaults);
  for (const auto& [section, body] : tree) {
    if (std::find(known.begin(), known.end(), section) == known.end()) {
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto& [key, _] : body) {
      if (!defaults.get_child_optional(section + "." + key)) {
        throw ConfigError("unknown config key " + section + "." + key);
      }
    }
  }
  c.model.vocab_size = c.grammar.vocab_size;
  c.model.embed_dim = c.render.embed_dim;
  c.train.seed = c.stream("train");
  c.generation.seed = c.stream("gen");
  c.grammar.seed = c.stream("grammar");
  c.render.seed = c.stream("render");
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (grammar.vocab_size <= kFirstWordId) {
    throw ConfigError("grammar.vocab_size must exceed the reserved ids (silence, EOS)");
  }
  model.validate();
  train.validate();
  generation.validate();
  if (data.n_train < 1 || data.n_heldout < 1) throw ConfigError("data: need train and heldout utterances");
  if (data.n_lexical_pairs < 0 || data.n_syntactic_pairs < 0 || data.n_consistency_pairs < 0) {
    throw ConfigError("data: pair counts must be >= 0");
  }
  if (data.shard_size < 1) throw ConfigError("data.shard_size must be >= 1");
  if (eval.n_prompts < 1 || eval.continuations_per_prompt < 1 || eval.prompt_frames < 4) {
    throw ConfigError("eval: n_prompts, continuations_per_prompt >= 1 and prompt_frames >= 4 required");
  }
  ablation.validate();
}

std::string RunConfig::to_ini() const {
  pt::ptree tree;
  RunConfig copy = *this;
  visit(copy, Writer{tree});
  tree.put("model.input_mode", to_string(model.input_mode));
  tree.put("train.schedule", to_string(train.schedule));
  tree.put("generation.solver", to_string(generation.solver.method));
  std::vector<std::string> fr, modes, ks, cfm;
  for (double f : grammar.class_fractions) fr.push_back(shortest(f));
  tree.put("grammar.class_fractions", join_strings(fr));
  for (auto m : ablation.input_modes) modes.push_back(to_string(m));
  for (int k : ablation.k_values) ks.push_back(std::to_string(k));
  for (bool b : ablation.cfm_enabled) cfm.push_back(b ? "true" : "false");
  tree.put("ablate.input_modes", join_strings(modes));
  tree.put("ablate.k_values", join_strings(ks));
  tree.put("ablate.cfm_enabled", join_strings(cfm));
  std::ostringstream os;
  pt::write_ini(os, tree);
  return os.str();
}

void RunConfig::write_ini(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  os << to_ini();
  if (!os) throw IoError("cannot write " + path.string());
}

nlohmann::json RunConfig::to_json() const {
  pt::ptree tree;
  std::istringstream is(to_ini());
  pt::read_ini(is, tree);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [section, body] : tree) {
    for (const auto& [key, value] : body) j[section][key] = value.data();
  }
  return j;
}

std::uint64_t RunConfig::stream(const char* name) const {
  return splitmix64(seed ^ fnv1a(name));
}

}  // namespace flowslm::cli
