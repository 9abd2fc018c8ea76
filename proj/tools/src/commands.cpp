#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "flowslm/eval.hpp"
#include "flowslm/rng.hpp"
#include "flowslm/sampler.hpp"
#include "flowslm/trainer.hpp"
#include "plot.hpp"

namespace flowslm::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kManifestVersion = 1;

void log(const CommandContext& ctx, const std::string& msg) {
  if (ctx.verbose) std::cerr << "[flowslm] " << msg << std::endl;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("cannot write " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("missing artifact " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt json in " + path.string() + ": " + e.what());
  }
}

fs::path data_dir(const CommandContext& ctx) { return ctx.data_dir.value_or(ctx.out / "data"); }
fs::path checkpoint_path(const CommandContext& ctx) {
  return ctx.checkpoint.value_or(ctx.out / "train" / "model.ckpt");
}

fs::path prepare(const CommandContext& ctx, const char* sub) {
  const fs::path dir = ctx.out / sub;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  ctx.config.write_ini(dir / "config.ini");
  return dir;
}

nlohmann::json data_identity(const RunConfig& c) {
  const nlohmann::json j = c.to_json();
  return {{"seed", c.seed}, {"grammar", j.at("grammar")}, {"render", j.at("render")}, {"data", j.at("data")}};
}

std::vector<std::string> shard_names(int n, int shard_size) {
  std::vector<std::string> out;
  for (int i = 0; i * shard_size < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "train_%05d.shard", i);
    out.emplace_back(buf);
  }
  return out;
}

struct LoadedModel {
  Checkpoint ckpt;
  FlowSlm<float> model;
};

LoadedModel load_model(const CommandContext& ctx, const Dataset& data) {
  Checkpoint ck = read_checkpoint(checkpoint_path(ctx));
  const std::string want = data.hash();
  const std::string have = ck.meta.value("data_hash", std::string());
  if (have != want) {
    throw HashMismatch("checkpoint was trained on data " + (have.empty() ? "<unknown>" : have) +
                       " but the corpus is " + want);
  }
  FlowSlm<float> model = model_from_checkpoint(ck);
  return {std::move(ck), std::move(model)};
}

struct Prompt {
  std::string id;
  const Utterance* source;
};

std::vector<Prompt> select_prompts(const Dataset& data, int n, int prompt_frames, std::uint64_t seed) {
  std::vector<int> eligible;
  for (int i = 0; i < static_cast<int>(data.heldout.size()); ++i) {
    if (data.heldout[i].length() > prompt_frames) eligible.push_back(i);
  }
  if (eligible.empty()) throw ConfigError("no held-out utterance is longer than prompt_frames");
  Rng rng = Rng::derive(seed, "prompts");
  for (int i = static_cast<int>(eligible.size()) - 1; i > 0; --i) {
    std::swap(eligible[i], eligible[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  }
  eligible.resize(std::min<std::size_t>(eligible.size(), static_cast<std::size_t>(n)));
  std::sort(eligible.begin(), eligible.end());
  std::vector<Prompt> out;
  for (int i : eligible) out.push_back({"heldout/" + std::to_string(i), &data.heldout[i]});
  return out;
}

ContinuationSet generate_set(const CommandContext& ctx, const FlowSlm<float>& model, const Dataset& data,
                             int n_prompts, int per_prompt, int prompt_frames, std::uint64_t seed) {
  GenerationConfig gen = ctx.config.generation;
  gen.seed = seed;
  gen.max_frames = std::min(gen.max_frames, model.config().max_positions - prompt_frames - 1);
  ContinuationSet set;
  set.config = gen;
  const auto prompts = select_prompts(data, n_prompts, prompt_frames, seed);
  const VecD blind = VecD::Zero(data.render.attr_dim);
  std::int64_t idx = 0;
  for (const auto& p : prompts) {
    const std::vector<int> ptoks(p.source->tokens.begin(), p.source->tokens.begin() + prompt_frames);
    const MatF pframes = p.source->embeddings.topRows(prompt_frames);
    for (int c = 0; c < per_prompt; ++c, ++idx) {
      Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(idx));
      FrameRenderer renderer = [&](const std::vector<int>& toks) {
        Rng r = Rng::derive(seed ^ 0x72656e646572ULL, static_cast<std::uint64_t>(idx));
        return render_with_attribute(toks, data.render, blind, r).embeddings;
      };
      set.continuations.push_back(continue_prompt(model, ptoks, pframes, gen, rng, nullptr, renderer));
      set.prompt_ids.push_back(p.id + "#" + std::to_string(c));
    }
    log(ctx, "generated continuations for " + p.id);
  }
  return set;
}

// Held-out suffixes dressed as continuations (for self-consistency checks).
ContinuationSet ground_truth_set(const Dataset& data, int n_prompts, int prompt_frames, std::uint64_t seed) {
  ContinuationSet set;
  for (const auto& p : select_prompts(data, n_prompts, prompt_frames, seed)) {
    const Utterance& u = *p.source;
    Continuation c;
    c.prompt_tokens.assign(u.tokens.begin(), u.tokens.begin() + prompt_frames);
    c.tokens.assign(u.tokens.begin() + prompt_frames, u.tokens.end());
    c.embeddings = u.embeddings.bottomRows(u.length() - prompt_frames);
    c.prompt_len = prompt_frames;
    c.stopped_by = StopReason::kEos;
    set.continuations.push_back(std::move(c));
    set.prompt_ids.push_back(p.id);
  }
  return set;
}

const Utterance* find_prompt(const Dataset& data, const std::string& id) {
  const std::string prefix = "heldout/";
  if (id.rfind(prefix, 0) != 0) return nullptr;
  const int idx = std::stoi(id.substr(prefix.size()));
  if (idx < 0 || idx >= static_cast<int>(data.heldout.size())) return nullptr;
  return &data.heldout[idx];
}

void print_report(const EvalReport& r) {
  std::cout << std::left << std::setw(24) << "metric" << std::setw(14) << "value" << "count\n";
  for (const auto& [k, v] : r.metrics) {
    std::cout << std::setw(24) << k << std::setw(14) << std::setprecision(6) << v << r.counts.at(k)
              << "\n";
  }
  std::cout << "config_hash " << r.config_hash << "\n";
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.manifest = read_json(dir / "manifest.json");
  if (d.manifest.value("format", std::string()) != "flowslm-corpus") {
    throw IoError(dir.string() + " does not hold a corpus manifest");
  }
  if (d.manifest.value("version", 0) != kManifestVersion) {
    throw IoError("unsupported corpus manifest version in " + dir.string());
  }
  d.grammar = grammar_from_json(d.manifest.at("grammar"));
  d.render = render_from_json(d.manifest.at("render"));
  for (const auto& s : d.manifest.at("shards")) {
    auto part = read_shard(dir / s.at("file").get<std::string>());
    if (part.size() != s.at("count").get<std::size_t>()) throw IoError("shard count mismatch");
    d.train.insert(d.train.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
  }
  d.heldout = read_shard(dir / "heldout.shard");
  d.lexical = read_pair_shard(dir / "lexical.pairs", PairKind::kLexical);
  d.syntactic = read_pair_shard(dir / "syntactic.pairs", PairKind::kSyntactic);
  d.consistency = read_pair_shard(dir / "consistency.pairs", PairKind::kLexical);
  const auto& counts = d.manifest.at("counts");
  if (d.train.size() != counts.at("train").get<std::size_t>() ||
      d.heldout.size() != counts.at("heldout").get<std::size_t>() ||
      d.lexical.pairs.size() != counts.at("lexical_pairs").get<std::size_t>() ||
      d.syntactic.pairs.size() != counts.at("syntactic_pairs").get<std::size_t>() ||
      d.consistency.pairs.size() != counts.at("consistency_pairs").get<std::size_t>()) {
    throw IoError("corpus in " + dir.string() + " does not match its manifest counts");
  }
  return d;
}

void cmd_make_data(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const fs::path dir = ctx.data_dir.value_or(ctx.out / "data");
  fs::create_directories(dir);
  c.write_ini(dir / "config.ini");
  const GrammarSpec grammar = make_grammar(c.grammar);
  const RenderSpec render = make_render_spec(c.render, grammar.vocab_size);
  const std::uint64_t data_seed = c.stream("data");
  const std::uint64_t train_seed = splitmix64(data_seed ^ fnv1a("train"));
  const std::uint64_t heldout_seed = splitmix64(data_seed ^ fnv1a("heldout"));
  const std::uint64_t lex_seed = splitmix64(data_seed ^ fnv1a("lexical"));
  const std::uint64_t syn_seed = splitmix64(data_seed ^ fnv1a("syntactic"));
  const std::uint64_t cons_seed = splitmix64(data_seed ^ fnv1a("consistency"));

  log(ctx, "generating " + std::to_string(c.data.n_train) + " training utterances");
  const auto train = generate_corpus(grammar, render, c.data.n_train, train_seed);
  const auto heldout = generate_corpus(grammar, render, c.data.n_heldout, heldout_seed);
  const auto lexical = make_minimal_pairs(grammar, render, PairKind::kLexical, c.data.n_lexical_pairs, lex_seed);
  const auto syntactic =
      make_minimal_pairs(grammar, render, PairKind::kSyntactic, c.data.n_syntactic_pairs, syn_seed);
  MinimalPairSet consistency;
  for (int i = 0; i < c.data.n_consistency_pairs; ++i) {
    Rng rng = Rng::derive(cons_seed, static_cast<std::uint64_t>(i));
    consistency.pairs.push_back(make_consistency_pair(grammar, render, rng));
  }

  nlohmann::json shards = nlohmann::json::array();
  const auto names = shard_names(c.data.n_train, c.data.shard_size);
  for (std::size_t s = 0; s < names.size(); ++s) {
    const auto lo = train.begin() + static_cast<std::ptrdiff_t>(s) * c.data.shard_size;
    const auto hi = train.begin() + std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(train.size()),
                                                             static_cast<std::ptrdiff_t>(s + 1) * c.data.shard_size);
    write_shard(dir / names[s], std::vector<Utterance>(lo, hi), render.embed_dim, render.attr_dim);
    shards.push_back({{"file", names[s]}, {"count", hi - lo}});
  }
  write_shard(dir / "heldout.shard", heldout, render.embed_dim, render.attr_dim);
  write_pair_shard(dir / "lexical.pairs", lexical, render.embed_dim, render.attr_dim);
  write_pair_shard(dir / "syntactic.pairs", syntactic, render.embed_dim, render.attr_dim);
  write_pair_shard(dir / "consistency.pairs", consistency, render.embed_dim, render.attr_dim);

  std::int64_t frames = 0;
  for (const auto& u : train) frames += u.length();
  const nlohmann::json manifest = {
      {"format", "flowslm-corpus"},
      {"version", kManifestVersion},
      {"config_hash", hash_json(data_identity(c))},
      {"seeds", {{"root", c.seed}, {"train", train_seed}, {"heldout", heldout_seed},
                 {"lexical", lex_seed}, {"syntactic", syn_seed}, {"consistency", cons_seed}}},
      {"counts", {{"train", train.size()}, {"heldout", heldout.size()}, {"lexical_pairs", lexical.pairs.size()},
                  {"syntactic_pairs", syntactic.pairs.size()}, {"consistency_pairs", consistency.pairs.size()},
                  {"train_frames", frames}}},
      {"embed_dim", render.embed_dim},
      {"attr_dim", render.attr_dim},
      {"shards", shards},
      {"grammar", to_json(grammar)},
      {"render", to_json(render)}};
  write_json(dir / "manifest.json", manifest);
  // Read everything back so a zero exit means the corpus is loadable.
  load_dataset(dir);
  std::cout << "corpus: " << train.size() << " train utterances, " << heldout.size() << " held-out, "
            << lexical.pairs.size() << " lexical pairs, " << syntactic.pairs.size() << " syntactic pairs, "
            << consistency.pairs.size() << " consistency pairs -> " << dir.string() << "\n";
}

void cmd_train(const CommandContext& ctx) {
  const Dataset data = load_dataset(data_dir(ctx));
  const fs::path dir = prepare(ctx, "train");
  TrainOptions opts;
  opts.out_dir = dir;
  opts.resume_from = ctx.resume;
  opts.config_hash = hash_json(ctx.config.to_json());
  opts.extra_meta = {{"data_hash", data.hash()}, {"run_config_hash", opts.config_hash}};
  opts.on_log = [&](const MetricRecord& r) {
    log(ctx, "step " + std::to_string(r.step) + " sem " + std::to_string(r.sem_loss) + " cfm " +
                 std::to_string(r.cfm_loss) + " lr " + std::to_string(r.lr));
  };
  const TrainResult res = train(ctx.config.model, ctx.config.train, data.train, opts);
  // Validate the artifact we just wrote.
  const Checkpoint ck = read_checkpoint(dir / "model.ckpt");
  if (ck.step != static_cast<std::uint64_t>(ctx.config.train.steps)) {
    throw IoError("final checkpoint has an unexpected step count");
  }
  if (ctx.plot) {
    std::vector<MetricRecord> all;
    std::ifstream is(dir / "metrics.jsonl");
    std::string line;
    Series sem{"sem_loss", {}, {}}, cfm{"cfm_loss", {}, {}}, tot{"total", {}, {}};
    while (std::getline(is, line)) {
      const auto j = nlohmann::json::parse(line);
      const double s = j.at("step").get<double>();
      sem.x.push_back(s), sem.y.push_back(j.at("sem_loss").get<double>());
      tot.x.push_back(s), tot.y.push_back(j.at("total").get<double>());
      if (ctx.config.model.cfm_enabled) cfm.x.push_back(s), cfm.y.push_back(j.at("cfm_loss").get<double>());
    }
    std::vector<Series> series{tot, sem};
    if (ctx.config.model.cfm_enabled) series.push_back(cfm);
    write_line_chart(dir / "loss.svg", "training loss", "step", series, true);
  }
  const MetricRecord& last = res.log.back();
  std::cout << "trained " << ctx.config.train.steps << " steps: sem_loss " << last.sem_loss << ", cfm_loss "
            << last.cfm_loss << " -> " << (dir / "model.ckpt").string() << "\n";
}

void cmd_generate(const CommandContext& ctx) {
  const Dataset data = load_dataset(data_dir(ctx));
  const LoadedModel lm = load_model(ctx, data);
  const fs::path dir = prepare(ctx, "generate");
  const EvalConfig& e = ctx.config.eval;
  ContinuationSet set = generate_set(ctx, lm.model, data, e.n_prompts, e.continuations_per_prompt,
                                     e.prompt_frames, ctx.config.stream("gen"));
  set.meta = {{"config_hash", hash_json(ctx.config.to_json())},
              {"data_hash", data.hash()},
              {"params_hash", hash_params(lm.model.params())}};
  write_continuations(dir, set, data.render.attr_dim);
  const ContinuationSet back = read_continuations(dir);
  if (back.continuations.size() != set.continuations.size()) throw IoError("continuation round-trip failed");
  std::int64_t frames = 0;
  for (const auto& c : set.continuations) frames += static_cast<std::int64_t>(c.tokens.size());
  std::cout << "generated " << set.continuations.size() << " continuations (" << frames << " frames) -> "
            << dir.string() << "\n";
}

void cmd_eval(const CommandContext& ctx) {
  const Dataset data = load_dataset(data_dir(ctx));
  const LoadedModel lm = load_model(ctx, data);
  const fs::path dir = prepare(ctx, "eval");
  const FlowSlm<float>& model = lm.model;
  const EvalConfig& e = ctx.config.eval;
  const std::uint64_t eval_seed = ctx.config.stream("eval");

  EvalReport r;
  r.seed = eval_seed;
  r.config_hash = hash_json({{"run", ctx.config.to_json()},
                             {"data", data.hash()},
                             {"params", hash_params(model.params())},
                             {"continuations", ctx.continuations ? ctx.continuations->string() : ""},
                             {"ground_truth", ctx.ground_truth}});
  AblationInputs in{&data.train, &data.heldout, &data.lexical, &data.syntactic};
  const EvalReport base = evaluate_cell(model, in);
  for (const auto& [k, v] : base.metrics) r.set(k, v, base.counts.at(k));
  log(ctx, "likelihood metrics done");

  const GrammarScorer scorer(data.grammar);
  r.set("corpus_ppl", corpus_ppl(data.heldout, scorer), static_cast<std::int64_t>(data.heldout.size()));

  std::optional<ContinuationSet> set;
  const fs::path generated = ctx.out / "generate";
  if (ctx.continuations) {
    set = read_continuations(*ctx.continuations);
  } else if (!ctx.ground_truth && fs::exists(generated / "continuations.json")) {
    log(ctx, "scoring continuations from " + generated.string());
    set = read_continuations(generated);
  } else if (ctx.ground_truth) {
    set = ground_truth_set(data, e.n_prompts, e.prompt_frames, ctx.config.stream("gen"));
  } else if (e.run_generation && (model.config().cfm_enabled || model.config().input_mode == InputMode::kToken)) {
    set = generate_set(ctx, model, data, e.n_prompts, e.continuations_per_prompt, e.prompt_frames,
                       ctx.config.stream("gen"));
  }
  if (set && set->meta.contains("data_hash") && set->meta.at("data_hash") != data.hash()) {
    throw HashMismatch("continuations were generated from a different corpus");
  }
  if (set && !set->continuations.empty()) {
    r.set("gen_ppl", gen_ppl(set->continuations, scorer), static_cast<std::int64_t>(set->continuations.size()));
    double sim = 0.0;
    std::int64_t n_sim = 0;
    std::vector<int> frame_rows;
    MatD frames(0, data.render.embed_dim), means(0, data.render.embed_dim);
    for (std::size_t i = 0; i < set->continuations.size(); ++i) {
      const Continuation& c = set->continuations[i];
      const std::string pid = set->prompt_ids[i].substr(0, set->prompt_ids[i].find('#'));
      const Utterance* src = find_prompt(data, pid);
      if (src && c.embeddings.rows() >= 4 && c.prompt_len >= 4) {
        sim += speaker_similarity(src->embeddings.topRows(c.prompt_len), c.embeddings, data.render);
        ++n_sim;
      }
      if (c.embeddings.rows() > 0) {
        const Eigen::Index at = frames.rows();
        frames.conservativeResize(at + c.embeddings.rows(), Eigen::NoChange);
        frames.bottomRows(c.embeddings.rows()) = c.embeddings.cast<double>();
        means.conservativeResize(means.rows() + 1, Eigen::NoChange);
        means.bottomRows(1) = c.embeddings.cast<double>().colwise().mean();
      }
    }
    if (n_sim > 0) r.set("speaker_similarity", sim / n_sim, n_sim);
    Eigen::Index ref_rows = 0;
    for (const auto& u : data.heldout) ref_rows += u.length();
    MatD ref(ref_rows, data.render.embed_dim), ref_means(data.heldout.size(), data.render.embed_dim);
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < data.heldout.size(); ++i) {
      const auto& u = data.heldout[i];
      ref.middleRows(at, u.length()) = u.embeddings.cast<double>();
      ref_means.row(static_cast<Eigen::Index>(i)) = u.embeddings.cast<double>().colwise().mean();
      at += u.length();
    }
    const Eigen::Index need = data.render.embed_dim + 1;
    if (frames.rows() >= need && ref.rows() >= need) {
      r.set("fsd_frame", frechet_distance(frames, ref), frames.rows());
    }
    if (means.rows() >= need && ref_means.rows() >= need) {
      r.set("fsd_utterance", frechet_distance(means, ref_means), means.rows());
    } else {
      log(ctx, "fsd_utterance skipped: needs at least embed_dim+1 continuations");
    }
  }
  if (model.config().cfm_enabled && !data.consistency.pairs.empty()) {
    const int n = std::min<int>(e.n_consistency_pairs, static_cast<int>(data.consistency.pairs.size()));
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += acoustic_consistency_score(model, data.consistency.pairs[i], splitmix64(eval_seed + i));
    }
    if (n > 0) r.set("acoustic_consistency", acc / n, n);
  }
  write_json(dir / "report.json", r.to_json());
  if (EvalReport::from_json(read_json(dir / "report.json")).metrics.size() != r.metrics.size()) {
    throw IoError("report round-trip failed");
  }
  if (ctx.plot) {
    std::vector<BarGroup> groups;
    for (const char* k : {"lexical_acc", "syntactic_acc", "speaker_similarity", "acoustic_consistency"}) {
      if (r.metrics.count(k)) groups.push_back({k, {r.metrics.at(k)}});
    }
    write_bar_chart(dir / "metrics.svg", "evaluation", {"score"}, groups);
  }
  print_report(r);
}

void cmd_ablate(const CommandContext& ctx) {
  const Dataset data = load_dataset(data_dir(ctx));
  const fs::path dir = prepare(ctx, "ablate");
  AblationInputs in{&data.train, &data.heldout, &data.lexical, &data.syntactic};
  const auto rows = run_ablation(ctx.config.ablation, ctx.config.model, ctx.config.train, in,
                                 [&](const AblationRow& row) {
                                   log(ctx, "cell " + row.cell.name() + (row.ok ? " done" : " failed: " + row.error));
                                 });
  nlohmann::json table = ablation_table_json(rows);
  table["config_hash"] = hash_json({{"run", ctx.config.to_json()}, {"data", data.hash()}});
  table["data_hash"] = data.hash();
  table["config"] = ctx.config.to_json();
  write_json(dir / "ablation.json", table);

  std::ofstream md(dir / "ablation.md", std::ios::trunc);
  auto cell = [](const AblationRow& r, const char* k) {
    if (!r.ok) return std::string("failed");
    if (!r.report.metrics.count(k)) return std::string("-");
    std::ostringstream os;
    os << std::fixed << std::setprecision(std::string(k) == "heldout_ce" ? 3 : 1)
       << (std::string(k) == "heldout_ce" ? r.report.metrics.at(k) : 100.0 * r.report.metrics.at(k));
    return os.str();
  };
  md << "| input | objective | lexical acc | syntactic acc | CE |\n|---|---|---|---|---|\n";
  std::cout << std::left << std::setw(8) << "input" << std::setw(20) << "objective" << std::setw(13) << "lexical"
            << std::setw(13) << "syntactic" << "CE\n";
  for (const auto& r : rows) {
    const std::string obj = "sem-" + std::to_string(r.cell.k) + (r.cell.cfm ? " + cfm-" + std::to_string(r.cell.k) : "");
    md << "| " << to_string(r.cell.input_mode) << " | " << obj << " | " << cell(r, "lexical_acc") << " | "
       << cell(r, "syntactic_acc") << " | " << cell(r, "heldout_ce") << " |\n";
    std::cout << std::setw(8) << to_string(r.cell.input_mode) << std::setw(20) << obj << std::setw(13)
              << cell(r, "lexical_acc") << std::setw(13) << cell(r, "syntactic_acc") << cell(r, "heldout_ce")
              << "\n";
  }
  if (!md) throw IoError("cannot write ablation.md");
  if (ctx.plot) {
    std::vector<BarGroup> groups;
    for (const auto& r : rows) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      auto get = [&](const char* k) { return r.ok && r.report.metrics.count(k) ? r.report.metrics.at(k) : nan; };
      groups.push_back({r.cell.name(), {get("lexical_acc"), get("syntactic_acc")}});
    }
    write_bar_chart(dir / "ablation.svg", "paired accuracy by cell", {"lexical", "syntactic"}, groups);
  }
  bool any_failed = false;
  for (const auto& r : rows) any_failed |= !r.ok;
  if (any_failed) throw GenerationError("one or more ablation cells failed; see ablation.json");
}

}  // namespace flowslm::cli
