#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "flowslm/trainer.hpp"

using namespace flowslm;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny(InputMode mode, int k, bool cfm, int vocab = 64) {
  ModelConfig c;
  c.input_mode = mode;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.k_future = k;
  c.cfm_enabled = cfm;
  c.cfm_hidden = 16;
  c.cfm_blocks = 1;
  c.vocab_size = vocab;
  return c;
}

TrainConfig quick(int steps) {
  TrainConfig t;
  t.steps = steps;
  t.warmup_steps = 1;
  t.batch_utterances = 4;
  t.lr_peak = 3e-3;
  t.log_every = 1;
  return t;
}

struct Data {
  GrammarSpec grammar = make_grammar({});
  RenderSpec render = make_render_spec({}, grammar.vocab_size);
  std::vector<Utterance> train = generate_corpus(grammar, render, 24, 5);
  std::vector<Utterance> heldout = generate_corpus(grammar, render, 6, 6);
  MinimalPairSet lexical = make_minimal_pairs(grammar, render, PairKind::kLexical, 6, 7);
  MinimalPairSet syntactic = make_minimal_pairs(grammar, render, PairKind::kSyntactic, 6, 8);
};

const Data& data() {
  static const Data d;
  return d;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("flowslm_trainer_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("learning rate warmup and cosine decay") {
  TrainConfig c;
  c.steps = 100;
  c.warmup_steps = 10;
  c.lr_peak = 1.0;
  CHECK(learning_rate(c, 0) == doctest::Approx(0.1));
  CHECK(learning_rate(c, 4) == doctest::Approx(0.5));
  CHECK(learning_rate(c, 9) == doctest::Approx(1.0));
  CHECK(learning_rate(c, 10) == doctest::Approx(1.0));
  CHECK(learning_rate(c, 55) == doctest::Approx(0.5));
  CHECK(learning_rate(c, 99) == doctest::Approx(0.5 * (1 + std::cos(std::numbers::pi * 89.0 / 90.0))));
  CHECK(learning_rate(c, 100) == doctest::Approx(0.0));
  c.schedule = Schedule::kConstant;
  CHECK(learning_rate(c, 70) == doctest::Approx(1.0));
  c.warmup_steps = 0;
  c.schedule = Schedule::kCosine;
  CHECK(learning_rate(c, 0) == doctest::Approx(1.0));
  for (int s = 1; s < 100; ++s) CHECK(learning_rate(c, s) <= learning_rate(c, s - 1));
}

TEST_CASE("train config validation") {
  auto bad = [](auto edit) {
    TrainConfig c;
    edit(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  CHECK_NOTHROW(TrainConfig{}.validate());
  bad([](TrainConfig& c) { c.warmup_steps = c.steps; });
  bad([](TrainConfig& c) { c.steps = 0; });
  bad([](TrainConfig& c) { c.batch_utterances = 0; });
  bad([](TrainConfig& c) { c.lr_peak = -1; });
  bad([](TrainConfig& c) { c.adam_beta2 = 1.0; });
  bad([](TrainConfig& c) { c.grad_clip_norm = 0; });
  const TrainConfig c = quick(7);
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
}

TEST_CASE("batch indices cover each epoch once and keep the partial batch") {
  const int n = 10, b = 4;
  std::multiset<int> epoch0, epoch1;
  std::vector<int> order0, order1;
  for (int s = 0; s < 3; ++s) {
    const auto idx = batch_indices(3, s, b, n);
    CHECK(idx.size() == (s < 2 ? 4u : 2u));
    epoch0.insert(idx.begin(), idx.end());
    order0.insert(order0.end(), idx.begin(), idx.end());
  }
  for (int s = 3; s < 6; ++s) {
    const auto idx = batch_indices(3, s, b, n);
    epoch1.insert(idx.begin(), idx.end());
    order1.insert(order1.end(), idx.begin(), idx.end());
  }
  for (int i = 0; i < n; ++i) {
    CHECK(epoch0.count(i) == 1);
    CHECK(epoch1.count(i) == 1);
  }
  CHECK(order0 != order1);
  CHECK(batch_indices(3, 1, b, n) == batch_indices(3, 1, b, n));
  CHECK(batch_indices(3, 0, b, n) != batch_indices(4, 0, b, n));
  // Batch larger than the corpus: one batch per epoch.
  CHECK(batch_indices(1, 0, 32, 5).size() == 5);
  CHECK(noise_seed(1, 2, 3) != noise_seed(1, 2, 4));
  CHECK(noise_seed(1, 2, 3) != noise_seed(1, 3, 3));
}

TEST_CASE("gradient clipping") {
  FlowSlm<float> m(tiny(InputMode::kVector, 1, false));
  ParamSet<float> g = m.zero_grad();
  Rng rng(4);
  for (Eigen::Index i = 0; i < g.flat().size(); ++i) g.flat()[i] = static_cast<float>(rng.normal());
  const double before = g.flat().cast<double>().norm();
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(before));
  CHECK(g.flat().cast<double>().norm() <= 1.0 + 1e-6);
  CHECK(g.flat().cast<double>().norm() == doctest::Approx(1.0).epsilon(1e-5));
  g.flat() *= 0.5f;
  const Vec<float> expect = g.flat();
  clip_grad_norm(g, 1.0);
  CHECK(g.flat() == expect);
}

TEST_CASE("adamw first step matches the closed form and decays only flagged tensors") {
  FlowSlm<float> m(tiny(InputMode::kVector, 1, true));
  m.initialize(2);
  const ParamSet<float> before = m.params();
  ParamSet<float> g = m.zero_grad();
  Rng rng(9);
  for (Eigen::Index i = 0; i < g.flat().size(); ++i) g.flat()[i] = static_cast<float>(rng.normal());
  AdamState st(m.layout());
  TrainConfig c;
  c.weight_decay = 0.1;
  const double lr = 1e-2;
  adamw_step(m.params(), g, st, lr, c);
  CHECK(st.t == 1);
  bool saw_decay = false, saw_plain = false;
  for (const auto& s : m.params().layout().specs()) {
    (s.decay ? saw_decay : saw_plain) = true;
    for (std::size_t i = s.offset; i < s.offset + s.size(); i += 7) {
      const auto j = static_cast<Eigen::Index>(i);
      const double p0 = before.flat()[j], gi = g.flat()[j];
      double p = p0 - (s.decay ? lr * c.weight_decay * p0 : 0.0);
      p -= lr * gi / (std::abs(gi) + c.adam_eps);
      CHECK(m.params().flat()[j] == doctest::Approx(p).epsilon(1e-5));
    }
  }
  CHECK(saw_decay);
  CHECK(saw_plain);
  // Layer-norm gains and biases are not decayed.
  for (const auto& s : m.params().layout().specs()) {
    if (s.name.ends_with(".g") || s.name.ends_with(".b")) {
      CHECK_MESSAGE(!s.decay, s.name);
    }
  }
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  TrainConfig t = quick(5);
  t.lr_peak = 0.0;
  const ModelConfig mc = tiny(InputMode::kVector, 2, true);
  FlowSlm<float> init(mc);
  init.initialize(t.seed);
  const TrainResult r = train(mc, t, data().train);
  CHECK(r.model.params().flat() == init.params().flat());
  CHECK(r.steps_done == 5);
}

TEST_CASE("token model learns a two-word toy language") {
  GrammarSpec g;
  g.vocab_size = 8;
  g.lexicon = {{2, 3}, {4, 5}};
  g.word_classes = {WordClass::kSubj, WordClass::kSubj};
  g.templates = {{WordClass::kSubj}};
  g.min_sentences = g.max_sentences = 1;
  g.silence_stop_prob = 1.0;
  RenderOptions ro;
  ro.embed_dim = 12;
  ro.token_dim = 4;
  ro.attr_dim = 4;
  const RenderSpec r = make_render_spec(ro, 8);
  const auto corpus = generate_corpus(g, r, 64, 3);
  ModelConfig mc = tiny(InputMode::kToken, 1, false, 8);
  mc.embed_dim = 12;
  TrainConfig t;
  t.steps = 200;
  t.warmup_steps = 10;
  t.lr_peak = 5e-3;
  t.batch_utterances = 16;
  t.log_every = 1;
  const TrainResult res = train(mc, t, corpus);
  REQUIRE(res.log.size() == 200);
  const double first = res.log.front().sem_loss;
  CHECK(first == doctest::Approx(std::log(8.0)).epsilon(0.05));
  CHECK(res.log.back().sem_loss < 0.25 * first);
  auto window = [&](std::size_t from) {
    double s = 0;
    for (std::size_t i = from; i < from + 20; ++i) s += res.log[i].total;
    return s / 20;
  };
  CHECK(window(180) < window(0));
  for (std::size_t i = 1; i < res.log.size(); ++i) CHECK(res.log[i].step == res.log[i - 1].step + 1);
}

TEST_CASE("training is reproducible and logs to disk") {
  const ModelConfig mc = tiny(InputMode::kVector, 2, true);
  TrainConfig t = quick(6);
  t.log_every = 2;
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  TrainOptions oa;
  oa.out_dir = a;
  oa.config_hash = "abc";
  TrainOptions ob = oa;
  ob.out_dir = b;
  const TrainResult ra = train(mc, t, data().train, oa);
  const TrainResult rb = train(mc, t, data().train, ob);
  CHECK(ra.model.params().flat() == rb.model.params().flat());
  CHECK(slurp(a / "metrics.jsonl") == slurp(b / "metrics.jsonl"));
  // Logged at step 1, every log_every, and the last step.
  std::vector<int> steps;
  std::istringstream lines(slurp(a / "metrics.jsonl"));
  for (std::string l; std::getline(lines, l);) {
    const auto j = nlohmann::json::parse(l);
    steps.push_back(j.at("step").get<int>());
    CHECK(j.at("config_hash") == "abc");
    CHECK(j.at("workers") == 1);
    CHECK(j.contains("lr"));
    CHECK(j.contains("grad_norm"));
  }
  CHECK(steps == std::vector<int>{1, 2, 4, 6});
  CHECK(fs::exists(a / "timing.jsonl"));
  const Checkpoint ck = read_checkpoint(a / "model.ckpt");
  CHECK(ck.step == 6);
  CHECK(ck.config == mc);
  t.seed = 1;
  const TrainResult rc = train(mc, t, data().train);
  CHECK(rc.model.params().flat() != ra.model.params().flat());
}

TEST_CASE("resume continues with an identical log") {
  const ModelConfig mc = tiny(InputMode::kVector, 2, true);
  TrainConfig t = quick(8);
  t.checkpoint_every = 4;
  const fs::path a = scratch("resume_a"), b = scratch("resume_b");
  TrainOptions oa;
  oa.out_dir = a;
  const TrainResult full = train(mc, t, data().train, oa);
  REQUIRE(fs::exists(a / "checkpoints" / "step_0000004.ckpt"));
  fs::copy(a, b, fs::copy_options::recursive);
  TrainOptions ob;
  ob.out_dir = b;
  ob.resume_from = b / "checkpoints" / "step_0000004.ckpt";
  const TrainResult resumed = train(mc, t, data().train, ob);
  CHECK(resumed.model.params().flat() == full.model.params().flat());
  CHECK(slurp(a / "metrics.jsonl") == slurp(b / "metrics.jsonl"));
  REQUIRE(resumed.log.size() == 4);
  CHECK(resumed.log.front().step == 5);

  TrainConfig other = t;
  other.seed = 7;
  CHECK_THROWS_AS(train(mc, other, data().train, ob), ConfigError);
  CHECK_THROWS_AS(train(tiny(InputMode::kVector, 1, true), t, data().train, ob), ConfigError);
  // A plain model checkpoint carries no optimizer state.
  const fs::path plain = scratch("resume_plain.ckpt");
  write_checkpoint(plain, make_checkpoint(full.model, 4));
  TrainOptions oc;
  oc.resume_from = plain;
  CHECK_THROWS_AS(train(mc, t, data().train, oc), ConfigError);
}

TEST_CASE("ablation grid cells") {
  AblationGrid g;
  const auto cells = g.cells();
  REQUIRE(cells.size() == 6);
  std::set<std::string> names;
  for (const auto& c : cells) {
    names.insert(c.name());
    CHECK_FALSE((c.cfm && c.input_mode == InputMode::kToken));
  }
  CHECK(names == std::set<std::string>{"token-k1", "token-k4", "vector-k1", "vector-k4",
                                       "vector-k1-cfm", "vector-k4-cfm"});
  AblationGrid bad;
  bad.k_values = {0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.input_modes = {InputMode::kToken};
  bad.cfm_enabled = {true};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.k_values.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("ablation runs every cell and reports a table") {
  const Data& d = data();
  AblationInputs in{&d.train, &d.heldout, &d.lexical, &d.syntactic};
  int seen = 0;
  const auto rows = run_ablation(AblationGrid{}, tiny(InputMode::kVector, 1, false), quick(3), in,
                                 [&](const AblationRow&) { ++seen; });
  CHECK(seen == 6);
  REQUIRE(rows.size() == 6);
  for (const auto& r : rows) {
    CHECK(r.ok);
    CHECK(r.report.metrics.count("heldout_ce") == 1);
    CHECK(r.report.metrics.count("lexical_acc") == 1);
    CHECK(r.report.metrics.count("syntactic_acc") == 1);
    CHECK(r.report.counts.at("lexical_acc") == 6);
    CHECK(r.config.at("model").at("k_future") == r.cell.k);
  }
  const auto table = ablation_table_json(rows);
  CHECK(table.at("columns") ==
        nlohmann::json{"input", "objective", "lexical_acc", "syntactic_acc", "heldout_ce"});
  REQUIRE(table.at("rows").size() == 6);
  const auto& last = table.at("rows").back();
  CHECK(last.at("cell") == "vector-k4-cfm");
  CHECK(last.at("objective") == "sem-4 + cfm-4");
  CHECK(last.at("report").at("metrics").contains("heldout_ce"));
}

TEST_CASE("failing ablation cells are recorded and the rest still run") {
  const Data& d = data();
  AblationInputs in{&d.train, &d.heldout, nullptr, nullptr};
  ModelConfig broken = tiny(InputMode::kVector, 1, false);
  broken.n_heads = 3;
  AblationGrid g;
  g.k_values = {1};
  const auto rows = run_ablation(g, broken, quick(2), in);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.error.empty());
  }
  const auto table = ablation_table_json(rows);
  CHECK(table.at("rows")[0].at("ok") == false);
  CHECK(table.at("rows")[0].contains("error"));
}

TEST_CASE("evaluate_cell with only held-out data reports cross-entropy only") {
  FlowSlm<float> m(tiny(InputMode::kVector, 1, false));
  m.initialize(0);
  const Data& d = data();
  MinimalPairSet empty;
  AblationInputs in{&d.train, &d.heldout, &empty, nullptr};
  const EvalReport r = evaluate_cell(m, in);
  CHECK(r.metrics.size() == 1);
  CHECK(r.metrics.count("heldout_ce") == 1);
  std::int64_t tokens = 0;
  for (const auto& u : d.heldout) tokens += u.length();
  CHECK(r.counts.at("heldout_ce") == tokens);
}
