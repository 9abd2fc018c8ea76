#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

using namespace flowslm;
using namespace flowslm::cli;

int main(int argc, char** argv) {
  CLI::App app{"flowslm: joint token/embedding language modelling on a synthetic corpus"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, ckpt_path, resume_path, cont_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool verbose = false, plot = false, ground_truth = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", out_path, "run directory (overrides global.out_dir)");
    sub->add_option("--seed", seed, "root seed (overrides global.seed)");
    sub->add_option("--set", overrides, "override a key, e.g. --set model.d_model=64")->take_all();
    sub->add_flag("--verbose,-v", verbose, "progress on stderr");
    sub->add_flag("--plot", plot, "write SVG charts next to the outputs");
    sub->add_option("--data", data_path, "corpus directory (default <out>/data)");
  };
  auto* make_data = app.add_subcommand("make-data", "generate corpus shards and minimal-pair sets");
  auto* train = app.add_subcommand("train", "train a model");
  auto* generate = app.add_subcommand("generate", "continue held-out prompts");
  auto* eval = app.add_subcommand("eval", "evaluate a trained model");
  auto* ablate = app.add_subcommand("ablate", "train and evaluate the ablation grid");
  for (auto* s : {make_data, train, generate, eval, ablate}) common(s);
  train->add_option("--resume", resume_path, "continue from a training checkpoint")->check(CLI::ExistingFile);
  for (auto* s : {generate, eval}) {
    s->add_option("--checkpoint", ckpt_path, "model checkpoint (default <out>/train/model.ckpt)");
  }
  eval->add_option("--continuations", cont_path, "score an existing continuation directory");
  eval->add_flag("--ground-truth", ground_truth, "score held-out suffixes as if generated");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (seed) overrides.push_back("global.seed=" + std::to_string(*seed));
    if (!out_path.empty()) overrides.push_back("global.out_dir=" + out_path);
    const std::filesystem::path cfg(config_path);
    CommandContext ctx;
    ctx.config = RunConfig::load(config_path.empty() ? nullptr : &cfg, overrides);
    ctx.out = ctx.config.out_dir;
    ctx.verbose = verbose;
    ctx.plot = plot;
    if (!data_path.empty()) ctx.data_dir = data_path;
    if (!ckpt_path.empty()) ctx.checkpoint = ckpt_path;
    if (!resume_path.empty()) ctx.resume = resume_path;
    if (!cont_path.empty()) ctx.continuations = cont_path;
    ctx.ground_truth = ground_truth;

    if (make_data->parsed()) cmd_make_data(ctx);
    if (train->parsed()) cmd_train(ctx);
    if (generate->parsed()) cmd_generate(ctx);
    if (eval->parsed()) cmd_eval(ctx);
    if (ablate->parsed()) cmd_ablate(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
