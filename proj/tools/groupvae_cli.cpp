#include <CLI11.hpp>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "groupvae/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"GroupVAE experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  bool force = false;
  int jobs = 1;
  std::uint64_t seed_offset = 0;
  std::string which_run;
  std::vector<int> anchors = {0};

  auto add_common = [&](CLI::App* sub, bool with_force, bool with_jobs) {
    sub->add_option("--config", config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    if (with_force) sub->add_flag("--force", force, "overwrite existing outputs");
    if (with_jobs) {
      sub->add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
      sub->add_option("--seed-offset", seed_offset, "added to every seed");
    }
  };

  CLI::App* generate = app.add_subcommand("generate", "render the dataset");
  add_common(generate, true, false);

  CLI::App* train = app.add_subcommand("train", "train the sweep");
  add_common(train, true, true);

  CLI::App* eval = app.add_subcommand("eval", "metrics and report tables");
  add_common(eval, false, false);
  eval->add_option("--seed-offset", seed_offset, "added to every seed");

  CLI::App* traverse = app.add_subcommand("traverse", "latent traversals");
  add_common(traverse, false, false);
  traverse->add_option("--run", which_run, "run id, e.g. groupvae_v8_s0")
      ->required();
  traverse->add_option("--anchors", anchors, "anchor row indices");

  CLI::App* fair = app.add_subcommand("fair", "fairness pipeline");
  add_common(fair, true, true);

  CLI11_PARSE(app, argc, argv);

  try {
    const groupvae::ExperimentConfig cfg = groupvae::load_config(config_path);
    if (generate->parsed()) {
      groupvae::run_generate(cfg, out_dir, force);
    } else if (train->parsed()) {
      groupvae::run_train(cfg, out_dir, force, seed_offset, jobs);
    } else if (eval->parsed()) {
      groupvae::run_eval(cfg, out_dir, seed_offset);
    } else if (traverse->parsed()) {
      groupvae::run_traverse(cfg, out_dir, which_run, anchors);
    } else if (fair->parsed()) {
      groupvae::run_fair(cfg, out_dir, force, seed_offset, jobs);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
