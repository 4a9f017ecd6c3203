#include <iostream>

#include <CLI11.hpp>

#include "belieffit/app/commands.hpp"

int main(int argc, char** argv) {
  using namespace belieffit::app;
  CLI::App app{"Belief-space peg-in-hole assembly: calibration, training and experiments"};
  app.require_subcommand(1);

  CommandOptions opts;
  std::string seed_text;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "JSON configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed, "Master seed (defaults to env.rng_seed)");
    cmd->add_option("--out", opts.out, "Output file or directory");
  };

  auto* calibrate = app.add_subcommand("calibrate", "Tune capture_radius so matched rollouts succeed at alpha");
  add_common(calibrate);
  calibrate->add_option("--trials", opts.trials, "Calibration rollouts")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Fit R and the match models by minimizing the NLL loss");
  add_common(train);
  train->add_option("--generate", opts.generate, "Generate this many interactions")->check(CLI::PositiveNumber);
  train->add_option("--dataset", opts.dataset, "Dataset CSV to train on")->check(CLI::ExistingFile);

  std::string kind;
  auto* experiment = app.add_subcommand("experiment", "Run position_estimation, matching_insertion or assembly");
  add_common(experiment);
  experiment->add_option("kind", kind, "Experiment kind")->required();
  experiment->add_option("--trials", opts.trials, "Trials per variant")->check(CLI::PositiveNumber);
  experiment->add_option("--variants", opts.variants, "Policy variants to run")->delimiter(',');

  std::filesystem::path replay_dir;
  int trial = 0;
  std::vector<std::string> replay_variants;
  auto* replay = app.add_subcommand("replay", "Print the step-by-step log of one trial");
  replay->add_option("dir", replay_dir, "Experiment output directory");
  replay->add_option("--out", replay_dir, "Experiment output directory");
  replay->add_option("--trial", trial, "Trial id")->required();
  replay->add_option("--variants", replay_variants, "Restrict to these variants")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (calibrate->parsed()) return cmd_calibrate(opts, std::cout, std::cerr);
  if (train->parsed()) return cmd_train(opts, std::cout, std::cerr);
  if (experiment->parsed()) return cmd_experiment(kind, opts, std::cout, std::cerr);
  if (replay_dir.empty()) {
    std::cerr << "error: replay needs an experiment output directory\n";
    return kExitError;
  }
  return cmd_replay(replay_dir, trial, replay_variants, std::cout, std::cerr);
}
