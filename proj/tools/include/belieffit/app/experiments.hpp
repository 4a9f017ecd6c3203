#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "belieffit/app/config.hpp"

namespace belieffit::app {

enum class ExperimentKind { PositionEstimation, MatchingInsertion, Assembly };

std::string to_string(ExperimentKind k);
/// Throws ConfigurationError on an unknown name.
ExperimentKind parse_experiment_kind(const std::string& name);

int default_trials(ExperimentKind k);
std::vector<PolicyVariant> default_variants(ExperimentKind k);

/// Trial k belongs to seed group g = k mod G with in-group index k div G:
///   group_seed = derive_seed(master, World, g)
///   trial_seed = derive_seed(group_seed, World, k div G)
std::uint64_t trial_seed(std::uint64_t master, int trial, int seed_groups);

struct TrainingRun {
  std::vector<InteractionRecord> dataset;
  FitResult fit;
  bool generated = false;
};

/// Fits learned parameters. Generates `n_interactions` records when `dataset`
/// is empty. The dataset stream uses derive_seed(master, Dataset) and the
/// minibatch shuffles use derive_seed(master, Shuffle).
TrainingRun train_parameters(const AppConfig& config, std::uint64_t master,
                             std::vector<InteractionRecord> dataset = {});

/// Learned parameters from the config: loaded from file, or trained.
LearnedParams resolve_learned_params(const AppConfig& config, std::uint64_t master);

AgentModels agent_models(const AppConfig& config, const LearnedParams& params);

struct TrialOutcome {
  std::uint64_t seed = 0;
  std::vector<EpisodeLog> episodes;
  /// position_estimation: ||mu_t - p|| for t = 0..K.
  std::vector<double> position_error;
  /// matching_insertion: attempt index of the first success, 0 if none.
  int first_success = 0;
  /// assembly
  std::vector<int> attempts;
  std::vector<bool> intervened;
  int cumulative_attempts = 0;
  int interventions = 0;
};

struct ExperimentRun {
  ExperimentKind kind = ExperimentKind::PositionEstimation;
  std::uint64_t master_seed = 0;
  int trials = 0;
  int seed_groups = 5;
  int horizon = 0;
  std::vector<PolicyVariant> variants;
  /// outcomes[v][trial]
  std::vector<std::vector<TrialOutcome>> outcomes;
};

struct ExperimentRequest {
  ExperimentKind kind = ExperimentKind::PositionEstimation;
  std::uint64_t master_seed = 0;
  int trials = 0;
  std::vector<PolicyVariant> variants;
  std::size_t threads = 1;
};

/// Runs every (variant, trial) pair. Variants share each trial's world,
/// detections and policy stream.
ExperimentRun run_experiment(const AppConfig& config, const AgentModels& models, const ExperimentRequest& request);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double sem() const;
  int n = 0;
};
MeanStd mean_std(const std::vector<double>& values);

/// Per variant, per t: statistics of ||mu_t - p|| over trials.
std::vector<std::vector<MeanStd>> position_error_by_step(const ExperimentRun& run);
/// Per variant, per step k = 1..K: fraction of trials that fitted within k attempts.
std::vector<std::vector<double>> success_by_step(const ExperimentRun& run);

struct AssemblySummary {
  MeanStd cumulative_attempts;
  double intervention_rate = 0.0;
  int interventions = 0;
  int pegs = 0;
  /// Mean cumulative attempts after the first n pegs, n = 1..pegs per trial.
  std::vector<MeanStd> by_peg_count;
};
std::vector<AssemblySummary> assembly_summary(const ExperimentRun& run);

struct ResultRow {
  std::string experiment;
  std::string variant;
  int trial = 0;
  int step = 0;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
};
inline constexpr const char* kResultsCsvHeader = "experiment,variant,trial,step,metric,value,seed";

/// Long-format rows sorted by (variant, trial, step, metric).
std::vector<ResultRow> result_rows(const ExperimentRun& run);

/// Writes results.csv, the kind-specific CSV files, episodes.jsonl, run.json
/// and summary.txt into `dir`, validates every CSV, and returns the summary.
std::string write_experiment_outputs(const ExperimentRun& run, const std::filesystem::path& dir);

/// Checks that a CSV file starts with `header` and every row has the same
/// number of finite-or-text cells. Throws Error.
void validate_csv(const std::filesystem::path& path, const std::string& header);

}  // namespace belieffit::app
