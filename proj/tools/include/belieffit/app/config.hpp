#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "belieffit/policy.hpp"
#include "belieffit/training.hpp"

namespace belieffit::app {

struct TrainingSettings {
  int n_interactions = 3000;
  FitOptions fit;
  LearnedParams init;
};

struct ExperimentSettings {
  /// 0 selects the default for the experiment kind.
  int trials = 0;
  int seed_groups = 5;
  std::vector<PolicyVariant> variants;
  int assembly_step_cap = 30;
  int position_steps = 5;
};

struct CalibrationSettings {
  double target_alpha = 0.34;
  int trials = 1000;
};

enum class FilterObservationModel { Head, TrainedH };

struct AppConfig {
  EnvConfig env;
  SpiralParams spiral;
  SensorModel sensors;
  TrainingSettings training;
  ExperimentSettings experiment;
  CalibrationSettings calibration;
  /// "train" or a path to a learned-parameters JSON file.
  std::string learned_params = "train";
  FilterObservationModel filter_observation_model = FilterObservationModel::Head;
  /// Directory of the config file; relative paths resolve against it.
  std::filesystem::path base_dir;
  /// Calibration result block carried through from a calibrated config.
  std::optional<nlohmann::json> calibration_result;

  void validate() const;
};

AppConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const AppConfig& config);
/// Reads and validates a config file. Throws ConfigurationError.
AppConfig load_config(const std::filesystem::path& path);

nlohmann::json learned_params_to_json(const LearnedParams& params);
LearnedParams learned_params_from_json(const nlohmann::json& j);
LearnedParams load_learned_params(const std::filesystem::path& path);

/// Filter models built from learned parameters under the configured choice of
/// observation model.
FilterModels filter_models(const LearnedParams& params, FilterObservationModel which);

std::string to_string(FilterObservationModel m);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace belieffit::app
