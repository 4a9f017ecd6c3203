#include "belieffit/app/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "belieffit/error.hpp"

namespace belieffit::app {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigurationError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw ConfigurationError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigurationError(where + "." + key + ": " + e.what());
  }
}

Vec2 vec2_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ConfigurationError(where + " must be a 2-element array");
  return {j[0].get<double>(), j[1].get<double>()};
}

json vec2_to(const Vec2& v) { return json::array({v.x(), v.y()}); }

Mat2 mat2_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_array() || !j[1].is_array() || j[0].size() != 2 ||
      j[1].size() != 2)
    throw ConfigurationError(where + " must be a 2x2 nested array");
  Mat2 m;
  m << j[0][0].get<double>(), j[0][1].get<double>(), j[1][0].get<double>(), j[1][1].get<double>();
  return m;
}

json mat2_to(const Mat2& m) { return json::array({json::array({m(0, 0), m(0, 1)}), json::array({m(1, 0), m(1, 1)})}); }

json rates_to(const MatchObservationModel& m) { return {{"tpr", m.tpr()}, {"fpr", m.fpr()}}; }

MatchObservationModel rates_from(const json& j, const std::string& where) {
  check_keys(j, {"tpr", "fpr"}, where);
  if (!j.contains("tpr") || !j.contains("fpr")) throw ConfigurationError(where + " needs tpr and fpr");
  return {j.at("tpr").get<double>(), j.at("fpr").get<double>()};
}

void read_env(const json& j, EnvConfig& env) {
  const std::string w = "env";
  check_keys(j,
             {"n_holes", "n_types", "clearance", "detector_error_bound", "alpha", "sigma_init", "capture_radius",
              "workspace", "horizon_high", "horizon_low", "rng_seed"},
             w);
  read(j, "n_holes", env.n_holes, w);
  read(j, "n_types", env.n_types, w);
  read(j, "clearance", env.clearance, w);
  read(j, "detector_error_bound", env.detector_error_bound, w);
  read(j, "alpha", env.alpha, w);
  read(j, "sigma_init", env.sigma_init, w);
  read(j, "capture_radius", env.capture_radius, w);
  read(j, "horizon_high", env.horizon_high, w);
  read(j, "horizon_low", env.horizon_low, w);
  read(j, "rng_seed", env.rng_seed, w);
  if (j.contains("workspace")) {
    const auto& ws = j.at("workspace");
    check_keys(ws, {"lo", "hi"}, "env.workspace");
    if (ws.contains("lo")) env.workspace.lo = vec2_from(ws.at("lo"), "env.workspace.lo");
    if (ws.contains("hi")) env.workspace.hi = vec2_from(ws.at("hi"), "env.workspace.hi");
  }
}

void read_spiral(const json& j, SpiralParams& s) {
  const std::string w = "spiral";
  check_keys(j, {"r_max", "n_rot", "delta_z", "sigma_wiggle"}, w);
  read(j, "r_max", s.r_max, w);
  read(j, "n_rot", s.n_rot, w);
  read(j, "delta_z", s.delta_z, w);
  read(j, "sigma_wiggle", s.sigma_wiggle, w);
}

void read_sensors(const json& j, SensorModel& s) {
  check_keys(j, {"position", "match"}, "sensors");
  if (j.contains("position")) {
    const auto& p = j.at("position");
    const std::string w = "sensors.position";
    check_keys(p, {"bias", "R_true", "uninformative_scale", "r_info"}, w);
    if (p.contains("bias")) s.position.bias = vec2_from(p.at("bias"), w + ".bias");
    if (p.contains("R_true")) s.position.R_true = mat2_from(p.at("R_true"), w + ".R_true");
    read(p, "uninformative_scale", s.position.uninformative_scale, w);
    read(p, "r_info", s.position.r_info, w);
  }
  if (j.contains("match")) {
    const auto& m = j.at("match");
    const std::string w = "sensors.match";
    check_keys(m, {"tpr_true", "fpr_true"}, w);
    read(m, "tpr_true", s.match.tpr_true, w);
    read(m, "fpr_true", s.match.fpr_true, w);
  }
}

void read_training(const json& j, TrainingSettings& t) {
  const std::string w = "training";
  check_keys(j, {"n_interactions", "learning_rate", "epochs", "batch_size", "trailing_window", "init"}, w);
  read(j, "n_interactions", t.n_interactions, w);
  read(j, "learning_rate", t.fit.learning_rate, w);
  read(j, "epochs", t.fit.epochs, w);
  read(j, "batch_size", t.fit.batch_size, w);
  read(j, "trailing_window", t.fit.trailing_window, w);
  if (j.contains("init")) t.init = learned_params_from_json(j.at("init"));
}

void read_experiment(const json& j, ExperimentSettings& e) {
  const std::string w = "experiment";
  check_keys(j, {"trials", "seed_groups", "variants", "assembly_step_cap", "position_steps"}, w);
  read(j, "trials", e.trials, w);
  read(j, "seed_groups", e.seed_groups, w);
  read(j, "assembly_step_cap", e.assembly_step_cap, w);
  read(j, "position_steps", e.position_steps, w);
  if (j.contains("variants")) {
    e.variants.clear();
    for (const auto& v : j.at("variants")) e.variants.push_back(parse_variant(v.get<std::string>()));
  }
}

}  // namespace

std::string to_string(FilterObservationModel m) { return m == FilterObservationModel::Head ? "head" : "trained_h"; }

void AppConfig::validate() const {
  try {
    env.validate();
    spiral.validate();
    sensors.validate();
  } catch (const InvalidInput& e) {
    throw ConfigurationError(e.what());
  }
  if (training.n_interactions < 2) throw ConfigurationError("training.n_interactions must be >= 2");
  if (training.fit.epochs < 0 || training.fit.batch_size < 1 || !(training.fit.learning_rate > 0.0))
    throw ConfigurationError("training options are invalid");
  if (experiment.trials < 0) throw ConfigurationError("experiment.trials must be >= 1");
  if (experiment.seed_groups < 1) throw ConfigurationError("experiment.seed_groups must be >= 1");
  if (experiment.assembly_step_cap < 1 || experiment.position_steps < 1)
    throw ConfigurationError("experiment step counts must be >= 1");
  if (!(calibration.target_alpha > 0.0 && calibration.target_alpha <= 1.0))
    throw ConfigurationError("calibration.target_alpha must lie in (0, 1]");
  if (calibration.trials < 1) throw ConfigurationError("calibration.trials must be >= 1");
  if (learned_params.empty()) throw ConfigurationError("learned_params must be \"train\" or a file path");
  if (learned_params != "train") {
    const auto path = std::filesystem::path(learned_params).is_absolute() ? std::filesystem::path(learned_params)
                                                                           : base_dir / learned_params;
    if (!std::filesystem::exists(path))
      throw ConfigurationError("learned params file not found: " + path.string());
  }
}

AppConfig config_from_json(const json& j) {
  check_keys(j,
             {"env", "spiral", "sensors", "training", "experiment", "calibration", "learned_params",
              "filter_observation_model"},
             "config");
  AppConfig c;
  if (j.contains("env")) read_env(j.at("env"), c.env);
  if (j.contains("spiral")) read_spiral(j.at("spiral"), c.spiral);
  if (j.contains("sensors")) read_sensors(j.at("sensors"), c.sensors);
  if (j.contains("training")) read_training(j.at("training"), c.training);
  if (j.contains("experiment")) read_experiment(j.at("experiment"), c.experiment);
  if (j.contains("calibration")) {
    const auto& cal = j.at("calibration");
    check_keys(cal, {"target_alpha", "trials", "result"}, "calibration");
    read(cal, "target_alpha", c.calibration.target_alpha, "calibration");
    read(cal, "trials", c.calibration.trials, "calibration");
    if (cal.contains("result")) c.calibration_result = cal.at("result");
  }
  read(j, "learned_params", c.learned_params, "config");
  if (j.contains("filter_observation_model")) {
    const auto s = j.at("filter_observation_model").get<std::string>();
    if (s == "head")
      c.filter_observation_model = FilterObservationModel::Head;
    else if (s == "trained_h")
      c.filter_observation_model = FilterObservationModel::TrainedH;
    else
      throw ConfigurationError("filter_observation_model must be \"head\" or \"trained_h\"");
  }
  return c;
}

json config_to_json(const AppConfig& c) {
  json j;
  j["env"] = {
      {"n_holes", c.env.n_holes},
      {"n_types", c.env.n_types},
      {"clearance", c.env.clearance},
      {"detector_error_bound", c.env.detector_error_bound},
      {"alpha", c.env.alpha},
      {"sigma_init", c.env.sigma_init},
      {"capture_radius", c.env.capture_radius},
      {"workspace", {{"lo", vec2_to(c.env.workspace.lo)}, {"hi", vec2_to(c.env.workspace.hi)}}},
      {"horizon_high", c.env.horizon_high},
      {"horizon_low", c.env.horizon_low},
      {"rng_seed", c.env.rng_seed},
  };
  j["spiral"] = {{"r_max", c.spiral.r_max},
                 {"n_rot", c.spiral.n_rot},
                 {"delta_z", c.spiral.delta_z},
                 {"sigma_wiggle", c.spiral.sigma_wiggle}};
  j["sensors"] = {{"position",
                   {{"bias", vec2_to(c.sensors.position.bias)},
                    {"R_true", mat2_to(c.sensors.position.R_true)},
                    {"uninformative_scale", c.sensors.position.uninformative_scale},
                    {"r_info", c.sensors.position.r_info}}},
                  {"match", {{"tpr_true", c.sensors.match.tpr_true}, {"fpr_true", c.sensors.match.fpr_true}}}};
  j["training"] = {{"n_interactions", c.training.n_interactions},
                   {"learning_rate", c.training.fit.learning_rate},
                   {"epochs", c.training.fit.epochs},
                   {"batch_size", c.training.fit.batch_size},
                   {"trailing_window", c.training.fit.trailing_window},
                   {"init", learned_params_to_json(c.training.init)}};
  json variants = json::array();
  for (auto v : c.experiment.variants) variants.push_back(std::string(to_string(v)));
  j["experiment"] = {{"trials", c.experiment.trials},
                     {"seed_groups", c.experiment.seed_groups},
                     {"variants", variants},
                     {"assembly_step_cap", c.experiment.assembly_step_cap},
                     {"position_steps", c.experiment.position_steps}};
  j["calibration"] = {{"target_alpha", c.calibration.target_alpha}, {"trials", c.calibration.trials}};
  if (c.calibration_result) j["calibration"]["result"] = *c.calibration_result;
  j["learned_params"] = c.learned_params;
  j["filter_observation_model"] = to_string(c.filter_observation_model);
  return j;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigurationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  AppConfig c;
  try {
    c = config_from_json(j);
  } catch (const InvalidInput& e) {
    throw ConfigurationError(e.what());
  } catch (const json::exception& e) {
    throw ConfigurationError(e.what());
  }
  c.base_dir = path.parent_path();
  c.validate();
  return c;
}

json learned_params_to_json(const LearnedParams& p) {
  return {{"R", mat2_to(p.R)}, {"observation", rates_to(p.observation)}, {"head", rates_to(p.head)}};
}

LearnedParams learned_params_from_json(const json& j) {
  check_keys(j, {"R", "observation", "head"}, "learned params");
  LearnedParams p;
  if (j.contains("R")) p.R = mat2_from(j.at("R"), "learned params R");
  if (j.contains("observation")) p.observation = rates_from(j.at("observation"), "learned params observation");
  if (j.contains("head")) p.head = rates_from(j.at("head"), "learned params head");
  try {
    (void)p.to_unconstrained();
  } catch (const InvalidInput& e) {
    throw ConfigurationError(e.what());
  }
  return p;
}

LearnedParams load_learned_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open learned params file: " + path.string());
  try {
    return learned_params_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigurationError("learned params " + path.string() + ": " + e.what());
  }
}

FilterModels filter_models(const LearnedParams& params, FilterObservationModel which) {
  FilterModels m;
  m.position.R = params.R;
  m.match = which == FilterObservationModel::Head ? params.head : params.observation;
  return m;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace belieffit::app
