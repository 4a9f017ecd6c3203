#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "belieffit/app/commands.hpp"
#include "belieffit/app/config.hpp"
#include "belieffit/app/experiments.hpp"
#include "belieffit/error.hpp"

using namespace belieffit;
using namespace belieffit::app;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("belieffit_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

fs::path quick_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << R"({"training": {"n_interactions": 200, "epochs": 20})" << extra << "}";
  return p;
}

}  // namespace

TEST_CASE("config defaults, round trip and strict keys") {
  const AppConfig d = config_from_json(nlohmann::json::object());
  CHECK(d.env.n_holes == 5);
  CHECK(d.learned_params == "train");
  const AppConfig r = config_from_json(config_to_json(d));
  CHECK(config_to_json(r) == config_to_json(d));

  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"bogus", 1}}), ConfigurationError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"env", {{"n_hole", 1}}}}), ConfigurationError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"filter_observation_model", "x"}}), ConfigurationError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"experiment", {{"variants", {"nope"}}}}}), InvalidInput);

  AppConfig bad = d;
  bad.env.alpha = 2.0;
  CHECK_THROWS_AS(bad.validate(), ConfigurationError);
  bad = d;
  bad.learned_params = "/definitely/missing.json";
  CHECK_THROWS_AS(bad.validate(), ConfigurationError);
}

TEST_CASE("learned params JSON round trip") {
  LearnedParams p;
  p.R << 2e-5, 1e-7, 1e-7, 3e-5;
  p.head = {0.8, 0.1};
  const auto q = learned_params_from_json(learned_params_to_json(p));
  CHECK(q.R == p.R);
  CHECK(q.head.tpr() == p.head.tpr());
  const nlohmann::json not_pd = {{"R", {{1.0, 2.0}, {2.0, 1.0}}}};
  CHECK_THROWS_AS(learned_params_from_json(not_pd), ConfigurationError);
}

TEST_CASE("trial seeds are independent of the trial count") {
  CHECK(trial_seed(1, 7, 5) == trial_seed(1, 7, 5));
  CHECK(trial_seed(1, 7, 5) != trial_seed(1, 8, 5));
  CHECK(trial_seed(1, 0, 5) != trial_seed(2, 0, 5));
}

TEST_CASE("calibrate writes a deterministic calibrated config") {
  const auto dir = scratch("calibrate");
  CommandOptions o;
  o.config = quick_config(dir);
  o.trials = 300;
  o.out = dir / "a.json";
  std::ostringstream out, err;
  REQUIRE(cmd_calibrate(o, out, err) == kExitOk);
  o.out = dir / "b.json";
  REQUIRE(cmd_calibrate(o, out, err) == kExitOk);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  const auto cal = load_config(dir / "a.json");
  REQUIRE(cal.calibration_result);
  const double alpha_hat = (*cal.calibration_result)["alpha_hat"].get<double>();
  CHECK(alpha_hat >= 0.29);
  CHECK(alpha_hat <= 0.39);
  CHECK(cal.env.capture_radius == (*cal.calibration_result)["capture_radius"].get<double>());
  CHECK(out.str().find("alpha_hat") != std::string::npos);
}

TEST_CASE("calibrate at alpha 1 warns; infeasible targets fail") {
  const auto dir = scratch("calibrate_bound");
  CommandOptions o;
  o.config = quick_config(dir, R"(, "calibration": {"target_alpha": 1.0, "trials": 200})");
  o.out = dir / "c.json";
  std::ostringstream out, err;
  CHECK(cmd_calibrate(o, out, err) == kExitOk);
  CHECK(err.str().find("warning") != std::string::npos);
  const auto cal = load_config(dir / "c.json");
  CHECK((*cal.calibration_result)["at_feasibility_bound"].get<bool>());

  o.config = quick_config(dir, R"(, "calibration": {"target_alpha": 1.5})");
  std::ostringstream e2;
  CHECK(cmd_calibrate(o, out, e2) != kExitOk);
  CHECK(e2.str().find("target_alpha") != std::string::npos);
}

TEST_CASE("train writes params, loss curve and dataset") {
  const auto dir = scratch("train");
  CommandOptions o;
  o.config = quick_config(dir);
  o.generate = 300;
  o.out = dir / "run";
  std::ostringstream out, err;
  REQUIRE(cmd_train(o, out, err) == kExitOk);
  CHECK(out.str().find("150 matched / 150 mismatched") != std::string::npos);
  CHECK(out.str().find("trailing_window_non_increasing") != std::string::npos);
  const auto loss = lines_of(slurp(dir / "run" / "loss_curve.csv"));
  CHECK(loss.front() == "epoch,mean_nll");
  CHECK(loss.size() == 22);
  const auto data = lines_of(slurp(dir / "run" / "dataset.csv"));
  CHECK(data.front() == kDatasetCsvHeader);
  CHECK(data.size() == 301);
  CHECK_NOTHROW(load_learned_params(dir / "run" / "learned_params.json"));

  // Retraining from the written dataset reproduces the same parameters.
  CommandOptions again = o;
  again.generate.reset();
  again.dataset = dir / "run" / "dataset.csv";
  again.out = dir / "from_csv";
  REQUIRE(cmd_train(again, out, err) == kExitOk);
  CHECK(slurp(dir / "from_csv" / "learned_params.json") == slurp(dir / "run" / "learned_params.json"));
  CHECK(slurp(dir / "from_csv" / "loss_curve.csv") == slurp(dir / "run" / "loss_curve.csv"));
}

TEST_CASE("train fails cleanly on divergence") {
  const auto dir = scratch("train_diverge");
  CommandOptions o;
  o.config = dir / "config.json";
  std::ofstream(o.config) << R"({"training": {"n_interactions": 200, "epochs": 50, "learning_rate": 20.0}})";
  o.out = dir / "run";
  std::ostringstream out, err;
  CHECK(cmd_train(o, out, err) == kExitOptimization);
}

TEST_CASE("experiment outputs have the documented schemas") {
  const auto dir = scratch("experiments");
  CommandOptions o;
  o.config = quick_config(dir);
  o.trials = 6;
  std::ostringstream out, err;

  o.out = dir / "pe";
  o.variants = {"full_approach"};
  REQUIRE(cmd_experiment("position_estimation", o, out, err) == kExitOk);
  auto rows = lines_of(slurp(dir / "pe" / "error_by_step.csv"));
  CHECK(rows.front() == "variant,t,mean_error_m,std_error_m,n_trials");
  CHECK(rows.size() == 7);
  CHECK(rows[1].rfind("full_approach,0,", 0) == 0);
  CHECK(rows[6].rfind("full_approach,5,", 0) == 0);
  rows = lines_of(slurp(dir / "pe" / "results.csv"));
  CHECK(rows.front() == kResultsCsvHeader);
  CHECK(rows.size() == 1 + 6 * 6);

  o.out = dir / "mi";
  o.variants = {"full_approach", "fixed_initial"};
  REQUIRE(cmd_experiment("matching_insertion", o, out, err) == kExitOk);
  rows = lines_of(slurp(dir / "mi" / "success_by_step.csv"));
  CHECK(rows.front() == "variant,step,success_rate,n_trials");
  CHECK(rows.size() == 1 + 2 * 10);

  o.out = dir / "as";
  o.variants = {};
  REQUIRE(cmd_experiment("assembly", o, out, err) == kExitOk);
  CHECK(lines_of(slurp(dir / "as" / "assembly_summary.csv")).size() == 4);
  CHECK(lines_of(slurp(dir / "as" / "attempts_histogram.csv")).front() == "variant,bin_lo,bin_hi,count");
  CHECK(out.str().find("intervention rate") != std::string::npos);

  std::ostringstream e2;
  CHECK(cmd_experiment("nonsense", o, out, e2) == kExitConfig);
}

TEST_CASE("results rows are sorted and finite") {
  AppConfig cfg;
  cfg.training.n_interactions = 100;
  cfg.training.fit.epochs = 5;
  ExperimentRequest req{ExperimentKind::Assembly, 3, 4, {PolicyVariant::FailureOnly, PolicyVariant::FullApproach}, 1};
  const auto run = run_experiment(cfg, agent_models(cfg, LearnedParams{}), req);
  const auto rows = result_rows(run);
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(std::tie(rows[i - 1].variant, rows[i - 1].trial, rows[i - 1].step) <=
          std::tie(rows[i].variant, rows[i].trial, rows[i].step));
  for (const auto& r : rows) CHECK(std::isfinite(r.value));
  for (const auto& trials : run.outcomes)
    for (const auto& t : trials) {
      int sum = 0;
      for (int a : t.attempts) sum += a;
      CHECK(sum == t.cumulative_attempts);
    }
}

TEST_CASE("missing learned params file is an error") {
  const auto dir = scratch("missing_params");
  CommandOptions o;
  o.config = quick_config(dir, R"(, "learned_params": "nowhere.json")");
  o.out = dir / "out";
  std::ostringstream out, err;
  CHECK(cmd_experiment("matching_insertion", o, out, err) != kExitOk);
  CHECK(err.str().find("nowhere.json") != std::string::npos);
}

TEST_CASE("experiments are byte-identical across runs and thread counts") {
  const auto dir = scratch("determinism");
  CommandOptions o;
  o.config = quick_config(dir);
  o.trials = 8;
  std::ostringstream out, err;
  setenv("BELIEFFIT_THREADS", "1", 1);
  o.out = dir / "one";
  REQUIRE(cmd_experiment("assembly", o, out, err) == kExitOk);
  setenv("BELIEFFIT_THREADS", "4", 1);
  o.out = dir / "four";
  REQUIRE(cmd_experiment("assembly", o, out, err) == kExitOk);
  unsetenv("BELIEFFIT_THREADS");
  for (const char* f : {"results.csv", "assembly_summary.csv", "assembly_by_peg.csv", "attempts_histogram.csv",
                        "episodes.jsonl"})
    CHECK(slurp(dir / "one" / f) == slurp(dir / "four" / f));
}

TEST_CASE("replay prints one line per step") {
  const auto dir = scratch("replay");
  CommandOptions o;
  o.config = quick_config(dir);
  o.trials = 3;
  o.out = dir / "as";
  std::ostringstream out, err;
  REQUIRE(cmd_experiment("assembly", o, out, err) == kExitOk);

  std::ostringstream a, b, e;
  REQUIRE(cmd_replay(dir / "as", 1, {"full_approach"}, a, e) == kExitOk);
  REQUIRE(cmd_replay(dir / "as", 1, {"full_approach"}, b, e) == kExitOk);
  CHECK(a.str() == b.str());

  std::size_t steps = 0;
  std::ifstream in(dir / "as" / "episodes.jsonl");
  for (std::string line; std::getline(in, line);) {
    const auto ep = nlohmann::json::parse(line);
    if (ep["trial"] == 1 && ep["variant"] == "full_approach") steps += ep["steps"].size();
  }
  const auto printed = lines_of(a.str());
  CHECK(printed.size() == steps);

  std::ostringstream miss_out, miss_err;
  CHECK(cmd_replay(dir / "as", 99, {}, miss_out, miss_err) == kExitUnknownTrial);
}
