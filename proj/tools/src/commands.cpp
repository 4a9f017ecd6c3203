#include "belieffit/app/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "belieffit/app/config.hpp"
#include "belieffit/app/experiments.hpp"
#include "belieffit/error.hpp"
#include "belieffit/parallel.hpp"

namespace belieffit::app {

using nlohmann::json;

namespace {

AppConfig config_for(const CommandOptions& opts) {
  if (opts.config.empty()) {
    AppConfig c;
    c.base_dir = std::filesystem::current_path();
    c.validate();
    return c;
  }
  return load_config(opts.config);
}

std::uint64_t master_seed(const AppConfig& config, const CommandOptions& opts) {
  return opts.seed.value_or(config.env.rng_seed);
}

std::vector<PolicyVariant> parse_variants(const std::vector<std::string>& names) {
  std::vector<PolicyVariant> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_variant(n));
    } catch (const InvalidInput& e) {
      throw ConfigurationError(e.what());
    }
  }
  return out;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigurationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const OptimizationFailure& e) {
    err << "error: " << e.what() << '\n';
    return kExitOptimization;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

std::string mat_str(const Mat2& m) {
  std::ostringstream os;
  os << std::setprecision(6) << "[[" << m(0, 0) << ", " << m(0, 1) << "], [" << m(1, 0) << ", " << m(1, 1) << "]]";
  return os.str();
}

}  // namespace

int cmd_calibrate(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    AppConfig config = config_for(opts);
    const std::uint64_t seed = master_seed(config, opts);
    const int trials = opts.trials > 0 ? opts.trials : config.calibration.trials;
    const CaptureCalibration cal =
        tune_capture_radius(config.env, config.spiral, config.calibration.target_alpha, trials, seed);

    config.env.capture_radius = cal.capture_radius;
    config.calibration.trials = trials;
    config.calibration_result = json{{"target_alpha", config.calibration.target_alpha},
                                     {"trials", trials},
                                     {"seed", seed},
                                     {"capture_radius", cal.capture_radius},
                                     {"alpha_hat", cal.alpha_hat},
                                     {"at_feasibility_bound", cal.at_feasibility_bound}};
    const auto path = opts.out.empty() ? std::filesystem::path("calibrated_config.json") : opts.out;
    write_text_file(path, config_to_json(config).dump(2) + "\n");

    if (cal.at_feasibility_bound)
      err << "warning: target alpha " << config.calibration.target_alpha
          << " needs the capture radius at its feasibility bound (" << capture_feasibility_bound(config.env, config.spiral)
          << " m)\n";
    out << "alpha_hat " << cal.alpha_hat << " over " << trials << " matched rollouts\n";
    out << "capture_radius " << cal.capture_radius << " m\n";
    out << "wrote " << path.string() << '\n';
    return kExitOk;
  });
}

int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    AppConfig config = config_for(opts);
    const std::uint64_t seed = master_seed(config, opts);
    if (opts.generate) config.training.n_interactions = *opts.generate;
    if (config.training.n_interactions < 2) throw ConfigurationError("--generate needs at least 2 interactions");

    std::vector<InteractionRecord> dataset;
    if (!opts.dataset.empty()) {
      if (opts.generate) throw ConfigurationError("--dataset and --generate are mutually exclusive");
      std::ifstream in(opts.dataset);
      if (!in) throw ConfigurationError("cannot open dataset " + opts.dataset.string());
      try {
        dataset = read_dataset_csv(in, config.env, derive_seed(seed, Stream::Dataset));
      } catch (const InvalidInput& e) {
        throw ConfigurationError(e.what());
      }
      if (dataset.empty()) throw ConfigurationError("dataset " + opts.dataset.string() + " has no records");
    }

    const TrainingRun run = train_parameters(config, seed, std::move(dataset));
    const auto dir = opts.out.empty() ? std::filesystem::path("train_out") : opts.out;
    std::filesystem::create_directories(dir);

    write_text_file(dir / "learned_params.json", learned_params_to_json(run.fit.params).dump(2) + "\n");
    {
      std::ostringstream os;
      os << "epoch,mean_nll\n";
      for (std::size_t e = 0; e < run.fit.loss_curve.size(); ++e) os << e << ',' << format_double(run.fit.loss_curve[e]) << '\n';
      write_text_file(dir / "loss_curve.csv", os.str());
    }
    if (run.generated) {
      std::ostringstream os;
      write_dataset_csv(os, run.dataset);
      write_text_file(dir / "dataset.csv", os.str());
    }

    std::size_t matched = 0;
    std::vector<Vec2> residuals;
    std::vector<LabeledMatch> labels;
    for (const auto& r : run.dataset) {
      matched += r.matched();
      residuals.push_back(r.obs - r.p);
      labels.push_back({r.matched(), r.o_match});
    }
    const Mat2& R_true = config.sensors.position.R_true;
    const Mat2& R = run.fit.params.R;
    std::ostringstream s;
    s << "dataset " << run.dataset.size() << " records: " << matched << " matched / " << run.dataset.size() - matched
      << " mismatched\n";
    s << "epochs " << config.training.fit.epochs << ", final mean_nll " << run.fit.loss_curve.back() << '\n';
    s << "trailing_window_non_increasing " << (run.fit.trailing_non_increasing ? "true" : "false") << '\n';
    s << "learned R " << mat_str(R) << '\n';
    s << "R_true " << mat_str(R_true) << " relative Frobenius error " << (R - R_true).norm() / R_true.norm() << '\n';
    if (residuals.size() >= 3) {
      const CovarianceEstimate oracle = mle_covariance_oracle(residuals);
      s << "residual covariance oracle " << mat_str(oracle.cov) << (oracle.rank_deficient ? " (rank deficient)" : "")
        << '\n';
      if (oracle.rank_deficient) err << "warning: residual covariance oracle is rank deficient\n";
    }
    s << "match head tpr " << run.fit.params.head.tpr() << " fpr " << run.fit.params.head.fpr() << '\n';
    try {
      const MatchObservationModel conf = mle_confusion_oracle(labels);
      s << "confusion oracle tpr " << conf.tpr() << " fpr " << conf.fpr() << '\n';
    } catch (const DegenerateOracle& e) {
      err << "warning: " << e.what() << '\n';
    }
    s << "histogram observation model tpr " << run.fit.params.observation.tpr() << " fpr "
      << run.fit.params.observation.fpr() << '\n';
    write_text_file(dir / "summary.txt", s.str());
    validate_csv(dir / "loss_curve.csv", "epoch,mean_nll");
    if (run.generated) validate_csv(dir / "dataset.csv", kDatasetCsvHeader);

    out << s.str() << "wrote " << dir.string() << '\n';
    return kExitOk;
  });
}

int cmd_experiment(const std::string& kind_name, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentKind kind = parse_experiment_kind(kind_name);
    const AppConfig config = config_for(opts);
    const std::uint64_t seed = master_seed(config, opts);

    ExperimentRequest req;
    req.kind = kind;
    req.master_seed = seed;
    req.trials = opts.trials > 0 ? opts.trials : config.experiment.trials;
    req.variants = opts.variants.empty() ? config.experiment.variants : parse_variants(opts.variants);
    req.threads = thread_budget();

    if (config.learned_params == "train") err << "training learned parameters (learned_params = \"train\")\n";
    const LearnedParams params = resolve_learned_params(config, seed);
    const ExperimentRun run = run_experiment(config, agent_models(config, params), req);
    const auto dir = opts.out.empty() ? std::filesystem::path("results") / to_string(kind) : opts.out;
    write_text_file(dir / "learned_params.json", learned_params_to_json(params).dump(2) + "\n");
    out << write_experiment_outputs(run, dir) << "wrote " << dir.string() << '\n';
    return kExitOk;
  });
}

int cmd_replay(const std::filesystem::path& dir, int trial, const std::vector<std::string>& variants,
               std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    std::ifstream in(dir / "episodes.jsonl");
    if (!in) throw ConfigurationError("no episodes.jsonl in " + dir.string());
    const auto wanted = [&](const std::string& v) {
      return variants.empty() || std::find(variants.begin(), variants.end(), v) != variants.end();
    };
    std::string line;
    int lines = 0;
    out << std::fixed;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json ep = json::parse(line);
      if (ep.at("trial").get<int>() != trial || !wanted(ep.at("variant").get<std::string>())) continue;
      for (const auto& s : ep.at("steps")) {
        const auto chosen = s.at("chosen").get<std::size_t>();
        const auto& beliefs = s.at("beliefs");
        std::ostringstream xi, fitted;
        xi << std::fixed << std::setprecision(4);
        bool first = true;
        for (const auto& p : beliefs.at(chosen).at("xi")) {
          xi << (first ? "" : ",") << p.get<double>();
          first = false;
        }
        for (const auto& b : beliefs) fitted << (b.at("fitted").get<bool>() ? '1' : '0');
        const auto start = s.at("start");
        out << ep.at("variant").get<std::string>() << " trial " << trial << " episode "
            << ep.at("episode").get<int>() << " peg " << ep.at("peg").get<int>() << " t " << s.at("t").get<int>()
            << " hole " << chosen << std::setprecision(5) << " start (" << start[0].get<double>() << ", "
            << start[1].get<double>() << ") beta " << s.at("beta").get<bool>() << " o_match "
            << s.at("o_match").get<bool>() << (s.at("informative").get<bool>() ? " informative" : " uninformative")
            << std::setprecision(3) << " err_cm " << s.at("position_error").get<double>() * 100.0 << " xi [" << xi.str()
            << "] fitted " << fitted.str() << (s.at("type_reset").get<bool>() ? " type_reset" : "") << '\n';
        ++lines;
      }
    }
    if (lines == 0) {
      err << "error: unknown trial id " << trial << " in " << dir.string() << '\n';
      return kExitUnknownTrial;
    }
    return kExitOk;
  });
}

}  // namespace belieffit::app
