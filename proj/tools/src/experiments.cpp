#include "belieffit/app/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "belieffit/error.hpp"
#include "belieffit/parallel.hpp"

namespace belieffit::app {

using nlohmann::json;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::PositionEstimation:
      return "position_estimation";
    case ExperimentKind::MatchingInsertion:
      return "matching_insertion";
    case ExperimentKind::Assembly:
      return "assembly";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (auto k : {ExperimentKind::PositionEstimation, ExperimentKind::MatchingInsertion, ExperimentKind::Assembly})
    if (to_string(k) == name) return k;
  throw ConfigurationError("unknown experiment kind '" + name +
                           "' (expected position_estimation, matching_insertion or assembly)");
}

int default_trials(ExperimentKind k) { return k == ExperimentKind::MatchingInsertion ? 150 : 100; }

std::vector<PolicyVariant> default_variants(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::PositionEstimation:
      return {PolicyVariant::FullApproach, PolicyVariant::FailurePlusPosition, PolicyVariant::FrameByFrame};
    case ExperimentKind::MatchingInsertion:
      return {PolicyVariant::FullApproach, PolicyVariant::FrameByFrame, PolicyVariant::SampledInitial,
              PolicyVariant::FixedInitial};
    case ExperimentKind::Assembly:
      return {PolicyVariant::FullApproach, PolicyVariant::FailurePlusPosition, PolicyVariant::FailureOnly};
  }
  return {};
}

std::uint64_t trial_seed(std::uint64_t master, int trial, int seed_groups) {
  const auto g = static_cast<std::uint64_t>(trial % seed_groups);
  const auto j = static_cast<std::uint64_t>(trial / seed_groups);
  return derive_seed(derive_seed(master, Stream::World, g), Stream::World, j);
}

TrainingRun train_parameters(const AppConfig& config, std::uint64_t master, std::vector<InteractionRecord> dataset) {
  TrainingRun run;
  if (dataset.empty()) {
    dataset = generate_dataset(config.env, config.spiral, config.sensors, config.training.n_interactions,
                               derive_seed(master, Stream::Dataset));
    run.generated = true;
  }
  FitOptions opts = config.training.fit;
  opts.alpha = config.env.alpha;
  opts.seed = derive_seed(master, Stream::Shuffle);
  run.fit = fit_parameters(dataset, config.training.init, opts);
  run.dataset = std::move(dataset);
  return run;
}

LearnedParams resolve_learned_params(const AppConfig& config, std::uint64_t master) {
  if (config.learned_params == "train") return train_parameters(config, master).fit.params;
  std::filesystem::path p(config.learned_params);
  if (p.is_relative()) p = config.base_dir / p;
  return load_learned_params(p);
}

AgentModels agent_models(const AppConfig& config, const LearnedParams& params) {
  AgentModels m;
  m.filters = filter_models(params, config.filter_observation_model);
  m.sensors = config.sensors;
  m.alpha = config.env.alpha;
  return m;
}

namespace {

int other_type(int type, int n_types, Rng& rng) {
  std::uniform_int_distribution<int> d(1, n_types - 1);
  const int k = d(rng);
  return k >= type ? k + 1 : k;
}

TrialOutcome run_trial(const AppConfig& config, const AgentModels& models, ExperimentKind kind, PolicyVariant variant,
                       std::uint64_t seed) {
  TrialOutcome out;
  out.seed = seed;
  Rng world_rng = make_rng(seed, Stream::World);
  Rng detect_rng = make_rng(seed, Stream::Detection);
  Rng policy_rng = make_rng(seed, Stream::Policy);

  EnvConfig env = config.env;
  if (kind != ExperimentKind::Assembly) env.n_holes = 1;
  const World world = spawn_world(env, config.spiral, world_rng);
  const AgentState state = init_agent_state(world, vision_detect(world, detect_rng));

  switch (kind) {
    case ExperimentKind::PositionEstimation: {
      const PegType peg{other_type(world.holes[0].hole_type, env.n_types, world_rng)};
      const auto res =
          run_episode(world, state, peg, variant, models, config.experiment.position_steps, policy_rng);
      out.position_error.push_back((state.beliefs[0].position.mean - world.holes[0].position).norm());
      for (const auto& s : res.log.steps) out.position_error.push_back(s.position_error);
      while (static_cast<int>(out.position_error.size()) < config.experiment.position_steps + 1)
        out.position_error.push_back(out.position_error.back());
      out.episodes.push_back(res.log);
      break;
    }
    case ExperimentKind::MatchingInsertion: {
      const PegType peg{world.holes[0].hole_type};
      const auto res = run_episode(world, state, peg, variant, models, env.horizon_high, policy_rng);
      if (res.log.status == TerminalStatus::Success) out.first_success = static_cast<int>(res.log.steps.size());
      out.episodes.push_back(res.log);
      break;
    }
    case ExperimentKind::Assembly: {
      std::vector<PegType> pegs;
      for (const auto& h : world.holes) pegs.push_back(PegType{h.hole_type});
      std::shuffle(pegs.begin(), pegs.end(), world_rng);
      auto res = run_assembly_task(world, state, pegs, variant, models, config.experiment.assembly_step_cap,
                                   policy_rng);
      out.attempts = res.attempts;
      out.intervened = res.intervened;
      out.cumulative_attempts = res.cumulative_attempts;
      out.interventions = res.interventions;
      out.episodes = std::move(res.episodes);
      break;
    }
  }
  return out;
}

json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

json episode_json(const ExperimentRun& run, std::size_t v, int trial, std::size_t index) {
  const TrialOutcome& t = run.outcomes[v][static_cast<std::size_t>(trial)];
  const EpisodeLog& log = t.episodes[index];
  json steps = json::array();
  for (const auto& s : log.steps) {
    json beliefs = json::array();
    for (const auto& b : s.beliefs) {
      const auto xi = b.type_belief.probs();
      beliefs.push_back({{"mu", vec_json(b.position.mean)},
                         {"cov", json::array({b.position.cov(0, 0), b.position.cov(0, 1), b.position.cov(1, 1)})},
                         {"xi", std::vector<double>(xi.begin(), xi.end())},
                         {"fitted", b.fitted}});
    }
    steps.push_back({{"t", s.t},
                     {"chosen", s.chosen},
                     {"start", vec_json(s.start_estimate)},
                     {"beta", s.beta},
                     {"reward", s.reward},
                     {"o_match", s.o_match == MatchObs::Match},
                     {"informative", s.informative},
                     {"type_reset", s.type_reset},
                     {"position_error", s.position_error},
                     {"beliefs", beliefs}});
  }
  return {{"experiment", to_string(run.kind)},
          {"variant", std::string(to_string(run.variants[v]))},
          {"trial", trial},
          {"seed", t.seed},
          {"episode", index},
          {"peg", log.peg.value},
          {"status", std::string(to_string(log.status))},
          {"steps", steps}};
}

std::string fmt(double x) { return format_double(x); }

}  // namespace

ExperimentRun run_experiment(const AppConfig& config, const AgentModels& models, const ExperimentRequest& request) {
  ExperimentRun run;
  run.kind = request.kind;
  run.master_seed = request.master_seed;
  run.trials = request.trials > 0 ? request.trials : default_trials(request.kind);
  run.seed_groups = config.experiment.seed_groups;
  run.variants = request.variants.empty() ? default_variants(request.kind) : request.variants;
  switch (request.kind) {
    case ExperimentKind::PositionEstimation:
      run.horizon = config.experiment.position_steps;
      break;
    case ExperimentKind::MatchingInsertion:
      run.horizon = config.env.horizon_high;
      break;
    case ExperimentKind::Assembly:
      run.horizon = config.experiment.assembly_step_cap;
      break;
  }
  if (request.kind == ExperimentKind::Assembly && config.env.n_holes < 1)
    throw ConfigurationError("assembly needs at least one hole");

  const std::size_t nv = run.variants.size();
  const auto nt = static_cast<std::size_t>(run.trials);
  run.outcomes.assign(nv, std::vector<TrialOutcome>(nt));
  parallel_for(
      nv * nt,
      [&](std::size_t i) {
        const std::size_t v = i / nt;
        const std::size_t k = i % nt;
        run.outcomes[v][k] = run_trial(config, models, run.kind, run.variants[v],
                                       trial_seed(run.master_seed, static_cast<int>(k), run.seed_groups));
      },
      request.threads);
  return run;
}

double MeanStd::sem() const { return n > 0 ? std / std::sqrt(static_cast<double>(n)) : 0.0; }

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.n;
  if (s.n > 1) {
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(acc / (s.n - 1));
  }
  return s;
}

std::vector<std::vector<MeanStd>> position_error_by_step(const ExperimentRun& run) {
  std::vector<std::vector<MeanStd>> out;
  for (const auto& trials : run.outcomes) {
    std::vector<MeanStd> per_t;
    for (int t = 0; t <= run.horizon; ++t) {
      std::vector<double> e;
      for (const auto& tr : trials) e.push_back(tr.position_error.at(static_cast<std::size_t>(t)));
      per_t.push_back(mean_std(e));
    }
    out.push_back(std::move(per_t));
  }
  return out;
}

std::vector<std::vector<double>> success_by_step(const ExperimentRun& run) {
  std::vector<std::vector<double>> out;
  for (const auto& trials : run.outcomes) {
    std::vector<double> rate;
    for (int k = 1; k <= run.horizon; ++k) {
      const auto hits = std::count_if(trials.begin(), trials.end(),
                                      [&](const TrialOutcome& t) { return t.first_success > 0 && t.first_success <= k; });
      rate.push_back(static_cast<double>(hits) / static_cast<double>(trials.size()));
    }
    out.push_back(std::move(rate));
  }
  return out;
}

std::vector<AssemblySummary> assembly_summary(const ExperimentRun& run) {
  std::vector<AssemblySummary> out;
  for (const auto& trials : run.outcomes) {
    AssemblySummary s;
    std::vector<double> cum;
    std::size_t n_pegs = 0;
    for (const auto& t : trials) {
      cum.push_back(t.cumulative_attempts);
      s.interventions += t.interventions;
      s.pegs += static_cast<int>(t.attempts.size());
      n_pegs = std::max(n_pegs, t.attempts.size());
    }
    s.cumulative_attempts = mean_std(cum);
    s.intervention_rate = s.pegs > 0 ? static_cast<double>(s.interventions) / s.pegs : 0.0;
    for (std::size_t n = 1; n <= n_pegs; ++n) {
      std::vector<double> partial;
      for (const auto& t : trials) {
        const auto upto = std::min(n, t.attempts.size());
        partial.push_back(std::accumulate(t.attempts.begin(), t.attempts.begin() + static_cast<long>(upto), 0.0));
      }
      s.by_peg_count.push_back(mean_std(partial));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ResultRow> result_rows(const ExperimentRun& run) {
  std::vector<ResultRow> rows;
  const std::string exp = to_string(run.kind);
  for (std::size_t v = 0; v < run.variants.size(); ++v) {
    const std::string name(to_string(run.variants[v]));
    for (std::size_t k = 0; k < run.outcomes[v].size(); ++k) {
      const TrialOutcome& t = run.outcomes[v][k];
      const int trial = static_cast<int>(k);
      switch (run.kind) {
        case ExperimentKind::PositionEstimation:
          for (std::size_t s = 0; s < t.position_error.size(); ++s)
            rows.push_back({exp, name, trial, static_cast<int>(s), "position_error_m", t.position_error[s], t.seed});
          break;
        case ExperimentKind::MatchingInsertion:
          for (int s = 1; s <= run.horizon; ++s)
            rows.push_back(
                {exp, name, trial, s, "fitted_by_step", (t.first_success > 0 && t.first_success <= s) ? 1.0 : 0.0,
                 t.seed});
          break;
        case ExperimentKind::Assembly:
          for (std::size_t s = 0; s < t.attempts.size(); ++s) {
            rows.push_back({exp, name, trial, static_cast<int>(s) + 1, "attempts", double(t.attempts[s]), t.seed});
            rows.push_back(
                {exp, name, trial, static_cast<int>(s) + 1, "intervened", t.intervened[s] ? 1.0 : 0.0, t.seed});
          }
          break;
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.variant, a.trial, a.step, a.metric) < std::tie(b.variant, b.trial, b.step, b.metric);
  });
  return rows;
}

void validate_csv(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw Error("self-check: cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw Error("self-check: " + path.filename().string() + " header mismatch");
  const auto columns = std::count(header.begin(), header.end(), ',') + 1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (std::count(line.begin(), line.end(), ',') + 1 != columns)
      throw Error("self-check: " + path.filename().string() + " row " + std::to_string(row) + " has wrong arity");
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell.empty()) throw Error("self-check: empty cell in " + path.filename().string());
      if (cell == "nan" || cell == "inf" || cell == "-inf")
        throw Error("self-check: non-finite value in " + path.filename().string());
    }
  }
  if (row == 0) throw Error("self-check: " + path.filename().string() + " has no rows");
}

std::string write_experiment_outputs(const ExperimentRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::string, std::string>> csvs;  // filename, header

  {
    std::ostringstream os;
    os << kResultsCsvHeader << '\n';
    for (const auto& r : result_rows(run))
      os << r.experiment << ',' << r.variant << ',' << r.trial << ',' << r.step << ',' << r.metric << ','
         << fmt(r.value) << ',' << r.seed << '\n';
    write_text_file(dir / "results.csv", os.str());
    csvs.emplace_back("results.csv", kResultsCsvHeader);
  }

  std::ostringstream summary;
  summary << "experiment " << to_string(run.kind) << ": " << run.trials << " trials, " << run.seed_groups
          << " seed groups, master seed " << run.master_seed << '\n';

  switch (run.kind) {
    case ExperimentKind::PositionEstimation: {
      const auto stats = position_error_by_step(run);
      const std::string header = "variant,t,mean_error_m,std_error_m,n_trials";
      std::ostringstream os;
      os << header << '\n';
      for (std::size_t v = 0; v < run.variants.size(); ++v) {
        for (std::size_t t = 0; t < stats[v].size(); ++t)
          os << to_string(run.variants[v]) << ',' << t << ',' << fmt(stats[v][t].mean) << ','
             << fmt(stats[v][t].std) << ',' << stats[v][t].n << '\n';
        summary << "  " << to_string(run.variants[v]) << ": mean error t=0 " << stats[v].front().mean * 100.0
                << " cm, t=" << run.horizon << ' ' << stats[v].back().mean * 100.0 << " cm (std "
                << stats[v].back().std * 100.0 << " cm)\n";
      }
      write_text_file(dir / "error_by_step.csv", os.str());
      csvs.emplace_back("error_by_step.csv", header);
      break;
    }
    case ExperimentKind::MatchingInsertion: {
      const auto rates = success_by_step(run);
      const std::string header = "variant,step,success_rate,n_trials";
      std::ostringstream os;
      os << header << '\n';
      for (std::size_t v = 0; v < run.variants.size(); ++v) {
        for (std::size_t k = 0; k < rates[v].size(); ++k)
          os << to_string(run.variants[v]) << ',' << k + 1 << ',' << fmt(rates[v][k]) << ',' << run.trials << '\n';
        summary << "  " << to_string(run.variants[v]) << ": success within " << run.horizon << " steps "
                << rates[v].back() << '\n';
      }
      write_text_file(dir / "success_by_step.csv", os.str());
      csvs.emplace_back("success_by_step.csv", header);
      break;
    }
    case ExperimentKind::Assembly: {
      const auto stats = assembly_summary(run);
      constexpr int kBin = 6;
      const std::string h_hist = "variant,bin_lo,bin_hi,count";
      const std::string h_peg = "variant,pegs_inserted,mean_cumulative_attempts,std_cumulative_attempts,n_trials";
      const std::string h_sum =
          "variant,mean_cumulative_attempts,sem_cumulative_attempts,intervention_rate,interventions,pegs";
      std::ostringstream hist, peg, sum;
      hist << h_hist << '\n';
      peg << h_peg << '\n';
      sum << h_sum << '\n';
      for (std::size_t v = 0; v < run.variants.size(); ++v) {
        const std::string name(to_string(run.variants[v]));
        std::map<int, int> bins;
        for (int lo = 1; lo <= run.horizon; lo += kBin) bins[lo] = 0;
        for (const auto& t : run.outcomes[v])
          for (int a : t.attempts) bins[1 + ((a - 1) / kBin) * kBin] += 1;
        for (const auto& [lo, count] : bins) hist << name << ',' << lo << ',' << lo + kBin - 1 << ',' << count << '\n';
        for (std::size_t n = 0; n < stats[v].by_peg_count.size(); ++n)
          peg << name << ',' << n + 1 << ',' << fmt(stats[v].by_peg_count[n].mean) << ','
              << fmt(stats[v].by_peg_count[n].std) << ',' << stats[v].by_peg_count[n].n << '\n';
        sum << name << ',' << fmt(stats[v].cumulative_attempts.mean) << ',' << fmt(stats[v].cumulative_attempts.sem())
            << ',' << fmt(stats[v].intervention_rate) << ',' << stats[v].interventions << ',' << stats[v].pegs << '\n';
        summary << "  " << name << ": mean cumulative attempts " << stats[v].cumulative_attempts.mean << " +- "
                << stats[v].cumulative_attempts.sem() << ", intervention rate " << stats[v].intervention_rate * 100.0
                << "% (" << stats[v].interventions << " of " << stats[v].pegs << ")\n";
      }
      write_text_file(dir / "attempts_histogram.csv", hist.str());
      write_text_file(dir / "assembly_by_peg.csv", peg.str());
      write_text_file(dir / "assembly_summary.csv", sum.str());
      csvs.emplace_back("attempts_histogram.csv", h_hist);
      csvs.emplace_back("assembly_by_peg.csv", h_peg);
      csvs.emplace_back("assembly_summary.csv", h_sum);
      break;
    }
  }

  {
    std::ostringstream os;
    for (std::size_t v = 0; v < run.variants.size(); ++v)
      for (int k = 0; k < run.trials; ++k)
        for (std::size_t e = 0; e < run.outcomes[v][static_cast<std::size_t>(k)].episodes.size(); ++e)
          os << episode_json(run, v, k, e).dump() << '\n';
    write_text_file(dir / "episodes.jsonl", os.str());
  }
  {
    json variants = json::array();
    for (auto v : run.variants) variants.push_back(std::string(to_string(v)));
    const json manifest = {{"experiment", to_string(run.kind)}, {"master_seed", run.master_seed},
                           {"trials", run.trials},             {"seed_groups", run.seed_groups},
                           {"horizon", run.horizon},           {"variants", variants}};
    write_text_file(dir / "run.json", manifest.dump(2) + "\n");
  }
  write_text_file(dir / "summary.txt", summary.str());

  for (const auto& [file, header] : csvs) validate_csv(dir / file, header);
  return summary.str();
}

}  // namespace belieffit::app
