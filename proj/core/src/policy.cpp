#include "belieffit/policy.hpp"

#include <Eigen/Cholesky>

#include "belieffit/error.hpp"

namespace belieffit {

namespace {

bool updates_position(PolicyVariant v) {
  return v == PolicyVariant::FullApproach || v == PolicyVariant::FailurePlusPosition;
}

bool updates_type(PolicyVariant v) {
  return v == PolicyVariant::FullApproach || v == PolicyVariant::FailurePlusPosition ||
         v == PolicyVariant::FailureOnly;
}

Vec2 sample_gaussian(const GaussianBelief2& g, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec2 z(n(rng), n(rng));
  Eigen::LLT<Mat2> llt(g.cov);
  if (llt.info() != Eigen::Success) return g.mean;
  return g.mean + llt.matrixL() * z;
}

Vec2 start_estimate(const AgentState& state, std::size_t i, PolicyVariant variant, Rng& rng) {
  switch (variant) {
    case PolicyVariant::FixedInitial:
      return state.initial[i].mean;
    case PolicyVariant::SampledInitial:
      return sample_gaussian(state.initial[i], rng);
    default:
      return state.beliefs[i].position.mean;
  }
}

RolloutOutcome roll_out(const World& world, const Vec2& start, PegType peg, const HoleGroundTruth& hole,
                        const AgentModels& models, Rng& rng) {
  if (models.low_level == LowLevelMode::TransitionModel)
    return rollout_transition_model(world, start, peg, hole, models.alpha, rng);
  return rollout_low_level(world, start, peg, hole, rng);
}

// Type update; degenerate evidence resets the hole to the uniform prior.
TypeBelief update_type(const TypeBelief& prior, MatchObs o, bool beta, PegType peg, double alpha,
                       const MatchObservationModel& model, bool& reset) {
  try {
    return histogram_update(prior, o, beta, peg, alpha, model);
  } catch (const DegenerateEvidence&) {
    reset = true;
    return init_type_belief_uniform(static_cast<int>(prior.size()));
  }
}

}  // namespace

std::string_view to_string(PolicyVariant v) {
  switch (v) {
    case PolicyVariant::FullApproach: return "full_approach";
    case PolicyVariant::FailurePlusPosition: return "failure_plus_position";
    case PolicyVariant::FailureOnly: return "failure_only";
    case PolicyVariant::FrameByFrame: return "frame_by_frame";
    case PolicyVariant::FixedInitial: return "fixed_initial";
    case PolicyVariant::SampledInitial: return "sampled_initial";
  }
  return "unknown";
}

PolicyVariant parse_variant(std::string_view name) {
  for (auto v : kAllVariants)
    if (to_string(v) == name) return v;
  throw InvalidInput("unknown policy variant '" + std::string(name) + "'");
}

std::string_view to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::Success: return "success";
    case TerminalStatus::StepCap: return "step_cap";
    case TerminalStatus::Intervention: return "intervention";
  }
  return "unknown";
}

AgentState init_agent_state(const World& world, const std::vector<Vec2>& detections) {
  if (detections.size() != world.holes.size()) throw InvalidInput("one detection per hole required");
  AgentState s;
  for (const auto& d : detections) {
    const auto g = init_position_belief(d, world.config.sigma_init);
    s.initial.push_back(g);
    s.beliefs.push_back({g, init_type_belief_uniform(world.config.n_types), false});
  }
  return s;
}

std::size_t select_hole(const std::vector<HoleBelief>& beliefs, PegType peg, double alpha) {
  std::size_t best = beliefs.size();
  double best_p = -1.0;
  for (std::size_t i = 0; i < beliefs.size(); ++i) {
    if (beliefs[i].fitted) continue;
    const double p = fit_probability(beliefs[i], peg, alpha);
    if (p > best_p) {
      best_p = p;
      best = i;
    }
  }
  if (best == beliefs.size()) throw NoAction("every hole is already fitted");
  return best;
}

StepResult high_level_step(const AgentState& state, PegType peg, const World& world, PolicyVariant variant,
                           const AgentModels& models, Rng& rng, int t) {
  const std::size_t i = select_hole(state.beliefs, peg, models.alpha);
  const HoleGroundTruth& hole = world.holes.at(i);
  const Vec2 start = start_estimate(state, i, variant, rng);
  const RolloutOutcome outcome = roll_out(world, start, peg, hole, models, rng);
  const bool beta = outcome.success;

  StepResult out{state, {}};
  StepRecord& rec = out.record;
  rec.t = t;
  rec.chosen = i;
  rec.start_estimate = start;
  rec.beta = beta;
  rec.reward = beta ? 1 : 0;
  rec.informative = outcome.trace.closest_approach(hole.position) <= models.sensors.position.r_info;

  HoleBelief& b = out.state.beliefs[i];
  const Vec2 mu = b.position.mean;

  if (beta) {
    // Insertion localizes the hole at the final end-effector position.
    if (updates_position(variant) || variant == PolicyVariant::FrameByFrame)
      b.position = kalman_update(b.position, {outcome.final_ee.head<2>() - mu}, PositionNoiseModel::exact());
    if (updates_type(variant))
      b.type_belief = update_type(b.type_belief, MatchObs::Match, true, peg, models.alpha,
                                  MatchObservationModel::uninformative(), rec.type_reset);
    rec.o_match = MatchObs::Match;
  } else {
    const bool needs_position = updates_position(variant) || variant == PolicyVariant::FrameByFrame;
    Innovation innov;
    if (needs_position) innov = sense_position(outcome.trace, hole.position, mu, models.sensors, rng);
    if (variant == PolicyVariant::FullApproach) rec.o_match = sense_match(hole.hole_type, peg, models.sensors, rng);

    if (updates_position(variant)) b.position = kalman_update(b.position, innov, models.filters.position);
    if (variant == PolicyVariant::FrameByFrame) b.position.mean = mu + innov.value;
    if (updates_type(variant)) {
      const MatchObservationModel& H = variant == PolicyVariant::FullApproach
                                           ? models.filters.match
                                           : MatchObservationModel::uninformative();
      b.type_belief = update_type(b.type_belief, rec.o_match, false, peg, models.alpha, H, rec.type_reset);
    }
  }
  b.fitted = b.fitted || beta;

  rec.position_error = (b.position.mean - hole.position).norm();
  rec.beliefs = out.state.beliefs;
  return out;
}

EpisodeResult run_episode(const World& world, const AgentState& state, PegType peg, PolicyVariant variant,
                          const AgentModels& models, int horizon, Rng& rng) {
  if (horizon < 1) throw InvalidInput("episode horizon must be >= 1");
  EpisodeResult res{{peg, {}, TerminalStatus::StepCap}, state};
  for (int t = 1; t <= horizon; ++t) {
    StepResult step = high_level_step(res.state, peg, world, variant, models, rng, t);
    res.state = std::move(step.state);
    const bool fitted = step.record.beta;
    res.log.steps.push_back(std::move(step.record));
    if (fitted) {
      res.log.status = TerminalStatus::Success;
      break;
    }
  }
  return res;
}

AssemblyResult run_assembly_task(const World& world, const AgentState& state, const std::vector<PegType>& pegs,
                                 PolicyVariant variant, const AgentModels& models, int step_cap, Rng& rng) {
  AssemblyResult out;
  AgentState current = state;
  for (PegType peg : pegs) {
    EpisodeResult ep = run_episode(world, current, peg, variant, models, step_cap, rng);
    current = std::move(ep.state);
    const bool intervene = ep.log.status != TerminalStatus::Success;
    if (intervene) {
      std::size_t target = world.holes.size();
      for (std::size_t i = 0; i < world.holes.size(); ++i) {
        if (!current.beliefs[i].fitted && world.holes[i].hole_type == peg.value) {
          target = i;
          break;
        }
      }
      if (target == world.holes.size()) throw InvalidInput("no unfitted hole matches the peg for intervention");
      current.beliefs[target].fitted = true;
      current.beliefs[target].type_belief = TypeBelief::certain(peg.value, current.beliefs[target].type_belief.size());
      ep.log.status = TerminalStatus::Intervention;
      ++out.interventions;
    }
    out.order.push_back(peg);
    out.attempts.push_back(static_cast<int>(ep.log.steps.size()));
    out.intervened.push_back(intervene);
    out.cumulative_attempts += static_cast<int>(ep.log.steps.size());
    out.episodes.push_back(std::move(ep.log));
  }
  return out;
}

}  // namespace belieffit
