#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "belieffit/filters.hpp"
#include "belieffit/sensors.hpp"
#include "belieffit/sim.hpp"

namespace belieffit {

/// Belief-update strategies compared in the experiments.
///   FullApproach         Kalman position update + histogram type update with H
///   FailurePlusPosition  Kalman position update + transition-only type update
///   FailureOnly          transition-only type update, fixed position belief
///   FrameByFrame         position estimate replaced by each new observation
///   FixedInitial         every attempt starts at mu_0
///   SampledInitial       every attempt starts at a draw from N(mu_0, Sigma_0)
enum class PolicyVariant { FullApproach, FailurePlusPosition, FailureOnly, FrameByFrame, FixedInitial, SampledInitial };

inline constexpr std::array kAllVariants = {
    PolicyVariant::FullApproach, PolicyVariant::FailurePlusPosition, PolicyVariant::FailureOnly,
    PolicyVariant::FrameByFrame, PolicyVariant::FixedInitial,        PolicyVariant::SampledInitial,
};

std::string_view to_string(PolicyVariant v);
/// Accepts the names returned by to_string. Throws InvalidInput otherwise.
PolicyVariant parse_variant(std::string_view name);

enum class LowLevelMode { Kinematic, TransitionModel };

struct AgentModels {
  FilterModels filters;  // learned
  SensorModel sensors;   // ground truth
  double alpha = 0.34;
  LowLevelMode low_level = LowLevelMode::Kinematic;
};

struct AgentState {
  std::vector<HoleBelief> beliefs;
  /// Vision prior per hole; used by FixedInitial and SampledInitial.
  std::vector<GaussianBelief2> initial;
};

/// Position beliefs from detections with Sigma_0 = sigma_init I, uniform types.
AgentState init_agent_state(const World& world, const std::vector<Vec2>& detections);

enum class TerminalStatus { Success, StepCap, Intervention };
std::string_view to_string(TerminalStatus s);

struct StepRecord {
  int t = 0;  // 1-based attempt index within the episode
  std::size_t chosen = 0;
  Vec2 start_estimate = Vec2::Zero();
  bool beta = false;
  int reward = 0;
  MatchObs o_match = MatchObs::Mismatch;
  bool informative = false;
  /// Type belief reset to uniform after degenerate evidence.
  bool type_reset = false;
  /// ||mu_chosen - p_chosen|| after the update.
  double position_error = 0.0;
  std::vector<HoleBelief> beliefs;
};

struct EpisodeLog {
  PegType peg;
  std::vector<StepRecord> steps;
  TerminalStatus status = TerminalStatus::StepCap;
};

/// argmax_i fit_probability(beliefs[i], peg, alpha), lowest index on ties,
/// fitted holes excluded. Throws NoAction if every hole is fitted.
std::size_t select_hole(const std::vector<HoleBelief>& beliefs, PegType peg, double alpha);

struct StepResult {
  AgentState state;
  StepRecord record;
};

/// One choose -> roll out -> update iteration.
StepResult high_level_step(const AgentState& state, PegType peg, const World& world, PolicyVariant variant,
                           const AgentModels& models, Rng& rng, int t = 1);

struct EpisodeResult {
  EpisodeLog log;
  AgentState state;
};

/// Repeats high_level_step until the current peg fits or K attempts are used.
EpisodeResult run_episode(const World& world, const AgentState& state, PegType peg, PolicyVariant variant,
                          const AgentModels& models, int horizon, Rng& rng);

struct AssemblyResult {
  std::vector<PegType> order;
  std::vector<int> attempts;
  std::vector<bool> intervened;
  int cumulative_attempts = 0;
  int interventions = 0;
  std::vector<EpisodeLog> episodes;
};

/// Inserts every peg in order with beliefs persisting across pegs. A peg that
/// is not fitted within step_cap attempts is inserted by intervention into
/// the lowest-index unfitted hole of its type.
AssemblyResult run_assembly_task(const World& world, const AgentState& state, const std::vector<PegType>& pegs,
                                 PolicyVariant variant, const AgentModels& models, int step_cap, Rng& rng);

}  // namespace belieffit
