#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "belieffit/belief.hpp"
#include "belieffit/rng.hpp"

namespace belieffit {

/// Spiral search parameters (meters). Defaults: r_max 1.5 cm, two
/// revolutions, 0.4 cm press depth, 0.125 cm wiggle.
struct SpiralParams {
  double r_max = 0.015;
  int n_rot = 2;
  double delta_z = 0.004;
  double sigma_wiggle = 0.00125;

  void validate() const;
};

/// Synthetic wrist force: a linear spring on penetration depth plus noise.
struct ForceModel {
  double stiffness = 100.0;  // N/m
  double noise_std = 0.5;    // N
};

struct TraceStep {
  int j = 0;
  /// End-effector position reached by executing `command`.
  Vec3 ee_position = Vec3::Zero();
  Vec3 command = Vec3::Zero();
  bool contact = false;
  Vec3 force_proxy = Vec3::Zero();
};

struct SensorimotorTrace {
  std::vector<TraceStep> steps;

  /// Smallest planar distance between any recorded ee position and `p`.
  double closest_approach(const Vec2& p) const;
  std::size_t size() const { return steps.size(); }
};

struct RolloutOutcome {
  bool success = false;
  SensorimotorTrace trace;
  std::optional<int> insertion_step;
  Vec3 final_ee = Vec3::Zero();
};

struct World {
  std::vector<HoleGroundTruth> holes;
  double clearance = 0.001;
  double capture_radius = 0.0;
  EnvConfig config;
  SpiralParams spiral;
  ForceModel force;
};

/// Minimum pairwise hole separation 2 (r_max + capture_radius).
double min_hole_separation(const EnvConfig& config, const SpiralParams& spiral);

/// Samples a layout by rejection (at most 1000 draws per hole). Types listed
/// in `required_types` are each given to at least one hole; the rest are
/// uniform over 1..C. Throws ConfigurationError on an infeasible layout.
World spawn_world(const EnvConfig& config, const SpiralParams& spiral, Rng& rng,
                  const std::vector<int>& required_types = {});

/// Per hole, p + e with e ~ U(-b, b)^2.
std::vector<Vec2> vision_detect(const World& world, Rng& rng);

/// Spiral search command (z up; the hole box surface is z = 0):
///   u = u_spiral + u_wiggle + (p_hat, 0) - x,
/// u_spiral = (j r/J cos(2 pi j n/J), j r/J sin(2 pi j n/J), -delta_z),
/// u_wiggle ~ N(0, sigma^2 I) with its z component rectified upward.
Vec3 spiral_command(const Vec3& ee, const Vec2& target_estimate, int j, int horizon,
                    const SpiralParams& params, Rng& rng);

/// Kinematic rollout of the spiral search started at `start_estimate`.
/// Inserts at the first step whose ee lies within capture_radius of the hole
/// while the peg type matches; otherwise runs J steps.
RolloutOutcome rollout_low_level(const World& world, const Vec2& start_estimate, PegType peg,
                                 const HoleGroundTruth& hole, Rng& rng);

/// Rollout that realizes the high-level dynamics directly: beta ~
/// Bernoulli(alpha * 1[match]) regardless of the start estimate. The trace is
/// the same spiral; a success truncates it at the closest-approach step.
RolloutOutcome rollout_transition_model(const World& world, const Vec2& start_estimate, PegType peg,
                                        const HoleGroundTruth& hole, double alpha, Rng& rng);

/// Empirical success rate of matched rollouts started from detector-noise
/// estimates. Trial i uses the stream (seed, Calibration, i), so the estimate
/// is monotone in capture_radius for a fixed seed.
double calibrate_alpha(const EnvConfig& config, const SpiralParams& params, int trials, std::uint64_t seed);

struct CaptureCalibration {
  double capture_radius = 0.0;
  double alpha_hat = 0.0;
  /// Target needed the radius at which every start is captured.
  bool at_feasibility_bound = false;
};

/// Radius at which every detector-noise start is captured by the spiral.
double capture_feasibility_bound(const EnvConfig& config, const SpiralParams& params);

/// Bisects capture_radius so calibrate_alpha reaches `target_alpha`.
/// Throws ConfigurationError if the target is outside (0, 1].
CaptureCalibration tune_capture_radius(const EnvConfig& config, const SpiralParams& params, double target_alpha,
                                       int trials, std::uint64_t seed);

}  // namespace belieffit
