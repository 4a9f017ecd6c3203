#include "belieffit/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "belieffit/error.hpp"

namespace belieffit {

namespace {

constexpr int kMaxLayoutDraws = 1000;

struct Rollout {
  RolloutOutcome outcome;
  int closest_step = 0;
};

// Runs the spiral for at most J steps; `capture` decides insertion per step.
template <class Capture>
Rollout run_spiral(const World& world, const Vec2& start, const HoleGroundTruth& hole, Rng& rng, Capture&& capture) {
  const int horizon = world.config.horizon_low;
  std::normal_distribution<double> force_noise(0.0, world.force.noise_std);
  Rollout r;
  Vec3 ee(start.x(), start.y(), 0.0);
  double best = std::numeric_limits<double>::infinity();
  r.outcome.trace.steps.reserve(static_cast<std::size_t>(horizon));
  for (int j = 0; j < horizon; ++j) {
    TraceStep step;
    step.j = j;
    step.command = spiral_command(ee, start, j, horizon, world.spiral, rng);
    Vec3 next = ee + step.command;
    next.head<2>() = world.config.workspace.clamp(next.head<2>());
    const double penetration = std::max(0.0, -next.z());
    step.contact = penetration > 0.0;
    step.force_proxy = Vec3(force_noise(rng), force_noise(rng), world.force.stiffness * penetration + force_noise(rng));
    step.ee_position = next;
    ee = next;
    r.outcome.trace.steps.push_back(step);

    const double dist = (ee.head<2>() - hole.position).norm();
    if (dist < best) {
      best = dist;
      r.closest_step = j;
    }
    if (capture(dist)) {
      r.outcome.success = true;
      r.outcome.insertion_step = j;
      break;
    }
  }
  r.outcome.final_ee = ee;
  return r;
}

}  // namespace

void SpiralParams::validate() const {
  if (!(r_max > 0.0 && delta_z > 0.0 && sigma_wiggle >= 0.0) || n_rot < 1)
    throw InvalidInput("spiral parameters must be positive");
}

double SensorimotorTrace::closest_approach(const Vec2& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : steps) best = std::min(best, (s.ee_position.head<2>() - p).norm());
  return best;
}

double min_hole_separation(const EnvConfig& config, const SpiralParams& spiral) {
  return 2.0 * (spiral.r_max + config.capture_radius);
}

World spawn_world(const EnvConfig& config, const SpiralParams& spiral, Rng& rng,
                  const std::vector<int>& required_types) {
  config.validate();
  spiral.validate();
  if (required_types.size() > static_cast<std::size_t>(config.n_holes))
    throw ConfigurationError("more required hole types than holes");
  for (int t : required_types)
    if (t < 1 || t > config.n_types) throw InvalidInput("required hole type out of range");

  World world;
  world.clearance = config.clearance;
  world.capture_radius = config.capture_radius;
  world.config = config;
  world.spiral = spiral;

  const double separation = min_hole_separation(config, spiral);
  std::uniform_real_distribution<double> ux(config.workspace.lo.x(), config.workspace.hi.x());
  std::uniform_real_distribution<double> uy(config.workspace.lo.y(), config.workspace.hi.y());
  std::vector<Vec2> positions;
  for (int i = 0; i < config.n_holes; ++i) {
    bool placed = false;
    for (int draw = 0; draw < kMaxLayoutDraws && !placed; ++draw) {
      const Vec2 candidate(ux(rng), uy(rng));
      placed = std::all_of(positions.begin(), positions.end(),
                           [&](const Vec2& q) { return (q - candidate).norm() >= separation; });
      if (placed) positions.push_back(candidate);
    }
    if (!placed) throw ConfigurationError("cannot place holes with the required separation in the workspace");
  }

  std::vector<int> types(required_types);
  std::uniform_int_distribution<int> utype(1, config.n_types);
  while (types.size() < positions.size()) types.push_back(utype(rng));
  std::shuffle(types.begin(), types.end(), rng);

  for (std::size_t i = 0; i < positions.size(); ++i) world.holes.push_back({types[i], positions[i], false});
  return world;
}

std::vector<Vec2> vision_detect(const World& world, Rng& rng) {
  const double b = world.config.detector_error_bound;
  std::uniform_real_distribution<double> err(-b, b);
  std::vector<Vec2> out;
  out.reserve(world.holes.size());
  for (const auto& h : world.holes) {
    if (b == 0.0) {
      out.push_back(h.position);
      continue;
    }
    const double ex = err(rng);
    const double ey = err(rng);
    out.push_back(h.position + Vec2(ex, ey));
  }
  return out;
}

Vec3 spiral_command(const Vec3& ee, const Vec2& target_estimate, int j, int horizon, const SpiralParams& params,
                    Rng& rng) {
  const double frac = static_cast<double>(j) / horizon;
  const double radius = frac * params.r_max;
  const double angle = 2.0 * std::numbers::pi * frac * params.n_rot;
  const Vec3 spiral(radius * std::cos(angle), radius * std::sin(angle), -params.delta_z);
  Vec3 wiggle = Vec3::Zero();
  if (params.sigma_wiggle > 0.0) {
    std::normal_distribution<double> n(0.0, params.sigma_wiggle);
    wiggle = Vec3(n(rng), n(rng), n(rng));
    wiggle.z() = std::abs(wiggle.z());
  }
  const Vec3 target(target_estimate.x(), target_estimate.y(), 0.0);
  return spiral + wiggle + target - ee;
}

RolloutOutcome rollout_low_level(const World& world, const Vec2& start_estimate, PegType peg,
                                 const HoleGroundTruth& hole, Rng& rng) {
  if (!start_estimate.allFinite()) throw InvalidInput("start estimate is not finite");
  const bool match = peg.value == hole.hole_type;
  const double radius = world.capture_radius;
  return run_spiral(world, start_estimate, hole, rng, [&](double dist) { return match && dist <= radius; }).outcome;
}

RolloutOutcome rollout_transition_model(const World& world, const Vec2& start_estimate, PegType peg,
                                        const HoleGroundTruth& hole, double alpha, Rng& rng) {
  if (!start_estimate.allFinite()) throw InvalidInput("start estimate is not finite");
  const bool match = peg.value == hole.hole_type;
  std::bernoulli_distribution fit(match ? alpha : 0.0);
  const bool success = fit(rng);
  Rollout r = run_spiral(world, start_estimate, hole, rng, [](double) { return false; });
  if (success) {
    auto& steps = r.outcome.trace.steps;
    steps.resize(static_cast<std::size_t>(r.closest_step) + 1);
    r.outcome.success = true;
    r.outcome.insertion_step = r.closest_step;
    r.outcome.final_ee = steps.back().ee_position;
  }
  return std::move(r.outcome);
}

double calibrate_alpha(const EnvConfig& config, const SpiralParams& params, int trials, std::uint64_t seed) {
  if (trials < 1) throw InvalidInput("calibration needs at least one trial");
  World world;
  world.config = config;
  world.spiral = params;
  world.clearance = config.clearance;
  world.capture_radius = config.capture_radius;
  const HoleGroundTruth hole{1, 0.5 * (config.workspace.lo + config.workspace.hi), false};
  world.holes = {hole};
  int successes = 0;
  for (int i = 0; i < trials; ++i) {
    Rng rng = make_rng(seed, Stream::Calibration, static_cast<std::uint64_t>(i));
    const Vec2 start = vision_detect(world, rng).front();
    successes += rollout_low_level(world, start, PegType{1}, hole, rng).success ? 1 : 0;
  }
  return static_cast<double>(successes) / trials;
}

double capture_feasibility_bound(const EnvConfig& config, const SpiralParams& params) {
  return config.detector_error_bound * std::numbers::sqrt2 + params.r_max;
}

CaptureCalibration tune_capture_radius(const EnvConfig& config, const SpiralParams& params, double target_alpha,
                                       int trials, std::uint64_t seed) {
  if (!(target_alpha > 0.0 && target_alpha <= 1.0))
    throw ConfigurationError("target alpha must lie in (0, 1]");
  EnvConfig cfg = config;
  const double bound = capture_feasibility_bound(config, params);
  auto rate = [&](double radius) {
    cfg.capture_radius = radius;
    return calibrate_alpha(cfg, params, trials, seed);
  };
  const double at_bound = rate(bound);
  if (at_bound < target_alpha) throw ConfigurationError("target alpha is not reachable at the feasibility bound");
  if (target_alpha >= 1.0) return {bound, at_bound, true};

  double lo = 0.0;
  double hi = bound;
  for (int it = 0; it < 60 && hi - lo > 1e-7; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rate(mid) >= target_alpha ? hi : lo) = mid;
  }
  CaptureCalibration out;
  out.capture_radius = hi;
  out.alpha_hat = rate(hi);
  out.at_feasibility_bound = bound - hi <= 1e-6;
  return out;
}

}  // namespace belieffit
