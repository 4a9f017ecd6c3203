#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "belieffit/rng.hpp"

namespace belieffit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;

/// Entries of a normalized TypeBelief are never below this value.
inline constexpr double kProbabilityFloor = 1e-12;

/// Gaussian belief over a hole's planar position (meters, meters^2).
struct GaussianBelief2 {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Zero();

  /// Symmetric within 1e-12, both eigenvalues >= -1e-12, finite mean.
  bool valid() const;
};

/// Multinomial belief over C >= 2 hole types. Types are labelled 1..C.
class TypeBelief {
 public:
  /// Divides non-negative weights by their sum, then raises entries below
  /// kProbabilityFloor to the floor. Throws InvalidInput on C < 2, negative
  /// or non-finite weights, or a zero sum.
  static TypeBelief from_weights(std::span<const double> weights);

  std::size_t size() const { return probs_.size(); }
  /// Mass on type label `type` in 1..C.
  double mass(int type) const;
  std::span<const double> probs() const { return probs_; }
  /// One-hot on `type` (other entries at the floor).
  static TypeBelief certain(int type, std::size_t n_types);

  bool valid() const;

  friend bool operator==(const TypeBelief&, const TypeBelief&) = default;

 private:
  std::vector<double> probs_;
};

struct PegType {
  int value = 1;
  friend bool operator==(PegType, PegType) = default;
};

/// Per-hole belief; `fitted` is fully observed.
struct HoleBelief {
  GaussianBelief2 position;
  TypeBelief type_belief;
  bool fitted = false;
};

struct HoleGroundTruth {
  int hole_type = 1;
  Vec2 position = Vec2::Zero();
  bool fitted = false;
};

/// Axis-aligned planar workspace in meters.
struct Bounds2 {
  Vec2 lo{-0.2, -0.2};
  Vec2 hi{0.2, 0.2};

  bool contains(const Vec2& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec2 clamp(const Vec2& p) const { return p.cwiseMax(lo).cwiseMin(hi); }
};

/// Environment/task configuration. Defaults reproduce the experimental setup:
/// three hole types, 2 cm detector error, 1 cm^2 initial variance, J = 100.
struct EnvConfig {
  int n_holes = 5;
  int n_types = 3;
  double clearance = 0.001;
  double detector_error_bound = 0.02;
  double alpha = 0.34;
  double sigma_init = 1e-4;
  /// Disk around a hole inside which a matching peg inserts. The default is
  /// the value calibrate produces for alpha = 0.34 with the default spiral.
  double capture_radius = 0.00197;
  Bounds2 workspace;
  int horizon_high = 10;
  int horizon_low = 100;
  std::uint64_t rng_seed = 20210527;

  /// Throws InvalidInput when an invariant is violated.
  void validate() const;
};

/// Sigma_0 = sigma_init * I centered on the detection.
GaussianBelief2 init_position_belief(const Vec2& detection, double sigma_init);

TypeBelief init_type_belief_uniform(int n_types);

/// Draws C values from U(0,1) and normalizes them to sum 1.
TypeBelief init_type_belief_random(int n_types, Rng& rng);

/// p(beta_{t+1} = 1 | b, c_peg) = alpha * xi[c_peg]; zero for fitted holes.
double fit_probability(const HoleBelief& belief, PegType peg, double alpha);

}  // namespace belieffit
