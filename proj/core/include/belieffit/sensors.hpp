#pragma once

#include "belieffit/filters.hpp"
#include "belieffit/sim.hpp"

namespace belieffit {

/// Ground-truth virtual position sensor. Traces that never came within
/// r_info of the hole are uninformative: their noise covariance is scaled by
/// uninformative_scale^2.
struct PositionSensorModel {
  Vec2 bias = Vec2::Zero();
  Mat2 R_true = Mat2::Identity() * 0.25e-4;
  double uninformative_scale = 4.0;
  double r_info = 0.0225;
};

/// Ground-truth match sensor rates.
struct MatchSensorModel {
  double tpr_true = 0.85;
  double fpr_true = 0.15;
};

/// Parametric stand-in for the learned virtual sensors. Not to be confused
/// with the filter's learned models: the sensors never read those.
struct SensorModel {
  PositionSensorModel position;
  MatchSensorModel match;

  /// R_true symmetric PD, 0 <= fpr <= tpr <= 1, uninformative_scale >= 1.
  void validate() const;
};

/// Effective observation covariance for a trace whose closest approach to the
/// hole is `closest_approach`.
Mat2 effective_position_noise(const PositionSensorModel& model, double closest_approach);

/// o_pos - mu with o_pos = p + bias + e, e ~ N(0, R_eff).
Innovation sense_position(const SensorimotorTrace& trace, const Vec2& true_p, const Vec2& current_mu,
                          const SensorModel& model, Rng& rng);

/// Match with probability tpr_true if the types agree, else fpr_true.
MatchObs sense_match(int hole_type, PegType peg, const SensorModel& model, Rng& rng);

}  // namespace belieffit
