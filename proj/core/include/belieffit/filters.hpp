#pragma once

#include <cstddef>
#include <vector>

#include "belieffit/belief.hpp"

namespace belieffit {

/// Observation noise R of the position sensor (meters^2).
struct PositionNoiseModel {
  Mat2 R = Mat2::Identity() * 0.25e-4;

  /// Symmetrized copy with eigenvalues raised to at least 1e-12.
  PositionNoiseModel regularized() const;
  /// Noise-free observation (R = 1e-12 I).
  static PositionNoiseModel exact();
};

/// Virtual match sensor output.
enum class MatchObs : bool { Mismatch = false, Match = true };

inline constexpr double kMatchEpsilon = 1e-6;

/// H(o_match | c, c_peg) restricted to the match/mismatch dichotomy:
/// tpr = P(match | c == c_peg), fpr = P(match | c != c_peg).
class MatchObservationModel {
 public:
  MatchObservationModel() = default;
  /// Both rates are clipped to [kMatchEpsilon, 1 - kMatchEpsilon].
  MatchObservationModel(double tpr, double fpr);

  static MatchObservationModel uninformative() { return {0.5, 0.5}; }

  double tpr() const { return tpr_; }
  double fpr() const { return fpr_; }
  double likelihood(MatchObs o, bool same_type) const;

 private:
  double tpr_ = 0.5;
  double fpr_ = 0.5;
};

/// h_pos output: o_pos - mu_t.
struct Innovation {
  Vec2 value = Vec2::Zero();
};

/// Transition factor T(beta_{t+1} | c, c_peg) for an unfitted hole.
double transition_likelihood(bool beta_next, bool same_type, double alpha);

/// Identity-dynamics Kalman update:
///   K = Sigma (R + Sigma)^-1, mu' = mu + K v, Sigma' = (I - K) Sigma,
/// followed by Sigma' <- (Sigma' + Sigma'^T) / 2.
GaussianBelief2 kalman_update(const GaussianBelief2& prior, const Innovation& innovation,
                              const PositionNoiseModel& noise);

/// Normalizers at or below this raise DegenerateEvidence.
inline constexpr double kDegenerateNormalizer = 1e-300;

/// Discrete Bayes update xi'_c ∝ H(o|c,c_peg) T(beta|c,c_peg) xi_c.
TypeBelief histogram_update(const TypeBelief& prior, MatchObs o_match, bool beta_next, PegType peg,
                            double alpha, const MatchObservationModel& model);

struct FilterModels {
  PositionNoiseModel position;
  MatchObservationModel match;
};

/// Applies both updates to beliefs[chosen] only and sets its fitted flag to
/// beta_next. Throws InvalidInput if chosen is out of range.
std::vector<HoleBelief> batch_update(const std::vector<HoleBelief>& beliefs, std::size_t chosen,
                                     const Innovation& innovation, MatchObs o_match, bool beta_next,
                                     PegType peg, double alpha, const FilterModels& models);

}  // namespace belieffit
