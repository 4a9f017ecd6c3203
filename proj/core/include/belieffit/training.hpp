#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "belieffit/filters.hpp"
#include "belieffit/sensors.hpp"
#include "belieffit/sim.hpp"

namespace belieffit {

/// One fitting interaction reduced to what the filters consume.
struct InteractionRecord {
  PegType peg;
  int hole_type = 1;
  Vec2 p = Vec2::Zero();
  Vec2 mu0 = Vec2::Zero();
  Mat2 sigma0 = Mat2::Identity() * 1e-4;
  TypeBelief xi0;
  /// Absolute position observation o_pos.
  Vec2 obs = Vec2::Zero();
  MatchObs o_match = MatchObs::Mismatch;
  bool beta = false;

  bool matched() const { return peg.value == hole_type; }
  Innovation innovation() const { return {obs - mu0}; }
};

/// Learned filter parameters.
///   R            position noise, stored through its Cholesky factor
///   observation  H used inside the histogram filter (trained by the -ln xi term)
///   head         match-sensor confusion (trained by the cross-entropy terms)
struct LearnedParams {
  Mat2 R = Mat2::Identity() * 1e-4;
  MatchObservationModel observation;
  MatchObservationModel head;

  static constexpr int kDim = 7;
  using Vector = Eigen::Matrix<double, kDim, 1>;

  /// [ln L00, L10, ln L11, logit tpr_H, logit fpr_H, logit tpr_head, logit fpr_head]
  /// where R = L L^T and rates map through eps + (1 - 2 eps) sigmoid(.).
  Vector to_unconstrained() const;
  static LearnedParams from_unconstrained(const Vector& theta);
};

/// Selects which loss terms contribute (all by default).
struct LossMask {
  bool position = true;
  bool type = true;
  bool head = true;
};

struct LossTerms {
  double log_det = 0.0;    // 1/2 ln|Sigma_1|
  double quadratic = 0.0;  // 1/2 (p - mu_1)^T Sigma_1^-1 (p - mu_1)
  double type = 0.0;       // -ln xi_1[c]
  double head = 0.0;       // cross entropy of the match head
  double total(const LossMask& m = {}) const {
    return (m.position ? log_det + quadratic : 0.0) + (m.type ? type : 0.0) + (m.head ? head : 0.0);
  }
};

/// Log arguments are floored at this value.
inline constexpr double kLossEpsilon = 1e-6;

/// Runs the Kalman and histogram updates with `params`, then evaluates the
/// negative log-likelihood of the true hole state term by term.
LossTerms nll_terms(const LearnedParams& params, const InteractionRecord& record, double alpha);
double nll_loss(const LearnedParams& params, const InteractionRecord& record, double alpha);

/// Mean loss over the batch (pairwise summation).
double mean_nll(const LearnedParams& params, std::span<const InteractionRecord> batch, double alpha,
                const LossMask& mask = {});

struct LossGradient {
  double loss = 0.0;
  LearnedParams::Vector grad = LearnedParams::Vector::Zero();
};

/// Mean loss and its analytic gradient w.r.t. the unconstrained parameters.
/// Per-record contributions are reduced by a pairwise tree sum.
LossGradient grad_nll(const LearnedParams& params, std::span<const InteractionRecord> batch, double alpha,
                      const LossMask& mask = {});

/// Central finite differences of mean_nll in the unconstrained coordinates.
LearnedParams::Vector finite_difference_grad(const LearnedParams& params, std::span<const InteractionRecord> batch,
                                             double alpha, double step = 1e-6, const LossMask& mask = {});

struct FitOptions {
  double learning_rate = 1e-4;
  int epochs = 2000;
  int batch_size = 100;
  double alpha = 0.34;
  std::uint64_t seed = 1;
  int trailing_window = 50;
};

struct FitResult {
  LearnedParams params;
  /// Full-dataset mean loss; entry 0 is the initial loss, entry e follows epoch e.
  std::vector<double> loss_curve;
  /// loss_curve.back() <= loss_curve[size - 1 - window] (up to 1e-9 relative).
  bool trailing_non_increasing = false;
};

/// Mini-batch Adam on the mean NLL. Throws OptimizationFailure if the loss
/// becomes non-finite or exceeds initial + 10 max(1, |initial|).
FitResult fit_parameters(std::span<const InteractionRecord> dataset, const LearnedParams& init,
                         const FitOptions& options);

/// Matched records first alternate with mismatched ones: exactly ceil(n/2)
/// matched and floor(n/2) mismatched. Each record comes from one spiral rollout
/// started at a detector-noise estimate plus one reading of each sensor.
std::vector<InteractionRecord> generate_dataset(const EnvConfig& config, const SpiralParams& spiral,
                                                const SensorModel& sensors, int n_interactions, std::uint64_t seed);

/// Training prior xi_0 of record `index` (uniform draws, sum-normalized).
TypeBelief training_type_prior(int n_types, std::uint64_t seed, std::size_t index);

struct CovarianceEstimate {
  Mat2 cov = Mat2::Zero();
  bool rank_deficient = false;
};

/// Unbiased sample covariance of the residuals o_pos - p. Needs >= 3 samples.
CovarianceEstimate mle_covariance_oracle(std::span<const Vec2> residuals);

struct LabeledMatch {
  bool matched = false;
  MatchObs o_match = MatchObs::Mismatch;
};

/// Counting estimator of (tpr, fpr), clipped to [eps, 1 - eps]. Throws
/// DegenerateOracle unless both classes are present.
MatchObservationModel mle_confusion_oracle(std::span<const LabeledMatch> samples);

/// peg_type,hole_type,p_x,p_y,mu0_x,mu0_y,obs_x,obs_y,o_match,beta
inline constexpr const char* kDatasetCsvHeader = "peg_type,hole_type,p_x,p_y,mu0_x,mu0_y,obs_x,obs_y,o_match,beta";

void write_dataset_csv(std::ostream& out, std::span<const InteractionRecord> records);
/// Sigma_0 = sigma_init I; xi_0 regenerated with training_type_prior(seed, row).
std::vector<InteractionRecord> read_dataset_csv(std::istream& in, const EnvConfig& config, std::uint64_t prior_seed);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace belieffit
