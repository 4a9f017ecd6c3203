#include "belieffit/filters.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "belieffit/error.hpp"

namespace belieffit {

namespace {

constexpr double kMinEigenvalue = 1e-12;

Mat2 symmetrized(const Mat2& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

PositionNoiseModel PositionNoiseModel::regularized() const {
  if (!R.allFinite()) throw InvalidInput("position noise R is not finite");
  const Mat2 sym = symmetrized(R);
  Eigen::SelfAdjointEigenSolver<Mat2> eig(sym);
  if (eig.eigenvalues().minCoeff() >= kMinEigenvalue) return {sym};
  const Eigen::Vector2d clipped = eig.eigenvalues().cwiseMax(kMinEigenvalue);
  return {symmetrized(eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose())};
}

PositionNoiseModel PositionNoiseModel::exact() { return {Mat2::Identity() * kMinEigenvalue}; }

MatchObservationModel::MatchObservationModel(double tpr, double fpr)
    : tpr_(std::clamp(tpr, kMatchEpsilon, 1.0 - kMatchEpsilon)),
      fpr_(std::clamp(fpr, kMatchEpsilon, 1.0 - kMatchEpsilon)) {
  if (!std::isfinite(tpr) || !std::isfinite(fpr)) throw InvalidInput("match model rates must be finite");
}

double MatchObservationModel::likelihood(MatchObs o, bool same_type) const {
  const double p_match = same_type ? tpr_ : fpr_;
  return o == MatchObs::Match ? p_match : 1.0 - p_match;
}

double transition_likelihood(bool beta_next, bool same_type, double alpha) {
  const double fit = same_type ? alpha : 0.0;
  return beta_next ? fit : 1.0 - fit;
}

GaussianBelief2 kalman_update(const GaussianBelief2& prior, const Innovation& innovation,
                              const PositionNoiseModel& noise) {
  if (!innovation.value.allFinite()) throw InvalidInput("innovation is not finite");
  const Mat2 R = noise.regularized().R;
  Mat2 S = R + prior.cov;
  if (std::abs(S.determinant()) <= 1e-300) S += Mat2::Identity() * kMinEigenvalue;
  const Mat2 gain = prior.cov * S.inverse();
  GaussianBelief2 post;
  post.mean = prior.mean + gain * innovation.value;
  post.cov = symmetrized((Mat2::Identity() - gain) * prior.cov);
  return post;
}

TypeBelief histogram_update(const TypeBelief& prior, MatchObs o_match, bool beta_next, PegType peg,
                            double alpha, const MatchObservationModel& model) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("alpha must lie in (0, 1]");
  const auto xi = prior.probs();
  if (peg.value < 1 || static_cast<std::size_t>(peg.value) > xi.size())
    throw InvalidInput("peg type out of range");
  std::vector<double> unnormalized(xi.size());
  double eta = 0.0;
  for (std::size_t c = 0; c < xi.size(); ++c) {
    const bool same = static_cast<int>(c) + 1 == peg.value;
    unnormalized[c] = model.likelihood(o_match, same) * transition_likelihood(beta_next, same, alpha) * xi[c];
    eta += unnormalized[c];
  }
  if (!(eta > kDegenerateNormalizer)) throw DegenerateEvidence("histogram update normalizer vanished");
  return TypeBelief::from_weights(unnormalized);
}

std::vector<HoleBelief> batch_update(const std::vector<HoleBelief>& beliefs, std::size_t chosen,
                                     const Innovation& innovation, MatchObs o_match, bool beta_next,
                                     PegType peg, double alpha, const FilterModels& models) {
  if (chosen >= beliefs.size()) throw InvalidInput("chosen hole index out of range");
  std::vector<HoleBelief> out = beliefs;
  HoleBelief& hole = out[chosen];
  hole.position = kalman_update(hole.position, innovation, models.position);
  hole.type_belief = histogram_update(hole.type_belief, o_match, beta_next, peg, alpha, models.match);
  hole.fitted = hole.fitted || beta_next;
  return out;
}

}  // namespace belieffit
