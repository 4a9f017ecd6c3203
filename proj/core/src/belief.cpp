#include "belieffit/belief.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "belieffit/error.hpp"

namespace belieffit {

bool GaussianBelief2::valid() const {
  if (!mean.allFinite() || !cov.allFinite()) return false;
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
  // Closed-form eigenvalues of a symmetric 2x2 matrix.
  const double tr = cov.trace();
  const double det = cov.determinant();
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  return tr / 2.0 - disc >= -1e-12;
}

TypeBelief TypeBelief::from_weights(std::span<const double> weights) {
  if (weights.size() < 2) throw InvalidInput("TypeBelief needs at least two types");
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw InvalidInput("TypeBelief weight must be finite and >= 0");
    sum += w;
  }
  if (!(sum > 0.0)) throw InvalidInput("TypeBelief weights sum to zero");
  TypeBelief out;
  out.probs_.reserve(weights.size());
  for (double w : weights) out.probs_.push_back(std::max(w / sum, kProbabilityFloor));
  return out;
}

double TypeBelief::mass(int type) const {
  if (type < 1 || static_cast<std::size_t>(type) > probs_.size())
    throw InvalidInput("type label " + std::to_string(type) + " out of range");
  return probs_[static_cast<std::size_t>(type - 1)];
}

TypeBelief TypeBelief::certain(int type, std::size_t n_types) {
  if (type < 1 || static_cast<std::size_t>(type) > n_types) throw InvalidInput("type label out of range");
  std::vector<double> w(n_types, 0.0);
  w[static_cast<std::size_t>(type - 1)] = 1.0;
  return from_weights(w);
}

bool TypeBelief::valid() const {
  if (probs_.size() < 2) return false;
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= 1e-9;
}

void EnvConfig::validate() const {
  if (n_holes < 1) throw InvalidInput("n_holes must be >= 1");
  if (n_types < 2) throw InvalidInput("n_types must be >= 2");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("alpha must lie in (0, 1]");
  if (!(clearance > 0.0)) throw InvalidInput("clearance must be > 0");
  if (!(detector_error_bound >= 0.0)) throw InvalidInput("detector_error_bound must be >= 0");
  if (!(sigma_init > 0.0)) throw InvalidInput("sigma_init must be > 0");
  if (!(capture_radius >= 0.0)) throw InvalidInput("capture_radius must be >= 0");
  if (horizon_high < 1 || horizon_low < 1) throw InvalidInput("horizons K and J must be >= 1");
  if (!(workspace.hi.array() > workspace.lo.array()).all()) throw InvalidInput("workspace bounds are empty");
}

GaussianBelief2 init_position_belief(const Vec2& detection, double sigma_init) {
  if (!detection.allFinite()) throw InvalidInput("detection is not finite");
  if (!(sigma_init > 0.0)) throw InvalidInput("sigma_init must be > 0");
  return {detection, sigma_init * Mat2::Identity()};
}

TypeBelief init_type_belief_uniform(int n_types) {
  if (n_types < 2) throw InvalidInput("uniform type belief needs C >= 2");
  const std::vector<double> w(static_cast<std::size_t>(n_types), 1.0);
  return TypeBelief::from_weights(w);
}

TypeBelief init_type_belief_random(int n_types, Rng& rng) {
  if (n_types < 2) throw InvalidInput("random type belief needs C >= 2");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(n_types));
  for (;;) {
    for (auto& x : w) x = unit(rng);
    if (std::accumulate(w.begin(), w.end(), 0.0) > 0.0) return TypeBelief::from_weights(w);
  }
}

double fit_probability(const HoleBelief& belief, PegType peg, double alpha) {
  if (belief.fitted) return 0.0;
  return alpha * belief.type_belief.mass(peg.value);
}

}  // namespace belieffit
