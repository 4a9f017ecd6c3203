#include "belieffit/sensors.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "belieffit/error.hpp"

namespace belieffit {

void SensorModel::validate() const {
  const Mat2& R = position.R_true;
  if (!R.allFinite() || (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-15 || R.determinant() <= 0.0 || R(0, 0) <= 0.0)
    throw InvalidInput("sensor R_true must be symmetric positive definite");
  if (!position.bias.allFinite()) throw InvalidInput("sensor bias must be finite");
  if (!(position.uninformative_scale >= 1.0)) throw InvalidInput("uninformative_scale must be >= 1");
  if (!(position.r_info >= 0.0)) throw InvalidInput("r_info must be >= 0");
  // Degenerate sensors (oracle, coin flip) are accepted for experiments.
  if (!(0.0 <= match.fpr_true && match.fpr_true <= match.tpr_true && match.tpr_true <= 1.0))
    throw InvalidInput("match sensor needs 0 <= fpr <= tpr <= 1");
}

Mat2 effective_position_noise(const PositionSensorModel& model, double closest_approach) {
  if (closest_approach <= model.r_info) return model.R_true;
  const double s = model.uninformative_scale;
  return s * s * model.R_true;
}

Innovation sense_position(const SensorimotorTrace& trace, const Vec2& true_p, const Vec2& current_mu,
                          const SensorModel& model, Rng& rng) {
  if (trace.steps.empty()) throw InvalidInput("position sensor needs a non-empty trace");
  const Mat2 cov = effective_position_noise(model.position, trace.closest_approach(true_p));
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec2 z(n(rng), n(rng));
  // Cholesky factor of a (near) zero covariance degenerates; treat as noiseless.
  Vec2 noise = Vec2::Zero();
  if (cov.trace() > 0.0) {
    Eigen::LLT<Mat2> llt(cov);
    if (llt.info() == Eigen::Success) noise = llt.matrixL() * z;
  }
  return {true_p + model.position.bias + noise - current_mu};
}

MatchObs sense_match(int hole_type, PegType peg, const SensorModel& model, Rng& rng) {
  const double p = hole_type == peg.value ? model.match.tpr_true : model.match.fpr_true;
  std::bernoulli_distribution draw(p);
  return draw(rng) ? MatchObs::Match : MatchObs::Mismatch;
}

}  // namespace belieffit
