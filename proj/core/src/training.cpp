#include "belieffit/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/Cholesky>

#include "belieffit/error.hpp"

namespace belieffit {

namespace {

using Vector = LearnedParams::Vector;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double rate_from_logit(double theta) { return kMatchEpsilon + (1.0 - 2.0 * kMatchEpsilon) * sigmoid(theta); }

double logit_from_rate(double p) {
  const double u = std::clamp((p - kMatchEpsilon) / (1.0 - 2.0 * kMatchEpsilon), 1e-12, 1.0 - 1e-12);
  return std::log(u / (1.0 - u));
}

double rate_derivative(double theta) {
  const double s = sigmoid(theta);
  return (1.0 - 2.0 * kMatchEpsilon) * s * (1.0 - s);
}

// Pairwise (tree) reduction of f(0) + ... + f(n-1) with a fixed shape.
template <class T, class F>
T pairwise_sum(std::size_t lo, std::size_t hi, F& f) {
  if (hi - lo <= 8) {
    T acc = f(lo);
    for (std::size_t i = lo + 1; i < hi; ++i) acc += f(i);
    return acc;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  T left = pairwise_sum<T>(lo, mid, f);
  left += pairwise_sum<T>(mid, hi, f);
  return left;
}

struct PositionPass {
  Mat2 gain;
  Mat2 s_inv;
  Vec2 mu1;
  Mat2 sigma1;
  Mat2 sigma1_inv;
  Vec2 err;  // p - mu_1
};

PositionPass position_pass(const Mat2& R, const InteractionRecord& rec) {
  PositionPass out;
  const GaussianBelief2 prior{rec.mu0, rec.sigma0};
  const GaussianBelief2 post = kalman_update(prior, rec.innovation(), {R});
  out.s_inv = (R + rec.sigma0).inverse();
  out.gain = rec.sigma0 * out.s_inv;
  out.mu1 = post.mean;
  out.sigma1 = post.cov;
  out.sigma1_inv = post.cov.inverse();
  out.err = rec.p - post.mean;
  return out;
}

double log_match_prob(const MatchObservationModel& m, MatchObs o, bool same) {
  return std::log(std::max(m.likelihood(o, same), kLossEpsilon));
}

// d likelihood(o, same) / d rate, for the rate selected by `same`.
double likelihood_slope(MatchObs o) { return o == MatchObs::Match ? 1.0 : -1.0; }

struct RecordEval {
  double loss = 0.0;
  Vector grad = Vector::Zero();
  RecordEval& operator+=(const RecordEval& o) {
    loss += o.loss;
    grad += o.grad;
    return *this;
  }
};

RecordEval evaluate_record(const Vector& theta, const LearnedParams& params, const InteractionRecord& rec,
                           double alpha, const LossMask& mask) {
  RecordEval ev;
  const LossTerms terms = nll_terms(params, rec, alpha);
  ev.loss = terms.total(mask);

  if (mask.position) {
    const PositionPass pp = position_pass(params.R, rec);
    const Vec2 w = pp.sigma1_inv * pp.err;
    const Vec2 v = rec.innovation().value;
    // dL = tr(M dR)
    const Mat2 M = 0.5 * pp.gain.transpose() * (pp.sigma1_inv - w * w.transpose()) * pp.gain +
                   pp.s_inv * v * w.transpose() * pp.gain;
    Mat2 L = Mat2::Zero();
    L(0, 0) = std::exp(theta(0));
    L(1, 0) = theta(1);
    L(1, 1) = std::exp(theta(2));
    const Mat2 G = (M + M.transpose()) * L;
    ev.grad(0) = G(0, 0) * L(0, 0);
    ev.grad(1) = G(1, 0);
    ev.grad(2) = G(1, 1) * L(1, 1);
  }

  if (mask.type) {
    const auto xi0 = rec.xi0.probs();
    const int c_true = rec.hole_type - 1;
    // Recompute the posterior mass on the true class to know whether the floor is active.
    double eta = 0.0, d_eta_t = 0.0, d_eta_f = 0.0;
    double num = 0.0, d_num_t = 0.0, d_num_f = 0.0;
    for (std::size_t k = 0; k < xi0.size(); ++k) {
      const bool same = static_cast<int>(k) + 1 == rec.peg.value;
      const double T = transition_likelihood(rec.beta, same, alpha);
      const double H = params.observation.likelihood(rec.o_match, same);
      const double slope = likelihood_slope(rec.o_match) * T * xi0[k];
      eta += H * T * xi0[k];
      (same ? d_eta_t : d_eta_f) += slope;
      if (static_cast<int>(k) == c_true) {
        num = H * T * xi0[k];
        (same ? d_num_t : d_num_f) = slope;
      }
    }
    const double post = eta > 0.0 ? std::max(num / eta, kProbabilityFloor) : 0.0;
    if (post > kLossEpsilon && num > 0.0) {
      // -ln(num / eta) = ln eta - ln num
      const double g_t = d_eta_t / eta - d_num_t / num;
      const double g_f = d_eta_f / eta - d_num_f / num;
      ev.grad(3) = g_t * rate_derivative(theta(3));
      ev.grad(4) = g_f * rate_derivative(theta(4));
    }
  }

  if (mask.head) {
    const bool same = rec.matched();
    const double lik = params.head.likelihood(rec.o_match, same);
    if (lik > kLossEpsilon) {
      const double g = -likelihood_slope(rec.o_match) / lik;
      if (same)
        ev.grad(5) = g * rate_derivative(theta(5));
      else
        ev.grad(6) = g * rate_derivative(theta(6));
    }
  }
  return ev;
}

}  // namespace

Vector LearnedParams::to_unconstrained() const {
  Eigen::LLT<Mat2> llt(0.5 * (R + R.transpose()));
  if (llt.info() != Eigen::Success) throw InvalidInput("learned R must be positive definite");
  const Mat2 L = llt.matrixL();
  Vector theta;
  theta << std::log(L(0, 0)), L(1, 0), std::log(L(1, 1)), logit_from_rate(observation.tpr()),
      logit_from_rate(observation.fpr()), logit_from_rate(head.tpr()), logit_from_rate(head.fpr());
  return theta;
}

LearnedParams LearnedParams::from_unconstrained(const Vector& theta) {
  Mat2 L = Mat2::Zero();
  L(0, 0) = std::exp(theta(0));
  L(1, 0) = theta(1);
  L(1, 1) = std::exp(theta(2));
  LearnedParams p;
  p.R = L * L.transpose();
  p.observation = {rate_from_logit(theta(3)), rate_from_logit(theta(4))};
  p.head = {rate_from_logit(theta(5)), rate_from_logit(theta(6))};
  return p;
}

LossTerms nll_terms(const LearnedParams& params, const InteractionRecord& rec, double alpha) {
  LossTerms t;
  const PositionPass pp = position_pass(params.R, rec);
  const double det = pp.sigma1.determinant();
  if (!(det > 0.0)) throw InvalidInput("posterior covariance is not positive definite");
  t.log_det = 0.5 * std::log(det);
  t.quadratic = 0.5 * pp.err.dot(pp.sigma1_inv * pp.err);

  const TypeBelief post = histogram_update(rec.xi0, rec.o_match, rec.beta, rec.peg, alpha, params.observation);
  t.type = -std::log(std::max(post.mass(rec.hole_type), kLossEpsilon));
  t.head = -log_match_prob(params.head, rec.o_match, rec.matched());
  return t;
}

double nll_loss(const LearnedParams& params, const InteractionRecord& record, double alpha) {
  return nll_terms(params, record, alpha).total();
}

double mean_nll(const LearnedParams& params, std::span<const InteractionRecord> batch, double alpha,
                const LossMask& mask) {
  if (batch.empty()) throw InvalidInput("loss needs a non-empty batch");
  auto f = [&](std::size_t i) { return nll_terms(params, batch[i], alpha).total(mask); };
  return pairwise_sum<double>(0, batch.size(), f) / static_cast<double>(batch.size());
}

namespace {

LossGradient grad_at(const Vector& theta, std::span<const InteractionRecord> batch, double alpha,
                     const LossMask& mask) {
  const LearnedParams params = LearnedParams::from_unconstrained(theta);
  auto f = [&](std::size_t i) { return evaluate_record(theta, params, batch[i], alpha, mask); };
  const RecordEval sum = pairwise_sum<RecordEval>(0, batch.size(), f);
  const double n = static_cast<double>(batch.size());
  return {sum.loss / n, sum.grad / n};
}

// No significant rise across the trailing window: the mean of its second
// half may exceed the first half's by at most two standard errors.
bool trailing_non_increasing(const std::vector<double>& curve, int window) {
  const auto w = static_cast<std::size_t>(std::max(2, window));
  if (curve.size() < 4) return curve.back() <= curve.front();
  const std::size_t n = std::min(w, curve.size());
  const std::size_t half = n / 2;
  const auto first = curve.end() - static_cast<long>(n);
  const auto second = curve.end() - static_cast<long>(half);
  auto moments = [](auto b, auto e) {
    const double m = std::accumulate(b, e, 0.0) / static_cast<double>(e - b);
    double v = 0.0;
    for (auto it = b; it != e; ++it) v += (*it - m) * (*it - m);
    return std::pair{m, v / static_cast<double>(std::max<long>(1, e - b - 1))};
  };
  const auto [m1, v1] = moments(first, first + static_cast<long>(half));
  const auto [m2, v2] = moments(second, curve.end());
  const double se = std::sqrt(v1 / static_cast<double>(half) + v2 / static_cast<double>(half));
  return m2 - m1 <= 2.0 * se + 1e-12 * std::abs(m1);
}

}  // namespace

LossGradient grad_nll(const LearnedParams& params, std::span<const InteractionRecord> batch, double alpha,
                      const LossMask& mask) {
  if (batch.empty()) throw InvalidInput("gradient needs a non-empty batch");
  return grad_at(params.to_unconstrained(), batch, alpha, mask);
}

Vector finite_difference_grad(const LearnedParams& params, std::span<const InteractionRecord> batch, double alpha,
                              double step, const LossMask& mask) {
  const Vector theta = params.to_unconstrained();
  Vector g;
  for (int k = 0; k < LearnedParams::kDim; ++k) {
    Vector hi = theta, lo = theta;
    hi(k) += step;
    lo(k) -= step;
    g(k) = (mean_nll(LearnedParams::from_unconstrained(hi), batch, alpha, mask) -
            mean_nll(LearnedParams::from_unconstrained(lo), batch, alpha, mask)) /
           (2.0 * step);
  }
  return g;
}

FitResult fit_parameters(std::span<const InteractionRecord> dataset, const LearnedParams& init,
                         const FitOptions& options) {
  if (dataset.empty()) throw InvalidInput("cannot fit parameters on an empty dataset");
  if (options.epochs < 0 || options.batch_size < 1 || !(options.learning_rate > 0.0))
    throw InvalidInput("invalid fit options");

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  Vector theta = init.to_unconstrained();
  Vector m = Vector::Zero(), v = Vector::Zero();
  long step = 0;

  FitResult res;
  const double initial = mean_nll(init, dataset, options.alpha);
  res.loss_curve.push_back(initial);
  const double ceiling = initial + 10.0 * std::max(1.0, std::abs(initial));

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<InteractionRecord> batch;
  batch.reserve(static_cast<std::size_t>(options.batch_size));

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(options.seed, Stream::Shuffle, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
      const LossGradient lg = grad_at(theta, batch, options.alpha, {});
      ++step;
      m = kBeta1 * m + (1.0 - kBeta1) * lg.grad;
      v = kBeta2 * v + (1.0 - kBeta2) * lg.grad.cwiseAbs2();
      const Vector m_hat = m / (1.0 - std::pow(kBeta1, static_cast<double>(step)));
      const Vector v_hat = v / (1.0 - std::pow(kBeta2, static_cast<double>(step)));
      theta -= options.learning_rate * (m_hat.array() / (v_hat.array().sqrt() + kAdamEps)).matrix();
      if (!theta.allFinite()) throw OptimizationFailure("parameter fitting diverged at epoch " + std::to_string(epoch));
    }
    double loss = std::numeric_limits<double>::infinity();
    try {
      loss = mean_nll(LearnedParams::from_unconstrained(theta), dataset, options.alpha);
    } catch (const InvalidInput&) {
    }
    if (!std::isfinite(loss) || loss > ceiling)
      throw OptimizationFailure("parameter fitting diverged at epoch " + std::to_string(epoch));
    res.loss_curve.push_back(loss);
  }

  res.params = LearnedParams::from_unconstrained(theta);
  res.trailing_non_increasing = trailing_non_increasing(res.loss_curve, options.trailing_window);
  return res;
}

TypeBelief training_type_prior(int n_types, std::uint64_t seed, std::size_t index) {
  Rng rng = make_rng(seed, Stream::TypePrior, index);
  return init_type_belief_random(n_types, rng);
}

std::vector<InteractionRecord> generate_dataset(const EnvConfig& config, const SpiralParams& spiral,
                                                const SensorModel& sensors, int n_interactions, std::uint64_t seed) {
  if (n_interactions < 2) throw InvalidInput("dataset needs at least two interactions");
  config.validate();
  sensors.validate();
  World world;
  world.config = config;
  world.spiral = spiral;
  world.clearance = config.clearance;
  world.capture_radius = config.capture_radius;

  std::vector<InteractionRecord> out;
  out.reserve(static_cast<std::size_t>(n_interactions));
  for (int i = 0; i < n_interactions; ++i) {
    Rng rng = make_rng(seed, Stream::Dataset, static_cast<std::uint64_t>(i));
    std::uniform_int_distribution<int> utype(1, config.n_types);
    std::uniform_int_distribution<int> other(1, config.n_types - 1);
    std::uniform_real_distribution<double> ux(config.workspace.lo.x(), config.workspace.hi.x());
    std::uniform_real_distribution<double> uy(config.workspace.lo.y(), config.workspace.hi.y());

    InteractionRecord rec;
    rec.peg = PegType{utype(rng)};
    const bool matched = i % 2 == 0;
    if (matched) {
      rec.hole_type = rec.peg.value;
    } else {
      const int k = other(rng);
      rec.hole_type = k >= rec.peg.value ? k + 1 : k;
    }
    rec.p = Vec2(ux(rng), uy(rng));
    const HoleGroundTruth hole{rec.hole_type, rec.p, false};
    world.holes = {hole};
    rec.mu0 = vision_detect(world, rng).front();
    rec.sigma0 = config.sigma_init * Mat2::Identity();
    rec.xi0 = training_type_prior(config.n_types, seed, static_cast<std::size_t>(i));

    const RolloutOutcome outcome = rollout_low_level(world, rec.mu0, rec.peg, hole, rng);
    rec.beta = outcome.success;
    rec.obs = rec.mu0 + sense_position(outcome.trace, rec.p, rec.mu0, sensors, rng).value;
    rec.o_match = sense_match(rec.hole_type, rec.peg, sensors, rng);
    out.push_back(std::move(rec));
  }
  return out;
}

CovarianceEstimate mle_covariance_oracle(std::span<const Vec2> residuals) {
  if (residuals.size() < 3) throw InvalidInput("covariance oracle needs at least three samples");
  Vec2 mean = Vec2::Zero();
  for (const auto& r : residuals) mean += r;
  mean /= static_cast<double>(residuals.size());
  Mat2 acc = Mat2::Zero();
  for (const auto& r : residuals) acc += (r - mean) * (r - mean).transpose();
  CovarianceEstimate est;
  est.cov = acc / static_cast<double>(residuals.size() - 1);
  const double tr = est.cov.trace();
  est.rank_deficient = !(est.cov.determinant() > 1e-12 * tr * tr);
  return est;
}

MatchObservationModel mle_confusion_oracle(std::span<const LabeledMatch> samples) {
  std::size_t n_matched = 0, n_mismatched = 0, hits_matched = 0, hits_mismatched = 0;
  for (const auto& s : samples) {
    const bool hit = s.o_match == MatchObs::Match;
    if (s.matched) {
      ++n_matched;
      hits_matched += hit;
    } else {
      ++n_mismatched;
      hits_mismatched += hit;
    }
  }
  if (n_matched == 0 || n_mismatched == 0)
    throw DegenerateOracle("confusion oracle needs matched and mismatched samples");
  return {static_cast<double>(hits_matched) / static_cast<double>(n_matched),
          static_cast<double>(hits_mismatched) / static_cast<double>(n_mismatched)};
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void write_dataset_csv(std::ostream& out, std::span<const InteractionRecord> records) {
  out << kDatasetCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.peg.value << ',' << r.hole_type << ',' << format_double(r.p.x()) << ',' << format_double(r.p.y()) << ','
        << format_double(r.mu0.x()) << ',' << format_double(r.mu0.y()) << ',' << format_double(r.obs.x()) << ','
        << format_double(r.obs.y()) << ',' << (r.o_match == MatchObs::Match ? 1 : 0) << ',' << (r.beta ? 1 : 0)
        << '\n';
  }
}

std::vector<InteractionRecord> read_dataset_csv(std::istream& in, const EnvConfig& config, std::uint64_t prior_seed) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("dataset CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kDatasetCsvHeader) throw InvalidInput("dataset CSV header mismatch: " + line);

  std::vector<InteractionRecord> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double value = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || !std::isfinite(value))
        throw InvalidInput("dataset CSV row " + std::to_string(row + 1) + ": bad number '" + cell + "'");
      f.push_back(value);
    }
    if (f.size() != 10) throw InvalidInput("dataset CSV row " + std::to_string(row + 1) + ": expected 10 columns");
    InteractionRecord r;
    r.peg = PegType{static_cast<int>(f[0])};
    r.hole_type = static_cast<int>(f[1]);
    if (r.peg.value < 1 || r.peg.value > config.n_types || r.hole_type < 1 || r.hole_type > config.n_types)
      throw InvalidInput("dataset CSV row " + std::to_string(row + 1) + ": type out of range");
    r.p = Vec2(f[2], f[3]);
    r.mu0 = Vec2(f[4], f[5]);
    r.obs = Vec2(f[6], f[7]);
    r.o_match = f[8] != 0.0 ? MatchObs::Match : MatchObs::Mismatch;
    r.beta = f[9] != 0.0;
    r.sigma0 = config.sigma_init * Mat2::Identity();
    r.xi0 = training_type_prior(config.n_types, prior_seed, row);
    out.push_back(std::move(r));
    ++row;
  }
  return out;
}

}  // namespace belieffit
