#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "belieffit/error.hpp"
#include "belieffit/filters.hpp"
#include "oracles.hpp"

using namespace belieffit;

namespace {

Mat2 random_psd(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat2 a;
  a << u(rng), u(rng), u(rng), u(rng);
  return scale * a * a.transpose();
}

}  // namespace

TEST_CASE("kalman_update hand example") {
  const GaussianBelief2 prior{{0.0, 0.0}, Mat2::Identity() * 1e-4};
  const auto post = kalman_update(prior, {{0.002, -0.004}}, {Mat2::Identity() * 1e-4});
  CHECK(post.mean.x() == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(post.mean.y() == doctest::Approx(-0.002).epsilon(1e-12));
  CHECK(post.cov(0, 0) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(post.cov(1, 1) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(std::abs(post.cov(0, 1)) < 1e-20);
}

TEST_CASE("kalman_update with a certain prior is a fixed point") {
  const GaussianBelief2 prior{{0.1, 0.2}, Mat2::Zero()};
  const auto post = kalman_update(prior, {{0.01, 0.01}}, {Mat2::Identity() * 1e-4});
  CHECK((post.mean - prior.mean).norm() < 1e-9);
  CHECK(post.cov.norm() < 1e-12);
}

TEST_CASE("kalman_update singular S is regularized") {
  const GaussianBelief2 prior{{0.0, 0.0}, Mat2::Zero()};
  const auto post = kalman_update(prior, {{0.01, 0.01}}, {Mat2::Zero()});
  CHECK(post.mean.allFinite());
  CHECK(post.cov.allFinite());
}

TEST_CASE("kalman_update perfect sensor limit") {
  const GaussianBelief2 prior{{0.05, -0.02}, Mat2::Identity() * 1e-4};
  const Vec2 v(0.003, 0.007);
  const auto post = kalman_update(prior, {v}, PositionNoiseModel::exact());
  const Vec2 expected = prior.mean + v;
  CHECK((post.mean - expected).norm() <= 1e-6 * expected.norm());
}

TEST_CASE("kalman_update rejects non-finite innovations") {
  const GaussianBelief2 prior{{0.0, 0.0}, Mat2::Identity() * 1e-4};
  CHECK_THROWS_AS(kalman_update(prior, {{std::nan(""), 0.0}}, {}), InvalidInput);
}

TEST_CASE("kalman_update agrees with scalar algebra and contracts") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Mat2 S = random_psd(rng, 1.0) + Mat2::Identity() * 1e-3;
    const Mat2 R = random_psd(rng, 1.0) + Mat2::Identity() * 1e-3;
    const GaussianBelief2 prior{{n(rng), n(rng)}, S};
    const Vec2 v(n(rng), n(rng));
    const auto post = kalman_update(prior, {v}, {R});
    const auto ref = oracle::kalman_by_hand({prior.mean.x(), prior.mean.y(), S(0, 0), S(0, 1), S(1, 1)}, v.x(), v.y(),
                                            R(0, 0), R(0, 1), R(1, 1));
    CHECK(post.mean.x() == doctest::Approx(ref.m0).epsilon(1e-9));
    CHECK(post.mean.y() == doctest::Approx(ref.m1).epsilon(1e-9));
    CHECK(std::abs(post.cov(0, 0) - ref.s00) < 1e-9);
    CHECK(std::abs(post.cov(0, 1) - ref.s01) < 1e-9);
    CHECK(std::abs(post.cov(1, 1) - ref.s11) < 1e-9);
    CHECK(post.valid());
    CHECK(post.cov.trace() <= S.trace() + 1e-15);
    CHECK(post.cov(0, 1) == post.cov(1, 0));
  }
}

TEST_CASE("isotropic covariance contraction law") {
  const double s0 = 1e-4, r = 0.25e-4;
  GaussianBelief2 g{{0, 0}, Mat2::Identity() * s0};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.005);
  for (int t = 1; t <= 20; ++t) {
    g = kalman_update(g, {{n(rng), n(rng)}}, {Mat2::Identity() * r});
    const double expected = oracle::contracted_variance(s0, r, t);
    CHECK(g.cov(0, 0) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(g.cov(1, 1) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(std::abs(g.cov(0, 1)) < 1e-9 * expected);
  }
}

TEST_CASE("noise model regularization") {
  PositionNoiseModel m{Mat2::Zero()};
  const auto reg = m.regularized();
  CHECK(reg.R(0, 0) >= 1e-12);
  CHECK(reg.R(1, 1) >= 1e-12);
  CHECK(PositionNoiseModel::exact().R(0, 0) == doctest::Approx(1e-12));
}

TEST_CASE("MatchObservationModel clamps and normalizes") {
  const MatchObservationModel m(1.0, 0.0);
  CHECK(m.tpr() == doctest::Approx(1.0 - kMatchEpsilon));
  CHECK(m.fpr() == doctest::Approx(kMatchEpsilon));
  for (bool same : {false, true})
    CHECK(m.likelihood(MatchObs::Match, same) + m.likelihood(MatchObs::Mismatch, same) == 1.0);
}

TEST_CASE("transition likelihood") {
  CHECK(transition_likelihood(true, true, 0.34) == doctest::Approx(0.34));
  CHECK(transition_likelihood(false, true, 0.34) == doctest::Approx(0.66));
  CHECK(transition_likelihood(true, false, 0.34) == 0.0);
  CHECK(transition_likelihood(false, false, 0.34) == 1.0);
}

TEST_CASE("histogram_update failed attempt with uninformative H") {
  const auto post = histogram_update(init_type_belief_uniform(3), MatchObs::Match, false, PegType{1}, 0.34,
                                     MatchObservationModel::uninformative());
  CHECK(post.mass(1) == doctest::Approx(0.2481).epsilon(1e-4 / 0.2481));
  CHECK(post.mass(2) == doctest::Approx(0.3759).epsilon(1e-4 / 0.3759));
  CHECK(post.mass(3) == doctest::Approx(0.3759).epsilon(1e-4 / 0.3759));
}

TEST_CASE("histogram_update fixed point and success collapse") {
  const std::array<double, 3> w{1.0, 0.0, 0.0};
  const auto prior = TypeBelief::from_weights(w);
  const auto post = histogram_update(prior, MatchObs::Match, false, PegType{1}, 0.34, {0.85, 0.15});
  CHECK(post.mass(1) == doctest::Approx(1.0).epsilon(1e-9));

  const auto collapsed = histogram_update(init_type_belief_uniform(3), MatchObs::Mismatch, true, PegType{2}, 0.34,
                                          {0.85, 0.15});
  CHECK(collapsed.mass(2) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(collapsed.mass(1) <= 1e-11);
  CHECK(collapsed.valid());
}

TEST_CASE("histogram_update matches brute-force enumeration") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const int C = 2 + i % 4;
    std::vector<double> w(static_cast<std::size_t>(C));
    for (double& x : w) x = 0.05 + u(rng);
    const auto prior = TypeBelief::from_weights(w);
    const std::vector<double> p(prior.probs().begin(), prior.probs().end());
    const double tpr = 0.01 + 0.98 * u(rng), fpr = 0.01 + 0.98 * u(rng);
    const double alpha = 0.01 + 0.99 * u(rng);
    const bool o = u(rng) < 0.5, beta = u(rng) < 0.3;
    const int peg = 1 + static_cast<int>(u(rng) * C) % C;
    const auto post = histogram_update(prior, o ? MatchObs::Match : MatchObs::Mismatch, beta, PegType{peg}, alpha,
                                       {tpr, fpr});
    const auto ref = oracle::bayes_enumeration(p, o, beta, peg, alpha, tpr, fpr);
    for (int c = 0; c < C; ++c) CHECK(std::abs(post.mass(c + 1) - ref[static_cast<std::size_t>(c)]) <= 1e-12);
    CHECK(post.valid());
  }
}

TEST_CASE("histogram_update errors") {
  const auto prior = init_type_belief_uniform(3);
  CHECK_THROWS_AS(histogram_update(prior, MatchObs::Match, false, PegType{4}, 0.34, {}), InvalidInput);
  CHECK_THROWS_AS(histogram_update(prior, MatchObs::Match, false, PegType{1}, 0.0, {}), InvalidInput);
  // A success on a hole whose peg-type mass sits at the floor, with a tiny
  // alpha, drives the normalizer below the threshold.
  const std::array<double, 3> w{0.0, 0.5, 0.5};
  const auto zero_peg = TypeBelief::from_weights(w);
  const MatchObservationModel extreme(kMatchEpsilon, kMatchEpsilon);
  CHECK_THROWS_AS(histogram_update(zero_peg, MatchObs::Match, true, PegType{1}, 1e-290, extreme), DegenerateEvidence);
  CHECK_NOTHROW(histogram_update(zero_peg, MatchObs::Match, true, PegType{1}, 0.34, extreme));
}

TEST_CASE("batch_update changes only the chosen hole") {
  std::vector<HoleBelief> beliefs;
  for (int i = 0; i < 5; ++i)
    beliefs.push_back({init_position_belief({0.01 * i, 0.0}, 1e-4), init_type_belief_uniform(3), false});
  const FilterModels models{};
  auto out = batch_update(beliefs, 1, {{0.002, 0.001}}, MatchObs::Mismatch, false, PegType{1}, 0.34, models);
  for (std::size_t i = 0; i < 5; ++i) {
    if (i == 1) continue;
    CHECK(out[i].position.mean == beliefs[i].position.mean);
    CHECK(out[i].position.cov == beliefs[i].position.cov);
    CHECK(out[i].type_belief == beliefs[i].type_belief);
    CHECK(out[i].fitted == beliefs[i].fitted);
  }
  CHECK(out[1].position.mean != beliefs[1].position.mean);
  CHECK_FALSE(out[1].fitted);

  out = batch_update(beliefs, 2, {{0.0, 0.0}}, MatchObs::Match, true, PegType{3}, 0.34, models);
  CHECK(out[2].fitted);
  CHECK(out[2].type_belief.mass(3) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(batch_update(beliefs, 5, {}, MatchObs::Match, false, PegType{1}, 0.34, models), InvalidInput);
}
