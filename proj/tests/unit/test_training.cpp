#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include "belieffit/error.hpp"
#include "belieffit/training.hpp"
#include "oracles.hpp"

using namespace belieffit;

namespace {

using Vector = LearnedParams::Vector;

InteractionRecord unit_record() {
  // Sigma_0 = R = 2 I gives K = I/2 and Sigma_1 = I.
  InteractionRecord r;
  r.peg = PegType{1};
  r.hole_type = 1;
  r.mu0 = Vec2(0.0, 0.0);
  r.sigma0 = 2.0 * Mat2::Identity();
  r.obs = Vec2(0.4, -0.2);
  r.p = Vec2(0.2, -0.1);
  r.xi0 = init_type_belief_uniform(3);
  r.beta = true;
  r.o_match = MatchObs::Match;
  return r;
}

LearnedParams unit_params() {
  LearnedParams p;
  p.R = 2.0 * Mat2::Identity();
  p.observation = {1.0, 0.0};
  p.head = {1.0, 0.0};
  return p;
}

const std::vector<InteractionRecord>& small_dataset() {
  static const auto data = generate_dataset(EnvConfig{}, SpiralParams{}, SensorModel{}, 400, 77);
  return data;
}

Vector oracle_gradient(const LearnedParams& params, std::span<const InteractionRecord> batch, double alpha,
                       const LossMask& mask = {}) {
  const Vector theta = params.to_unconstrained();
  std::array<double, 7> x{};
  for (int k = 0; k < 7; ++k) x[static_cast<std::size_t>(k)] = theta(k);
  const auto g = oracle::central_difference<7>(
      [&](const std::array<double, 7>& y) {
        Vector t;
        for (int k = 0; k < 7; ++k) t(k) = y[static_cast<std::size_t>(k)];
        return mean_nll(LearnedParams::from_unconstrained(t), batch, alpha, mask);
      },
      x, 1e-6);
  Vector out;
  for (int k = 0; k < 7; ++k) out(k) = g[static_cast<std::size_t>(k)];
  return out;
}

}  // namespace

TEST_CASE("loss terms vanish at the ideal record") {
  const auto t = nll_terms(unit_params(), unit_record(), 0.34);
  CHECK(t.log_det == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.quadratic == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.type == doctest::Approx(0.0).epsilon(1e-11));
  CHECK(t.head == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(nll_loss(unit_params(), unit_record(), 0.34) < 1e-5);
}

TEST_CASE("quadratic term is homogeneous of degree two") {
  auto r = unit_record();
  r.p = Vec2(0.2, -0.1) + Vec2(0.3, 0.1);
  const double q1 = nll_terms(unit_params(), r, 0.34).quadratic;
  r.p = Vec2(0.2, -0.1) + 2.0 * Vec2(0.3, 0.1);
  const double q2 = nll_terms(unit_params(), r, 0.34).quadratic;
  CHECK(q2 == doctest::Approx(4.0 * q1).epsilon(1e-12));
}

TEST_CASE("type term is floored at ln(1/eps)") {
  auto r = unit_record();
  r.hole_type = 2;  // insertion claimed with a non-matching hole: posterior mass on c is the floor
  const auto t = nll_terms(unit_params(), r, 0.34);
  CHECK(t.type == doctest::Approx(std::log(1.0 / kLossEpsilon)).epsilon(1e-12));
  CHECK(std::isfinite(t.total()));
}

TEST_CASE("unconstrained parameterization round trips") {
  LearnedParams p;
  p.R << 3e-5, 1e-6, 1e-6, 2e-5;
  p.observation = {0.7, 0.05};
  p.head = {0.85, 0.15};
  const auto q = LearnedParams::from_unconstrained(p.to_unconstrained());
  CHECK((q.R - p.R).norm() < 1e-18);
  CHECK(q.observation.tpr() == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(q.head.fpr() == doctest::Approx(0.15).epsilon(1e-12));
  Vector extreme = Vector::Constant(40.0);
  const auto e = LearnedParams::from_unconstrained(extreme);
  CHECK(e.head.tpr() <= 1.0 - kMatchEpsilon);
  CHECK(e.head.tpr() > kMatchEpsilon);
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto& data = small_dataset();
  const std::span<const InteractionRecord> batch(data.data(), 100);
  for (int i = 0; i < 20; ++i) {
    Vector theta;
    theta << std::log(0.005) + 0.5 * n(rng), 1e-3 * n(rng), std::log(0.005) + 0.5 * n(rng), n(rng), n(rng), n(rng),
        n(rng);
    const auto params = LearnedParams::from_unconstrained(theta);
    const Vector analytic = grad_nll(params, batch, 0.34).grad;
    const Vector fd = oracle_gradient(params, batch, 0.34);
    CHECK((analytic - fd).norm() / fd.norm() <= 1e-4);
    CHECK((finite_difference_grad(params, batch, 0.34) - fd).norm() <= 1e-9 * (1.0 + fd.norm()));
  }
}

TEST_CASE("masked terms contribute exactly zero gradient") {
  const auto& data = small_dataset();
  LossMask position_only{true, false, false};
  const auto g = grad_nll(LearnedParams{}, data, 0.34, position_only).grad;
  for (int k = 3; k < 7; ++k) CHECK(g(k) == 0.0);
  CHECK(g.head<3>().norm() > 0.0);
  LossMask head_only{false, false, true};
  const auto h = grad_nll(LearnedParams{}, data, 0.34, head_only).grad;
  for (int k = 0; k < 5; ++k) CHECK(h(k) == 0.0);
}

TEST_CASE("head gradient vanishes at the counting estimator") {
  const auto& data = small_dataset();
  std::vector<LabeledMatch> labels;
  for (const auto& r : data) labels.push_back({r.matched(), r.o_match});
  LearnedParams p;
  p.head = mle_confusion_oracle(labels);
  const LossMask head_only{false, false, true};
  const auto lg = grad_nll(p, data, 0.34, head_only);
  const Vector theta = p.to_unconstrained();
  CHECK(lg.grad.norm() <= 1e-3 * (1.0 + theta.norm()));
}

TEST_CASE("mean loss does not depend on record order") {
  auto data = small_dataset();
  const double a = mean_nll(LearnedParams{}, data, 0.34);
  std::mt19937_64 rng(3);
  std::shuffle(data.begin(), data.end(), rng);
  CHECK(mean_nll(LearnedParams{}, data, 0.34) == doctest::Approx(a).epsilon(1e-12));
  CHECK_THROWS_AS(mean_nll(LearnedParams{}, std::span<const InteractionRecord>{}, 0.34), InvalidInput);
}

TEST_CASE("position terms prefer the unbiased sensor") {
  // Same covariance, one sensor shifted by 3 mm: the true model scores better.
  SensorModel biased;
  biased.position.bias = Vec2(0.003, 0.0);
  const auto fair = generate_dataset(EnvConfig{}, SpiralParams{}, SensorModel{}, 10000, 5);
  const auto off = generate_dataset(EnvConfig{}, SpiralParams{}, biased, 10000, 5);
  LearnedParams p;
  p.R = SensorModel{}.position.R_true;
  const LossMask position_only{true, false, false};
  std::vector<double> a, b;
  for (std::size_t i = 0; i < fair.size(); ++i) {
    a.push_back(nll_terms(p, fair[i], 0.34).total(position_only));
    b.push_back(nll_terms(p, off[i], 0.34).total(position_only));
  }
  double diff = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += b[i] - a[i];
  diff /= static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) sq += std::pow(b[i] - a[i] - diff, 2);
  const double se = std::sqrt(sq / static_cast<double>(a.size() - 1) / static_cast<double>(a.size()));
  CHECK(diff > 3.0 * se);
}

TEST_CASE("generate_dataset balance and determinism") {
  const EnvConfig cfg;
  const auto d = generate_dataset(cfg, SpiralParams{}, SensorModel{}, 3000, 1);
  CHECK(std::count_if(d.begin(), d.end(), [](const auto& r) { return r.matched(); }) == 1500);
  const auto two = generate_dataset(cfg, SpiralParams{}, SensorModel{}, 2, 1);
  CHECK(two[0].matched());
  CHECK_FALSE(two[1].matched());
  const auto three = generate_dataset(cfg, SpiralParams{}, SensorModel{}, 3, 1);
  CHECK(std::count_if(three.begin(), three.end(), [](const auto& r) { return r.matched(); }) == 2);
  const auto again = generate_dataset(cfg, SpiralParams{}, SensorModel{}, 3000, 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d[i].obs == again[i].obs);
    CHECK(d[i].beta == again[i].beta);
    CHECK(d[i].o_match == again[i].o_match);
  }
  for (const auto& r : d) {
    CHECK((r.mu0 - r.p).cwiseAbs().maxCoeff() <= cfg.detector_error_bound);
    if (r.beta) CHECK(r.matched());
    CHECK(r.xi0.valid());
  }
  CHECK_THROWS_AS(generate_dataset(cfg, SpiralParams{}, SensorModel{}, 1, 1), InvalidInput);
}

TEST_CASE("fit_parameters smoke and recovery") {
  const auto& data = small_dataset();
  FitOptions opts;
  opts.epochs = 5;
  const std::span<const InteractionRecord> tiny(data.data(), 10);
  const auto smoke = fit_parameters(tiny, LearnedParams{}, opts);
  CHECK(smoke.loss_curve.size() == 6);
  CHECK(std::isfinite(smoke.loss_curve.back()));

  const auto d = generate_dataset(EnvConfig{}, SpiralParams{}, SensorModel{}, 3000, 9);
  opts.epochs = 2000;
  const auto fit = fit_parameters(d, LearnedParams{}, opts);
  const Mat2 R_true = SensorModel{}.position.R_true;
  CHECK((fit.params.R - R_true).norm() / R_true.norm() <= 0.1);
  std::vector<LabeledMatch> labels;
  for (const auto& r : d) labels.push_back({r.matched(), r.o_match});
  const auto conf = mle_confusion_oracle(labels);
  CHECK(std::abs(fit.params.head.tpr() - conf.tpr()) <= 0.01);
  CHECK(std::abs(fit.params.head.fpr() - conf.fpr()) <= 0.01);
  CHECK(fit.trailing_non_increasing);
  CHECK(fit.loss_curve.back() < fit.loss_curve.front());
}

TEST_CASE("fit_parameters errors") {
  FitOptions opts;
  CHECK_THROWS_AS(fit_parameters(std::span<const InteractionRecord>{}, LearnedParams{}, opts), InvalidInput);
  opts.learning_rate = 20.0;
  opts.epochs = 50;
  CHECK_THROWS_AS(fit_parameters(small_dataset(), LearnedParams{}, opts), OptimizationFailure);
}

TEST_CASE("covariance oracle") {
  std::vector<Vec2> zeros(5, Vec2::Zero());
  const auto z = mle_covariance_oracle(zeros);
  CHECK(z.cov.isZero());
  CHECK(z.rank_deficient);

  const double a = 0.01;
  const std::vector<Vec2> cross{{a, 0}, {-a, 0}, {0, a}, {0, -a}};
  const auto c = mle_covariance_oracle(cross);
  CHECK(c.cov(0, 0) == doctest::Approx(2 * a * a / 3).epsilon(1e-12));
  CHECK(c.cov(1, 1) == doctest::Approx(2 * a * a / 3).epsilon(1e-12));
  CHECK(c.cov(0, 1) == 0.0);
  CHECK_FALSE(c.rank_deficient);

  Rng rng(4);
  std::normal_distribution<double> n(0.0, 0.005);
  std::vector<Vec2> draws;
  for (int i = 0; i < 10000; ++i) draws.emplace_back(n(rng), n(rng));
  const Mat2 R_true = Mat2::Identity() * 0.25e-4;
  CHECK((mle_covariance_oracle(draws).cov - R_true).norm() / R_true.norm() <= 0.1);

  const std::vector<Vec2> two{{0, 0}, {1, 1}};
  CHECK_THROWS_AS(mle_covariance_oracle(two), InvalidInput);
}

TEST_CASE("confusion oracle") {
  std::vector<LabeledMatch> perfect{{true, MatchObs::Match}, {false, MatchObs::Mismatch}};
  const auto p = mle_confusion_oracle(perfect);
  CHECK(p.tpr() == doctest::Approx(1.0 - kMatchEpsilon));
  CHECK(p.fpr() == doctest::Approx(kMatchEpsilon));

  std::vector<LabeledMatch> s;
  for (int i = 0; i < 100; ++i) s.push_back({true, i < 90 ? MatchObs::Match : MatchObs::Mismatch});
  s.push_back({false, MatchObs::Mismatch});
  CHECK(mle_confusion_oracle(s).tpr() == doctest::Approx(0.9));

  std::vector<LabeledMatch> one_class{{true, MatchObs::Match}};
  CHECK_THROWS_AS(mle_confusion_oracle(one_class), DegenerateOracle);
}

TEST_CASE("dataset CSV round trip") {
  const auto data = generate_dataset(EnvConfig{}, SpiralParams{}, SensorModel{}, 50, 12);
  std::stringstream ss;
  write_dataset_csv(ss, data);
  std::string header;
  std::getline(ss, header);
  CHECK(header == kDatasetCsvHeader);
  ss.seekg(0);
  const auto back = read_dataset_csv(ss, EnvConfig{}, 12);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].peg == data[i].peg);
    CHECK(back[i].hole_type == data[i].hole_type);
    CHECK(back[i].p == data[i].p);
    CHECK(back[i].mu0 == data[i].mu0);
    CHECK(back[i].obs == data[i].obs);
    CHECK(back[i].o_match == data[i].o_match);
    CHECK(back[i].beta == data[i].beta);
    CHECK(back[i].xi0 == data[i].xi0);
    CHECK(nll_loss(LearnedParams{}, back[i], 0.34) == nll_loss(LearnedParams{}, data[i], 0.34));
  }

  std::stringstream bad_header("a,b\n");
  CHECK_THROWS_AS(read_dataset_csv(bad_header, EnvConfig{}, 1), InvalidInput);
  std::stringstream bad_row(std::string(kDatasetCsvHeader) + "\n1,1,0,0,0,0,0,x,1,0\n");
  CHECK_THROWS_AS(read_dataset_csv(bad_row, EnvConfig{}, 1), InvalidInput);
  std::stringstream short_row(std::string(kDatasetCsvHeader) + "\n1,1,0,0\n");
  CHECK_THROWS_AS(read_dataset_csv(short_row, EnvConfig{}, 1), InvalidInput);
  std::stringstream bad_type(std::string(kDatasetCsvHeader) + "\n9,1,0,0,0,0,0,0,1,0\n");
  CHECK_THROWS_AS(read_dataset_csv(bad_type, EnvConfig{}, 1), InvalidInput);
}

TEST_CASE("format_double round trips") {
  for (double x : {0.0, 1.0, -2.5e-7, 0.1, 1.0 / 3.0, 123456.789}) CHECK(std::stod(format_double(x)) == x);
}
