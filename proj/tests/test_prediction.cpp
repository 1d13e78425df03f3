#include <doctest.h>

#include <cmath>

#include "jm/prediction.hpp"
#include "jm/simulate.hpp"

using namespace jm;

namespace {

// posterior made of identical rows: deterministic parameters
PosteriorDraws degenerate_draws(const ModelSpec& spec, const SplineBasis& basis, const JointParams& p, int rows,
                                int n_subjects) {
  PosteriorDraws d;
  d.names = parameter_names(spec, basis.size());
  d.n_chains = 1;
  d.per_chain = rows;
  d.theta.resize(rows, static_cast<int>(d.names.size()));
  d.b = Eigen::MatrixXd::Zero(rows, 2 * n_subjects);
  d.chain = Eigen::VectorXi::Zero(rows);
  d.iteration.setLinSpaced(rows, 0, rows - 1);
  Eigen::VectorXd row(static_cast<int>(d.names.size()));
  int k = 0;
  for (int j = 0; j < p.beta.size(); ++j) row[k++] = p.beta[j];
  row[k++] = p.sigma2;
  row[k++] = p.D(0, 0);
  row[k++] = p.D(0, 1);
  row[k++] = p.D(1, 1);
  for (int j = 0; j < p.omega.size(); ++j) row[k++] = p.omega[j];
  if (spec.assoc_value) row[k++] = p.alpha_value;
  if (spec.assoc_slope) row[k++] = p.alpha_slope;
  if (spec.assoc_area) row[k++] = p.alpha_area;
  for (int j = 0; j < p.gamma.size(); ++j) row[k++] = p.gamma[j];
  row[k++] = p.tau;
  for (int r = 0; r < rows; ++r) d.theta.row(r) = row.transpose();
  return d;
}

Subject history_subject(double entry, double last_time, std::initializer_list<double> values) {
  Subject s;
  s.id = "p";
  s.event.entry_time = entry;
  s.event.time = 100.0;  // still at risk
  double t = entry;
  for (double v : values) {
    LongitudinalRecord r;
    r.time = t;
    r.value = v;
    r.bmiz = 0.0;
    s.records.push_back(r);
    t = entry + (last_time - entry) * (static_cast<double>(s.records.size()) / values.size());
  }
  return s;
}

}  // namespace

TEST_CASE("dynamic_event_probability: constant-hazard closed form") {
  // no associations: pi(dt) = 1 - exp(-dt) with unit hazard
  ModelSpec spec = model_preset("m5");
  spec.assoc_area = false;
  const SplineBasis basis = SplineBasis::clamped(0.0, 10.0, {2.0, 4.0, 6.0});
  JointParams p;
  p.beta = Eigen::VectorXd::Zero(5);
  p.beta[0] = 3.5;
  p.sigma2 = 0.04;
  p.D = 0.01 * Eigen::Matrix2d::Identity();
  p.omega = Eigen::VectorXd::Zero(8);
  p.gamma = Eigen::VectorXd::Zero(basis.size());  // unit baseline
  p.tau = 1.0;
  const PosteriorDraws draws = degenerate_draws(spec, basis, p, 300, 1);

  PredictionRequest req;
  req.subject = history_subject(0.0, 1.0, {3.5, 3.5, 3.5});
  req.landmark = 1.0;
  req.horizons = {1.0};
  req.seed = 4;

  const PredictionResult r = dynamic_event_probability(req, draws, spec, basis);
  CHECK(r.pi_mean == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-9));
  CHECK(r.pi_lo >= 0.0);
  CHECK(r.pi_hi <= 1.0);

  SUBCASE("zero horizon gives exactly zero") {
    req.horizons = {0.0};
    const PredictionResult r0 = dynamic_event_probability(req, draws, spec, basis);
    CHECK(r0.pi_mean == 0.0);
    CHECK(r0.per_draw.maxCoeff() == 0.0);
  }
  SUBCASE("per-draw monotonicity over a horizon grid") {
    req.horizons = {0.0, 0.5, 1.0, 2.0, 4.0};
    const auto curve = prediction_curve(req, draws, spec, basis);
    REQUIRE(curve.size() == 5);
    for (int k = 0; k < curve[0].per_draw.size(); ++k)
      for (std::size_t h = 1; h < curve.size(); ++h) CHECK(curve[h].per_draw[k] >= curve[h - 1].per_draw[k]);
    // closed form pointwise
    for (std::size_t h = 0; h < curve.size(); ++h)
      CHECK(curve[h].pi_mean == doctest::Approx(1.0 - std::exp(-req.horizons[h])).epsilon(1e-9));
  }
  SUBCASE("grid {0} yields the single value zero") {
    req.horizons = {0.0};
    const auto curve = prediction_curve(req, draws, spec, basis);
    REQUIRE(curve.size() == 1);
    CHECK(curve[0].pi_mean == 0.0);
  }
  SUBCASE("beyond the boundary knot is refused") {
    req.horizons = {9.5};
    CHECK_THROWS_AS(dynamic_event_probability(req, draws, spec, basis), DataError);
  }
  SUBCASE("subject not at risk at the landmark is refused") {
    req.subject.event.time = 0.5;
    req.horizons = {1.0};
    CHECK_THROWS_AS(dynamic_event_probability(req, draws, spec, basis), DataError);
  }
}

TEST_CASE("dynamic prediction: positive covariate coefficient orders risks") {
  ModelSpec spec = model_preset("m5");
  spec.assoc_area = false;
  const SplineBasis basis = SplineBasis::clamped(0.0, 10.0, {3.0, 6.0});
  JointParams p;
  p.beta = Eigen::VectorXd::Zero(5);
  p.beta[0] = 3.5;
  p.sigma2 = 0.04;
  p.D = 0.01 * Eigen::Matrix2d::Identity();
  p.omega = Eigen::VectorXd::Zero(8);
  p.omega[6] = 1.992;  // calcium channel blocker
  p.gamma = Eigen::VectorXd::Constant(basis.size(), -2.0);
  p.tau = 1.0;
  const PosteriorDraws draws = degenerate_draws(spec, basis, p, 200, 1);

  PredictionRequest req;
  req.subject = history_subject(0.0, 1.0, {3.5, 3.5});
  req.landmark = 1.0;
  req.horizons = {2.0};
  req.seed = 5;
  const double pi_no_ccb = dynamic_event_probability(req, draws, spec, basis).pi_mean;
  req.subject.ccb = 1;
  const double pi_ccb = dynamic_event_probability(req, draws, spec, basis).pi_mean;
  CHECK(pi_ccb > pi_no_ccb);
}

TEST_CASE("sample_conditional_random_effects: conjugate Gaussian oracle without survival term") {
  // alpha inactive and negligible hazard: the conditional is the closed-form
  // Gaussian posterior of b given y
  ModelSpec spec = model_preset("m5");
  spec.assoc_area = false;
  const SplineBasis basis = SplineBasis::clamped(0.0, 10.0, {});
  JointParams p;
  p.beta = Eigen::VectorXd::Zero(5);
  p.beta[0] = 3.6;
  p.sigma2 = 0.09;
  p.D << 0.25, 0.02, 0.02, 0.04;
  p.omega = Eigen::VectorXd::Zero(8);
  p.gamma = Eigen::VectorXd::Constant(basis.size(), -30.0);  // negligible hazard
  p.tau = 1.0;

  Subject s;
  s.id = "c";
  s.event.entry_time = 0.0;
  s.event.time = 100.0;
  Rng gen(3);
  for (double t : {0.2, 0.8, 1.4, 2.1, 2.9}) {
    LongitudinalRecord r;
    r.time = t;
    r.value = 3.6 + 0.3 - 0.1 * t + gen.normal(0.0, 0.3);
    r.bmiz = 0.0;
    s.records.push_back(r);
  }
  const PredictionContext ctx = build_prediction_context(s, spec, basis, 3.0, {1.0});

  // analytic conditional moments
  Eigen::MatrixXd Z(5, 2);
  Eigen::VectorXd resid(5);
  for (int j = 0; j < 5; ++j) {
    Z(j, 0) = 1.0;
    Z(j, 1) = s.records[j].time;
    resid[j] = s.records[j].value - 3.6;
  }
  const Eigen::Matrix2d M = p.D.inverse() + Z.transpose() * Z / p.sigma2;
  const Eigen::Matrix2d cov_true = M.inverse();
  const Eigen::Vector2d mean_true = cov_true * (Z.transpose() * resid / p.sigma2);

  Rng rng(77);
  const int K = 3000;
  Eigen::MatrixXd samples(K, 2);
  for (int k = 0; k < K; ++k)
    samples.row(k) = sample_conditional_random_effects(ctx.history, spec, p, 40, rng).transpose();
  const Eigen::Vector2d mean_hat = samples.colwise().mean().transpose();
  Eigen::Matrix2d cov_hat = Eigen::Matrix2d::Zero();
  for (int k = 0; k < K; ++k) {
    const Eigen::Vector2d d = samples.row(k).transpose() - mean_hat;
    cov_hat += d * d.transpose();
  }
  cov_hat /= K - 1;

  // MH autocorrelation inflates MC error: allow 5x the iid standard error
  for (int j = 0; j < 2; ++j)
    CHECK(std::abs(mean_hat[j] - mean_true[j]) < 5.0 * std::sqrt(cov_true(j, j) / K) + 0.01);
  CHECK(cov_hat(0, 0) == doctest::Approx(cov_true(0, 0)).epsilon(0.25));
  CHECK(cov_hat(1, 1) == doctest::Approx(cov_true(1, 1)).epsilon(0.25));
}

TEST_CASE("sample_conditional_random_effects: prior recovery with empty history") {
  ModelSpec spec = model_preset("m5");
  spec.assoc_area = false;
  const SplineBasis basis = SplineBasis::clamped(0.0, 10.0, {});
  JointParams p;
  p.beta = Eigen::VectorXd::Zero(5);
  p.sigma2 = 1.0;
  p.D << 0.5, 0.0, 0.0, 0.08;
  p.omega = Eigen::VectorXd::Zero(8);
  p.gamma = Eigen::VectorXd::Constant(basis.size(), -40.0);
  p.tau = 1.0;

  SubjectDesign empty;
  empty.Xl.resize(0, 5);
  empty.Zl.resize(0, 2);
  empty.y.resize(0);
  empty.xs = Eigen::VectorXd::Zero(8);
  empty.entry = 0.0;
  empty.time = 0.0;
  empty.event = 0;
  empty.time_coef = 1;

  Rng rng(9);
  const int K = 4000;
  double m0 = 0.0, m1 = 0.0, v0 = 0.0, v1 = 0.0;
  for (int k = 0; k < K; ++k) {
    const Eigen::Vector2d b = sample_conditional_random_effects(empty, spec, p, 30, rng);
    m0 += b[0];
    m1 += b[1];
    v0 += b[0] * b[0];
    v1 += b[1] * b[1];
  }
  m0 /= K;
  m1 /= K;
  CHECK(std::abs(m0) < 0.08);
  CHECK(std::abs(m1) < 0.03);
  CHECK(v0 / K - m0 * m0 == doctest::Approx(0.5).epsilon(0.2));
  CHECK(v1 / K - m1 * m1 == doctest::Approx(0.08).epsilon(0.2));
}

TEST_CASE("sample_conditional_random_effects: contraction with a long noiseless history") {
  ModelSpec spec = model_preset("m5");
  spec.assoc_area = false;
  const SplineBasis basis = SplineBasis::clamped(0.0, 40.0, {});
  JointParams p;
  p.beta = Eigen::VectorXd::Zero(5);
  p.beta[0] = 3.6;
  p.sigma2 = 1e-4;
  p.D << 0.25, 0.0, 0.0, 0.04;
  p.omega = Eigen::VectorXd::Zero(8);
  p.gamma = Eigen::VectorXd::Constant(basis.size(), -40.0);
  p.tau = 1.0;

  const Eigen::Vector2d b_true(0.4, -0.12);
  Subject s;
  s.id = "n";
  s.event.entry_time = 0.0;
  s.event.time = 1000.0;
  for (int j = 0; j < 60; ++j) {
    LongitudinalRecord r;
    r.time = 0.1 + 0.3 * j;
    r.value = 3.6 + b_true[0] + b_true[1] * r.time;
    r.bmiz = 0.0;
    s.records.push_back(r);
  }
  const PredictionContext ctx = build_prediction_context(s, spec, basis, 30.0, {1.0});
  Rng rng(13);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector2d b = sample_conditional_random_effects(ctx.history, spec, p, 25, rng);
    CHECK(std::abs(b[0] - b_true[0]) < 0.02);
    CHECK(std::abs(b[1] - b_true[1]) < 0.005);
  }
}

TEST_CASE("updating property: appending high biomarker values raises cumulative-association risk") {
  const ModelSpec spec = model_preset("m5");  // area association active
  const SplineBasis basis = SplineBasis::clamped(0.0, 10.0, {3.0, 6.0});
  JointParams p;
  p.beta = Eigen::VectorXd::Zero(5);
  p.beta[0] = 3.6;
  p.sigma2 = 0.04;
  p.D << 0.09, 0.0, 0.0, 0.01;
  p.omega = Eigen::VectorXd::Zero(8);
  p.alpha_area = 1.5;
  p.gamma = Eigen::VectorXd::Constant(basis.size(), -8.0);
  p.tau = 1.0;
  const PosteriorDraws draws = degenerate_draws(spec, basis, p, 400, 1);

  Subject base;
  base.id = "u";
  base.event.entry_time = 0.0;
  base.event.time = 100.0;
  for (double t : {0.3, 0.9, 1.5}) {
    LongitudinalRecord r;
    r.time = t;
    r.value = 3.6;
    r.bmiz = 0.0;
    base.records.push_back(r);
  }
  Subject raised = base;
  for (double t : {1.8, 2.1, 2.4}) {
    LongitudinalRecord r;
    r.time = t;
    r.value = 5.2;  // markedly elevated
    r.bmiz = 0.0;
    raised.records.push_back(r);
  }

  PredictionRequest req;
  req.subject = base;
  req.landmark = 2.5;
  req.horizons = {2.0};
  req.seed = 21;
  const double pi_base = dynamic_event_probability(req, draws, spec, basis).pi_mean;
  req.subject = raised;
  const double pi_raised = dynamic_event_probability(req, draws, spec, basis).pi_mean;
  CHECK(pi_raised > pi_base - 0.01);
  CHECK(pi_raised > pi_base);  // clear-cut separation for this instance
}

TEST_CASE("monte-carlo error shrinks with the draw count") {
  ModelSpec spec = model_preset("m5");
  spec.assoc_area = false;
  const SplineBasis basis = SplineBasis::clamped(0.0, 10.0, {2.0});
  JointParams p;
  p.beta = Eigen::VectorXd::Zero(5);
  p.beta[0] = 3.5;
  p.sigma2 = 0.04;
  p.D = 0.04 * Eigen::Matrix2d::Identity();
  p.omega = Eigen::VectorXd::Zero(8);
  p.gamma = Eigen::VectorXd::Zero(basis.size());
  p.tau = 1.0;

  PredictionRequest req;
  req.subject = history_subject(0.0, 1.0, {3.5, 3.5});
  req.landmark = 1.0;
  req.horizons = {1.0};
  const double target = 1.0 - std::exp(-1.0);

  double err_small = 0.0, err_large = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    req.seed = 100 + rep;
    const PosteriorDraws small = degenerate_draws(spec, basis, p, 50, 1);
    err_small += std::abs(dynamic_event_probability(req, small, spec, basis).pi_mean - target);
    const PosteriorDraws large = degenerate_draws(spec, basis, p, 2000, 1);
    err_large += std::abs(dynamic_event_probability(req, large, spec, basis).pi_mean - target);
  }
  CHECK(err_large <= err_small + 1e-9);
}
