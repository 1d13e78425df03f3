#include <doctest.h>

#include <cmath>

#include "jm/diagnostics.hpp"
#include "jm/mcmc.hpp"
#include "jm/rng.hpp"
#include "jm/simulate.hpp"

using namespace jm;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// tiny cohort: one subject, one-or-two measurements, no covariates set
Cohort one_subject_cohort(int n_records, double entry, double time, int event) {
  Cohort c;
  Subject s;
  s.id = "only";
  s.event.entry_time = entry;
  s.event.time = time;
  s.event.event = event;
  for (int j = 0; j < n_records; ++j) {
    LongitudinalRecord r;
    r.time = entry + j * 0.5;
    r.value = 3.5 + 0.1 * j;
    r.bmiz = 0.0;
    s.records.push_back(r);
  }
  c.subjects.push_back(s);
  return c;
}

}  // namespace

TEST_CASE("joint_log_posterior: hand assembly on a one-subject flat-hazard instance") {
  // alpha inactive, gamma = 0 (unit hazard), beta = (c, 0...), sigma fixed
  ModelSpec spec = model_preset("m5");
  spec.assoc_area = false;
  const Cohort cohort = one_subject_cohort(1, 0.0, 2.0, 1);
  const SplineBasis basis = SplineBasis::clamped(0.0, 2.0, {});
  const JointData data = build_joint_data(cohort, spec, basis, 15);
  PriorSpec prior;

  JointParams p;
  p.beta = Eigen::VectorXd::Zero(5);
  p.beta[0] = 3.5;
  p.sigma2 = 0.04;
  p.D = Eigen::Matrix2d::Identity();
  p.omega = Eigen::VectorXd::Zero(8);
  p.gamma = Eigen::VectorXd::Zero(basis.size());
  p.tau = 2.0;
  const Eigen::MatrixXd b = Eigen::MatrixXd::Zero(1, 2);

  // hand-computed pieces
  const double resid = 3.5 - 3.5;
  const double ll_long = -0.5 * (kLog2Pi + std::log(p.sigma2) + resid * resid / p.sigma2);
  const double ll_surv = 1.0 * 0.0 - 2.0;       // delta log(1) - Lambda(0,2)
  const double ll_re = -kLog2Pi;                // bivariate standard normal at 0
  double lp_prior = 0.0;
  for (int k = 0; k < 5; ++k) lp_prior += -0.5 * (kLog2Pi + 2.0 * std::log(10.0));
  for (int k = 0; k < 8; ++k) lp_prior += -0.5 * (kLog2Pi + 2.0 * std::log(10.0));
  // inverse-gamma(0.01, 0.01) at sigma2
  lp_prior += 0.01 * std::log(0.01) - std::lgamma(0.01) - 1.01 * std::log(p.sigma2) - 0.01 / p.sigma2;
  // inverse-Wishart(3, I) at D = I (d = 2)
  const double log_gamma2 = 0.5 * std::log(M_PI) + std::lgamma(1.5) + std::lgamma(1.0);
  lp_prior += 0.0 - 3.0 * std::log(2.0) - log_gamma2 - 0.5 * (3.0 + 3.0) * 0.0 - 0.5 * 2.0;
  // gamma prior on tau and N(0, (tau K)^-1) at gamma = 0
  lp_prior += 1.0 * std::log(0.005) - std::lgamma(1.0) + 0.0 - 0.005 * p.tau;
  const Eigen::MatrixXd K = spline_penalty_matrix(basis.size());
  double logdet_K = 0.0;
  {
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    for (int i = 0; i < basis.size(); ++i) logdet_K += 2.0 * std::log(llt.matrixL()(i, i));
  }
  lp_prior += 0.5 * (basis.size() * (std::log(p.tau) - kLog2Pi) + logdet_K);

  const double expected = ll_long + ll_surv + ll_re + lp_prior;
  CHECK(joint_log_posterior(data, prior, p, b) == doctest::Approx(expected).epsilon(1e-10));

  SUBCASE("random-effect density term: -log(2pi) per subject at b = 0, D = I") {
    JointParams p2 = p;
    Eigen::MatrixXd b1 = b;
    b1(0, 0) = 0.0;
    const double base = joint_log_posterior(data, prior, p2, b1);
    b1(0, 0) = 1.0;  // phi(b) drops by b^2/2 and the longitudinal residual changes
    const double moved = joint_log_posterior(data, prior, p2, b1);
    const double d_re = -0.5;                       // RE density change
    const double d_long = -0.5 * 1.0 / p.sigma2;    // residual now -1
    CHECK(moved - base == doctest::Approx(d_re + d_long).epsilon(1e-10));
  }
  SUBCASE("invalid parameter space returns -infinity") {
    JointParams bad = p;
    bad.sigma2 = -1.0;
    CHECK(joint_log_posterior(data, prior, bad, b) == -std::numeric_limits<double>::infinity());
    JointParams bad2 = p;
    bad2.D << 1.0, 2.0, 2.0, 1.0;  // not positive definite
    CHECK(joint_log_posterior(data, prior, bad2, b) == -std::numeric_limits<double>::infinity());
  }
}

TEST_CASE("gibbs_sigma2 matches the analytic inverse-gamma posterior") {
  // fixed data: n = 40 residuals with known sum of squares
  const double ssr = 3.7;
  const int n = 40;
  const double a_n = 0.01 + 0.5 * n;
  const double b_n = 0.01 + 0.5 * ssr;
  const double true_mean = b_n / (a_n - 1.0);
  const double true_var = b_n * b_n / ((a_n - 1.0) * (a_n - 1.0) * (a_n - 2.0));

  Rng rng(404);
  const int m = 10000;
  double sum = 0.0, sum_sq = 0.0;
  for (int k = 0; k < m; ++k) {
    const double draw = gibbs_sigma2(0.01, 0.01, ssr, n, rng);
    sum += draw;
    sum_sq += draw * draw;
  }
  const double mean = sum / m;
  const double var = sum_sq / m - mean * mean;
  const double mc_se_mean = std::sqrt(true_var / m);
  CHECK(std::abs(mean - true_mean) < 3.0 * mc_se_mean);
  CHECK(var == doctest::Approx(true_var).epsilon(0.15));
}

TEST_CASE("gibbs_random_effects_cov matches the analytic inverse-Wishart posterior") {
  Rng data_rng(11);
  const int n = 30;
  Eigen::MatrixXd b(n, 2);
  for (int i = 0; i < n; ++i) {
    b(i, 0) = data_rng.normal(0.0, 0.4);
    b(i, 1) = data_rng.normal(0.0, 0.1);
  }
  const Eigen::Matrix2d S_n = Eigen::Matrix2d::Identity() + b.transpose() * b;
  const double nu_n = 3.0 + n;
  const Eigen::Matrix2d true_mean = S_n / (nu_n - 3.0);  // nu - d - 1

  Rng rng(505);
  const int m = 10000;
  Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
  double acc_00_sq = 0.0;
  for (int k = 0; k < m; ++k) {
    const Eigen::Matrix2d draw = gibbs_random_effects_cov(3.0, Eigen::Matrix2d::Identity(), b, rng);
    acc += draw;
    acc_00_sq += draw(0, 0) * draw(0, 0);
  }
  const Eigen::Matrix2d mean = acc / m;
  const double var_00 = acc_00_sq / m - mean(0, 0) * mean(0, 0);
  const double se_00 = std::sqrt(var_00 / m);
  CHECK(std::abs(mean(0, 0) - true_mean(0, 0)) < 3.0 * se_00);
  CHECK(mean(0, 1) == doctest::Approx(true_mean(0, 1)).epsilon(0.1));
  CHECK(mean(1, 1) == doctest::Approx(true_mean(1, 1)).epsilon(0.05));
}

TEST_CASE("gibbs_tau matches the analytic gamma posterior mean") {
  const Eigen::MatrixXd K = spline_penalty_matrix(7);
  Eigen::VectorXd gamma(7);
  gamma << 0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.0;
  const double quad = gamma.dot(K * gamma);
  const double a_n = 1.0 + 3.5;
  const double b_n = 0.005 + 0.5 * quad;
  Rng rng(606);
  const int m = 20000;
  double sum = 0.0;
  for (int k = 0; k < m; ++k) sum += gibbs_tau(1.0, 0.005, gamma, K, rng);
  const double true_mean = a_n / b_n;
  const double true_sd = std::sqrt(a_n) / b_n;
  CHECK(std::abs(sum / m - true_mean) < 3.0 * true_sd / std::sqrt(static_cast<double>(m)));
}

TEST_CASE("split_rhat: hand-computed two-chain example") {
  // chains of length 4 -> split into 4 half-chains of length 2
  Eigen::MatrixXd chains(4, 2);
  chains.col(0) << 1.0, 2.0, 3.0, 4.0;
  chains.col(1) << 1.5, 2.5, 2.0, 3.0;
  // split halves: {1,2}, {3,4}, {1.5,2.5}, {2,3}
  const double means[4] = {1.5, 3.5, 2.0, 2.5};
  const double vars[4] = {0.5, 0.5, 0.5, 0.5};
  const double grand = (1.5 + 3.5 + 2.0 + 2.5) / 4.0;
  double B = 0.0;
  for (double mu : means) B += (mu - grand) * (mu - grand);
  B *= 2.0 / 3.0;  // n/(m-1) with n = 2, m = 4
  const double W = 0.5;
  const double var_plus = 0.5 * W + B / 2.0;
  const double expected = std::sqrt(var_plus / W);
  CHECK(split_rhat(chains) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("split_rhat: convergent vs divergent chains") {
  Rng rng(77);
  const int len = 500;
  Eigen::MatrixXd good(len, 4);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < len; ++i) good(i, c) = rng.normal(0.0, 1.0);
  CHECK(split_rhat(good) < 1.05);

  Eigen::MatrixXd bad(len, 2);
  for (int i = 0; i < len; ++i) {
    bad(i, 0) = rng.normal(0.0, 1.0);
    bad(i, 1) = rng.normal(10.0, 1.0);
  }
  CHECK(split_rhat(bad) > 1.1);
}

TEST_CASE("effective_sample_size: iid, constant, and AR(1) series") {
  Rng rng(88);
  const int n = 4000;
  Eigen::VectorXd iid(n);
  for (int i = 0; i < n; ++i) iid[i] = rng.normal();
  CHECK(effective_sample_size(iid) > 0.9 * n);
  CHECK(effective_sample_size(iid) <= n);

  Eigen::VectorXd constant = Eigen::VectorXd::Constant(n, 3.14);
  CHECK(effective_sample_size(constant) == doctest::Approx(1.0));

  // AR(1) with rho = 0.5: ESS ~= n (1-rho)/(1+rho) = n/3
  Eigen::VectorXd ar(n);
  ar[0] = rng.normal();
  for (int i = 1; i < n; ++i) ar[i] = 0.5 * ar[i - 1] + rng.normal() * std::sqrt(1.0 - 0.25);
  const double ess = effective_sample_size(ar);
  CHECK(ess > (n / 3.0) * 0.85);
  CHECK(ess < (n / 3.0) * 1.15);
}

TEST_CASE("run_mcmc: reproducibility and draw validity on a small fit") {
  SimTruth truth;
  truth.mean_visits = 5;
  truth.target_event_fraction = 0.25;
  const SimCohort sim = simulate_cohort(truth, 40, 99);

  McmcConfig cfg;
  cfg.n_chains = 2;
  cfg.n_iterations = 600;
  cfg.thin = 2;
  cfg.seed = 12345;
  cfg.threads = 1;
  PriorSpec prior;
  const ModelSpec spec = model_preset("m5");

  const PosteriorDraws a = run_mcmc(sim.cohort, spec, prior, cfg);
  const PosteriorDraws b = run_mcmc(sim.cohort, spec, prior, cfg);
  CHECK(a.theta == b.theta);  // bit-identical
  CHECK(a.b == b.b);

  // parameter-space constraints hold for every retained draw
  const int c_s2 = a.column("sigma2");
  const int c_d11 = a.column("D.1.1");
  const int c_d12 = a.column("D.1.2");
  const int c_d22 = a.column("D.2.2");
  const int c_tau = a.column("tau");
  for (int r = 0; r < a.theta.rows(); ++r) {
    CHECK(a.theta(r, c_s2) > 0.0);
    CHECK(a.theta(r, c_tau) > 0.0);
    const double det = a.theta(r, c_d11) * a.theta(r, c_d22) - a.theta(r, c_d12) * a.theta(r, c_d12);
    CHECK(det > 0.0);
    CHECK(a.theta(r, c_d11) > 0.0);
  }

  // expected naming layout
  CHECK(a.names[0] == "beta.intercept");
  CHECK_NOTHROW(a.column("alpha.area"));
  CHECK_NOTHROW(a.column("D.1.2"));
  CHECK(a.b_names[0] == "b.1.0");

  // thread-count does not change the draws
  McmcConfig cfg2 = cfg;
  cfg2.threads = 2;
  const PosteriorDraws c = run_mcmc(sim.cohort, spec, prior, cfg2);
  CHECK(a.theta == c.theta);
}

TEST_CASE("run_mcmc: prior-only recovery of beta/omega/alpha at reduced scale") {
  SimTruth truth;
  truth.mean_visits = 4;
  const SimCohort sim = simulate_cohort(truth, 12, 7);

  McmcConfig cfg;
  cfg.n_chains = 2;
  cfg.n_iterations = 4000;
  cfg.thin = 2;
  cfg.seed = 999;
  cfg.prior_only = true;
  cfg.threads = 1;
  PriorSpec prior;
  const PosteriorDraws draws = run_mcmc(sim.cohort, model_preset("m5"), prior, cfg);

  for (const std::string name : {"beta.intercept", "omega.ccb", "alpha.area"}) {
    const Eigen::VectorXd series = draws.series(name);
    const double mean = series.mean();
    const double sd = std::sqrt((series.array() - mean).square().sum() / (series.size() - 1));
    // loose 3-sigma-style bounds with a conservative effective sample size
    CHECK(std::abs(mean) < 3.0 * 10.0 / std::sqrt(50.0));
    CHECK(sd == doctest::Approx(10.0).epsilon(0.25));
  }
}

TEST_CASE("mcmc config validation") {
  SimTruth truth;
  truth.mean_visits = 4;
  const SimCohort sim = simulate_cohort(truth, 8, 3);
  PriorSpec prior;
  McmcConfig cfg;
  cfg.n_iterations = 100;
  cfg.burnin_fraction = 1.5;
  CHECK_THROWS_AS(run_mcmc(sim.cohort, model_preset("m5"), prior, cfg), ConfigError);
  cfg.burnin_fraction = 0.5;
  cfg.thin = 0;
  CHECK_THROWS_AS(run_mcmc(sim.cohort, model_preset("m5"), prior, cfg), ConfigError);
}
