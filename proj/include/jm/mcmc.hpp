#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jm/cohort.hpp"
#include "jm/likelihood.hpp"
#include "jm/model_spec.hpp"

namespace jm {

struct PriorSpec {
  double beta_sd = 10.0;
  double omega_sd = 10.0;
  double alpha_sd = 10.0;
  double sigma2_a = 0.01, sigma2_b = 0.01;  // inverse-gamma on sigma^2
  double wishart_df = 3.0;                  // nu for D ~ inverse-Wishart(nu, S)
  Eigen::Matrix2d wishart_scale = Eigen::Matrix2d::Identity();
  double tau_a = 1.0, tau_b = 0.005;        // gamma on the smoothing precision
};

struct McmcConfig {
  int n_chains = 4;
  int n_iterations = 90000;
  double burnin_fraction = 0.5;
  int thin = 10;
  std::uint64_t seed = 1;
  int adaptation_interval = 50;  // proposal-cholesky refresh cadence
  int quad_nodes = 15;           // Gauss-Legendre nodes per quadrature segment
  bool prior_only = false;       // sample the prior stack (likelihood off)
  int threads = 0;               // 0 = one thread per chain
  bool merge_survival_blocks = true;  // single (gamma, omega, alpha) block
  bool warm_start = true;             // LME + penalized-Newton initial values
  double init_jitter = 1.0;           // scale of overdispersed chain starts

  int burnin() const { return static_cast<int>(burnin_fraction * n_iterations); }
};

struct ChainDiagnostics {
  std::map<std::string, double> acceptance_rates;
};

struct PosteriorDraws {
  std::vector<std::string> names;  // theta columns
  Eigen::MatrixXd theta;           // (n_chains * per_chain) x P, chains stacked
  std::vector<std::string> b_names;
  Eigen::MatrixXd b;               // same rows, 2 * n_subjects columns
  Eigen::VectorXi chain;           // chain id per row
  Eigen::VectorXi iteration;       // post-burn-in iteration per row
  std::vector<ChainDiagnostics> chain_info;
  int n_chains = 0;
  int per_chain = 0;

  int column(const std::string& name) const;
  Eigen::VectorXd series(const std::string& name) const { return theta.col(column(name)); }
  // one chain's draws of one column
  Eigen::VectorXd chain_series(int c, int col) const { return theta.col(col).segment(c * per_chain, per_chain); }
  JointParams params_at(int row, const ModelSpec& spec) const;
  Eigen::Vector2d b_at(int row, int subject_index) const;
};

std::vector<std::string> parameter_names(const ModelSpec& spec, int n_basis);

// Full joint log posterior: likelihood + random-effect densities + priors.
// Returns -infinity for parameter values outside the valid space.
double joint_log_posterior(const JointData& data, const PriorSpec& prior, const JointParams& params,
                           const Eigen::MatrixXd& b, bool prior_only = false);

PosteriorDraws run_mcmc(const Cohort& cohort, const ModelSpec& spec, const PriorSpec& prior, const McmcConfig& config);

// As above, with the spline basis and design supplied by the caller
// (cross-validation reuses the training basis for prediction).
PosteriorDraws run_mcmc(const JointData& data, const PriorSpec& prior, const McmcConfig& config);

// Conjugate updates, exposed for direct verification.
double gibbs_sigma2(double prior_a, double prior_b, double sum_sq_resid, int n_obs, class Rng& rng);
Eigen::Matrix2d gibbs_random_effects_cov(double prior_df, const Eigen::Matrix2d& prior_scale,
                                         const Eigen::MatrixXd& b, class Rng& rng);
double gibbs_tau(double prior_a, double prior_b, const Eigen::VectorXd& gamma, const Eigen::MatrixXd& penalty,
                 class Rng& rng);

// Default spline basis for a cohort: interior knots at event-time quantiles,
// boundary knots at 0 and the maximum observed time.
SplineBasis default_basis(const Cohort& cohort, const ModelSpec& spec);

}  // namespace jm
