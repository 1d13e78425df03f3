#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace jm {

// One cluster of a Gaussian linear mixed model with random intercept+slope:
// y = X beta + Z u + eps, u ~ N(0, D), eps ~ N(0, sigma^2 I).
struct LmmCluster {
  Eigen::MatrixXd X;  // n_i x p
  Eigen::MatrixXd Z;  // n_i x 2
  Eigen::VectorXd y;  // n_i
};

struct LmmOptions {
  std::vector<std::string> column_names;  // for identifiability diagnostics
  double sigma_floor = 1e-8;
  std::optional<double> fixed_sigma;      // skip estimating sigma when set
  int max_iterations = 4000;
};

struct LmmFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_cov;   // (sum_i X' V^-1 X)^-1, model-based
  double sigma = 1.0;
  Eigen::Matrix2d D;          // random-effect covariance
  Eigen::MatrixXd blups;      // n_clusters x 2 empirical Bayes estimates
  double loglik = 0.0;

  Eigen::VectorXd beta_se() const { return beta_cov.diagonal().cwiseSqrt(); }
};

// Maximizes the marginal Gaussian likelihood over variance components with
// profiled fixed effects; returns ML estimates and BLUPs.
LmmFit fit_lmm(const std::vector<LmmCluster>& clusters, const LmmOptions& options = {});

}  // namespace jm
