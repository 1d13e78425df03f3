#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "jm/mcmc.hpp"

namespace jm {

// Split-Rhat from a set of equal-length chains (each column = one chain).
double split_rhat(const Eigen::MatrixXd& chains);

// Gelman-Rubin split-Rhat for every theta column of the draws.
std::vector<double> gelman_rubin(const PosteriorDraws& draws);
double gelman_rubin(const PosteriorDraws& draws, const std::string& name);

// Autocorrelation ESS with Geyer initial-positive-sequence truncation,
// summed over chains.
double effective_sample_size(const Eigen::VectorXd& series);
std::vector<double> effective_sample_size(const PosteriorDraws& draws);

struct SummaryRow {
  std::string name;
  double mean = 0.0, sd = 0.0, q025 = 0.0, q975 = 0.0;
  double tail_prob = 0.0;  // 2 min(P(x>0), P(x<0)), Bayesian two-sided analogue
};

SummaryRow summarize_series(const std::string& name, const Eigen::VectorXd& x);
// Rows for every parameter; a derived "sigma" row follows "sigma2".
std::vector<SummaryRow> summarize_draws(const PosteriorDraws& draws);

}  // namespace jm
