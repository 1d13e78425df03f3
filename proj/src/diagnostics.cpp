#include "jm/diagnostics.hpp"

#include <cmath>

namespace jm {

double split_rhat(const Eigen::MatrixXd& chains) {
  const int len = static_cast<int>(chains.rows());
  const int m_in = static_cast<int>(chains.cols());
  if (m_in < 2) throw NumericError("split_rhat: need at least 2 chains");
  if (len < 4) throw NumericError("split_rhat: chains too short");
  const int half = len / 2;
  const int m = 2 * m_in;
  Eigen::MatrixXd s(half, m);
  for (int c = 0; c < m_in; ++c) {
    s.col(2 * c) = chains.col(c).head(half);
    s.col(2 * c + 1) = chains.col(c).tail(half);
  }
  const int n = half;
  Eigen::VectorXd means(m), vars(m);
  for (int c = 0; c < m; ++c) {
    means[c] = s.col(c).mean();
    vars[c] = (s.col(c).array() - means[c]).square().sum() / (n - 1);
  }
  const double grand = means.mean();
  const double B = n * (means.array() - grand).square().sum() / (m - 1);
  const double W = vars.mean();
  if (W <= 0.0) return 1.0;  // constant chains
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

std::vector<double> gelman_rubin(const PosteriorDraws& draws) {
  if (draws.n_chains < 2) throw NumericError("gelman_rubin: need at least 2 chains");
  std::vector<double> out(draws.names.size());
  Eigen::MatrixXd chains(draws.per_chain, draws.n_chains);
  for (std::size_t j = 0; j < draws.names.size(); ++j) {
    for (int c = 0; c < draws.n_chains; ++c) chains.col(c) = draws.chain_series(c, static_cast<int>(j));
    out[j] = split_rhat(chains);
  }
  return out;
}

double gelman_rubin(const PosteriorDraws& draws, const std::string& name) {
  Eigen::MatrixXd chains(draws.per_chain, draws.n_chains);
  const int col = draws.column(name);
  for (int c = 0; c < draws.n_chains; ++c) chains.col(c) = draws.chain_series(c, col);
  return split_rhat(chains);
}

double effective_sample_size(const Eigen::VectorXd& series) {
  const int n = static_cast<int>(series.size());
  if (n < 4) return static_cast<double>(n);
  const double mean = series.mean();
  const Eigen::ArrayXd centered = series.array() - mean;
  const double c0 = centered.square().sum() / n;
  if (c0 <= 0.0) return 1.0;  // constant chain: no information beyond one draw
  // Geyer initial positive sequence on pairs of autocovariances
  double tail = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (int k = 1; k + 1 < n; k += 2) {
    double rho_a = 0.0, rho_b = 0.0;
    for (int t = 0; t + k < n; ++t) rho_a += centered[t] * centered[t + k];
    for (int t = 0; t + k + 1 < n; ++t) rho_b += centered[t] * centered[t + k + 1];
    rho_a /= n * c0;
    rho_b /= n * c0;
    double pair = rho_a + rho_b;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);  // enforce monotonicity
    prev_pair = pair;
    tail += pair;
    if (k > n / 2) break;
  }
  const double denom = 1.0 + 2.0 * tail;
  return std::min(static_cast<double>(n), std::max(1.0, n / denom));
}

std::vector<double> effective_sample_size(const PosteriorDraws& draws) {
  std::vector<double> out(draws.names.size(), 0.0);
  for (std::size_t j = 0; j < draws.names.size(); ++j) {
    for (int c = 0; c < draws.n_chains; ++c)
      out[j] += effective_sample_size(draws.chain_series(c, static_cast<int>(j)));
  }
  return out;
}

SummaryRow summarize_series(const std::string& name, const Eigen::VectorXd& x) {
  SummaryRow row;
  row.name = name;
  const int n = static_cast<int>(x.size());
  row.mean = x.mean();
  row.sd = n > 1 ? std::sqrt((x.array() - row.mean).square().sum() / (n - 1)) : 0.0;
  std::vector<double> v(x.data(), x.data() + n);
  row.q025 = quantile(v, 0.025);
  row.q975 = quantile(v, 0.975);
  const double p_pos = (x.array() > 0.0).count() / static_cast<double>(n);
  row.tail_prob = 2.0 * std::min(p_pos, 1.0 - p_pos);
  return row;
}

std::vector<SummaryRow> summarize_draws(const PosteriorDraws& draws) {
  std::vector<SummaryRow> rows;
  for (std::size_t j = 0; j < draws.names.size(); ++j) {
    rows.push_back(summarize_series(draws.names[j], draws.theta.col(static_cast<int>(j))));
    if (draws.names[j] == "sigma2")
      rows.push_back(summarize_series("sigma", draws.theta.col(static_cast<int>(j)).cwiseSqrt()));
  }
  return rows;
}

}  // namespace jm
