#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace oracle {

std::vector<KmStep> km_curve(const std::vector<double>& times, const std::vector<int>& events,
                             const std::vector<double>* entries) {
  std::set<double> event_times;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (events[i] == 1) event_times.insert(times[i]);
  std::vector<KmStep> curve;
  double s = 1.0;
  for (double u : event_times) {
    int at_risk = 0, d = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      const bool in = entries ? (*entries)[i] < u : true;
      if (in && times[i] >= u) ++at_risk;
      if (events[i] == 1 && times[i] == u) ++d;
    }
    if (at_risk == 0) continue;
    s *= 1.0 - static_cast<double>(d) / at_risk;
    curve.push_back({u, s});
  }
  return curve;
}

double km_value(const std::vector<KmStep>& curve, double t) {
  double s = 1.0;
  for (const auto& step : curve) {
    if (step.time <= t) s = step.survival;
  }
  return s;
}

double km_value_left(const std::vector<KmStep>& curve, double t) {
  double s = 1.0;
  for (const auto& step : curve) {
    if (step.time < t) s = step.survival;
  }
  return s;
}

std::vector<double> ipcw_weight(const std::vector<double>& times, const std::vector<int>& events, double t_L,
                                double dt) {
  // censoring KM: flip the indicator
  std::vector<int> cens(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) cens[i] = 1 - events[i];
  const auto K = km_curve(times, cens);
  const double K_tL = km_value(K, t_L);
  const double horizon = t_L + dt;
  std::vector<double> w(times.size(), 0.0);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] > horizon) {
      const double k = km_value(K, horizon) / K_tL;
      w[i] = k > 0.0 ? 1.0 / k : 0.0;
    } else if (t_L < times[i] && times[i] < horizon && events[i] == 1) {
      const double k = km_value_left(K, times[i]) / K_tL;
      w[i] = k > 0.0 ? 1.0 / k : 0.0;
    }
  }
  return w;
}

namespace {
int event_in_window(double time, int event, double t_L, double dt) {
  return (time > t_L && time <= t_L + dt && event == 1) ? 1 : 0;
}
}  // namespace

std::optional<double> auc_ipcw(const std::vector<double>& pi, const std::vector<double>& times,
                               const std::vector<int>& events, double t_L, double dt) {
  const auto w = ipcw_weight(times, events, t_L, dt);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const int Ii = event_in_window(times[i], events[i], t_L, dt);
    for (std::size_t j = 0; j < times.size(); ++j) {
      const int Ij = event_in_window(times[j], events[j], t_L, dt);
      const double contrib = Ii * (1 - Ij) * w[i] * w[j];
      if (contrib <= 0.0) continue;
      den += contrib;
      if (pi[i] > pi[j])
        num += contrib;
      else if (pi[i] == pi[j])
        num += 0.5 * contrib;
    }
  }
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

std::optional<double> brier_ipcw(const std::vector<double>& pi, const std::vector<double>& times,
                                 const std::vector<int>& events, double t_L, double dt) {
  const auto w = ipcw_weight(times, events, t_L, dt);
  const std::size_t n = times.size();
  int surv = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (times[i] > t_L) ++surv;
  const double s_hat = static_cast<double>(surv) / n;
  if (s_hat <= 0.0) return std::nullopt;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] <= 0.0) continue;
    const double d = event_in_window(times[i], events[i], t_L, dt) - pi[i];
    acc += w[i] * d * d;
  }
  return acc / (n * s_hat);
}

WaicValue waic(const Eigen::MatrixXd& log_lik) {
  const int n = static_cast<int>(log_lik.rows());
  const int K = static_cast<int>(log_lik.cols());
  double lppd = 0.0, p_waic = 0.0;
  for (int i = 0; i < n; ++i) {
    // lppd_i = log( (1/K) sum_k exp(l_ik) ), computed directly
    double max_l = log_lik.row(i).maxCoeff();
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += std::exp(log_lik(i, k) - max_l);
    lppd += max_l + std::log(s / K);
    double mean = 0.0;
    for (int k = 0; k < K; ++k) mean += log_lik(i, k);
    mean /= K;
    double var = 0.0;
    for (int k = 0; k < K; ++k) var += (log_lik(i, k) - mean) * (log_lik(i, k) - mean);
    var /= (K - 1);
    p_waic += var;
  }
  return {-2.0 * (lppd - p_waic), lppd, p_waic};
}

LpmlValue lpml(const Eigen::MatrixXd& log_lik) {
  const int n = static_cast<int>(log_lik.rows());
  const int K = static_cast<int>(log_lik.cols());
  LpmlValue out{0.0, {}};
  for (int i = 0; i < n; ++i) {
    // CPO_i = 1 / ( (1/K) sum_k 1/p_ik )
    double max_neg = -log_lik.row(i).minCoeff();
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += std::exp(-log_lik(i, k) - max_neg);
    const double log_cpo = -(max_neg + std::log(s / K));
    out.log_cpo.push_back(log_cpo);
    out.lpml += log_cpo;
  }
  return out;
}

double ks_statistic_exponential(std::vector<double> samples, double rate) {
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double F = 1.0 - std::exp(-rate * samples[i]);
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(std::abs(F - lo), std::abs(hi - F)));
  }
  return d;
}

double ks_pvalue(std::size_t n, double d) {
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::min(1.0, std::max(0.0, p));
}

}  // namespace oracle
