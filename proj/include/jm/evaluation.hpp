#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jm/cohort.hpp"
#include "jm/mcmc.hpp"
#include "jm/prediction.hpp"

namespace jm {

struct KmCurve {
  std::vector<double> times;     // distinct event times, increasing
  std::vector<double> survival;  // S(t) just after each event time
  std::vector<int> n_risk;
  std::vector<int> n_event;

  double at(double t) const;       // right-continuous S(t)
  double at_left(double t) const;  // left limit S(t-)
};

// Product-limit estimator; optional entry times give the left-truncated
// risk set (#{entry < t <= T}).
KmCurve kaplan_meier(const std::vector<double>& times, const std::vector<int>& events,
                     const std::vector<double>* entry_times = nullptr);

struct WindowLabel {
  bool at_risk = false;   // T > t_L (and under observation by t_L)
  int event_in_window = 0;
  double weight = 0.0;
  bool weight_truncated = false;  // censoring KM hit zero, weight forced to 0
};

// IPCW labels/weights for the window (t_L, t_L + dt]; the censoring-time
// Kaplan-Meier is conditioned on survival past t_L and evaluated with left
// limits at event times.
std::vector<WindowLabel> ipcw_weights(const std::vector<double>& times, const std::vector<int>& events,
                                      const std::vector<double>& entries, double t_L, double dt);

std::vector<WindowLabel> ipcw_weights(const Cohort& cohort, double t_L, double dt);

// Weighted concordance; ties in predictions count 1/2. nullopt when no
// comparable pair exists.
std::optional<double> auc_ipcw(const std::vector<double>& predictions, const std::vector<WindowLabel>& labels);

// IPCW Brier score; nullopt when nobody is at risk at t_L.
std::optional<double> brier_ipcw(const std::vector<double>& predictions, const std::vector<WindowLabel>& labels);

struct WaicResult {
  double waic = 0.0, lppd = 0.0, p_waic = 0.0;
  std::vector<double> pointwise_lppd;
};

struct LpmlResult {
  double lpml = 0.0;
  std::vector<double> log_cpo;
  std::vector<bool> unstable;  // zero likelihood encountered in the harmonic mean
};

struct PointwiseOptions {
  bool marginal = false;  // integrate over fresh b ~ N(0, D) draws instead of the stored b
  int marginal_draws = 50;
  std::uint64_t seed = 0;
};

// n_subjects x n_draws matrix of log p(D_i | theta_k) used by WAIC and LPML.
Eigen::MatrixXd pointwise_log_likelihood(const JointData& data, const PosteriorDraws& draws,
                                         const PointwiseOptions& options = {});

WaicResult waic(const Eigen::MatrixXd& log_lik);
LpmlResult lpml(const Eigen::MatrixXd& log_lik);

WaicResult waic(const JointData& data, const PosteriorDraws& draws, const PointwiseOptions& options = {});
LpmlResult lpml(const JointData& data, const PosteriorDraws& draws, const PointwiseOptions& options = {});

struct CvConfig {
  int folds = 4;
  std::uint64_t seed = 0;
  PriorSpec prior;
  McmcConfig mcmc;            // per-fold sampler settings
  int prediction_draws = 0;   // cap on Monte-Carlo draws per prediction (0 = all)
  int mh_steps = 25;
};

struct MetricCell {
  double t_L = 0.0, dt = 0.0;
  std::vector<double> auc_folds;  // NaN = fold not computable
  std::vector<double> bs_folds;
  std::optional<double> auc_mean, auc_sd, bs_mean, bs_sd;
  int n_at_risk = 0;
  int n_events_in_window = 0;
};

struct MetricReport {
  std::vector<MetricCell> cells;
  std::vector<int> fold_of_subject;
  std::vector<std::string> notes;  // degenerate folds, refused predictions
};

// Stratified k-fold cross-validation: fit on training folds, predict the
// held-out subjects, score with IPCW AUC and Brier per (t_L, dt).
MetricReport cross_validate(const Cohort& cohort, const ModelSpec& spec, const std::vector<double>& landmarks,
                            const std::vector<double>& horizons, const CvConfig& config);

std::vector<int> stratified_folds(const Cohort& cohort, int folds, std::uint64_t seed);

}  // namespace jm
