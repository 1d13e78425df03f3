#include "jm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "jm/csv.hpp"
#include "jm/rng.hpp"

namespace jm {

double KmCurve::at(double t) const {
  double s = 1.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] <= t)
      s = survival[k];
    else
      break;
  }
  return s;
}

double KmCurve::at_left(double t) const {
  double s = 1.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t)
      s = survival[k];
    else
      break;
  }
  return s;
}

KmCurve kaplan_meier(const std::vector<double>& times, const std::vector<int>& events,
                     const std::vector<double>* entry_times) {
  if (times.empty()) throw DataError("kaplan_meier: empty input");
  if (times.size() != events.size()) throw DataError("kaplan_meier: times/events length mismatch");
  if (entry_times && entry_times->size() != times.size())
    throw DataError("kaplan_meier: entry times length mismatch");
  std::set<double> distinct;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0) throw DataError("kaplan_meier: negative time");
    if (events[i] == 1) distinct.insert(times[i]);
  }
  KmCurve curve;
  double s = 1.0;
  for (double t : distinct) {
    int risk = 0, evt = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      const bool entered = !entry_times || (*entry_times)[i] < t;
      if (entered && times[i] >= t) ++risk;
      if (times[i] == t && events[i] == 1) ++evt;
    }
    if (risk == 0) continue;
    s *= 1.0 - static_cast<double>(evt) / risk;
    curve.times.push_back(t);
    curve.survival.push_back(s);
    curve.n_risk.push_back(risk);
    curve.n_event.push_back(evt);
  }
  return curve;
}

std::vector<WindowLabel> ipcw_weights(const std::vector<double>& times, const std::vector<int>& events,
                                      const std::vector<double>& entries, double t_L, double dt) {
  if (t_L < 0.0 || dt < 0.0) throw DataError("ipcw_weights: t_L and dt must be >= 0");
  const std::size_t n = times.size();
  if (events.size() != n || entries.size() != n) throw DataError("ipcw_weights: input length mismatch");

  // censoring-time Kaplan-Meier: censorings are the "events"
  std::vector<int> cens(n);
  for (std::size_t i = 0; i < n; ++i) cens[i] = 1 - events[i];
  const KmCurve khat = kaplan_meier(times, cens);

  const double horizon = t_L + dt;
  const double k_tL = khat.at(t_L);
  std::vector<WindowLabel> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    WindowLabel& lab = labels[i];
    // subjects not yet under observation at t_L are outside the landmark universe
    if (entries[i] > t_L) continue;
    lab.at_risk = times[i] > t_L;
    if (!lab.at_risk) continue;
    lab.event_in_window = (times[i] > t_L && times[i] <= horizon && events[i] == 1) ? 1 : 0;
    double w = 0.0;
    if (times[i] > horizon) {
      const double k = khat.at(horizon) / k_tL;
      if (k > 0.0)
        w = 1.0 / k;
      else
        lab.weight_truncated = true;
    } else if (times[i] > t_L && times[i] < horizon && events[i] == 1) {
      const double k = khat.at_left(times[i]) / k_tL;
      if (k > 0.0)
        w = 1.0 / k;
      else
        lab.weight_truncated = true;
    }
    lab.weight = w;
  }
  return labels;
}

std::vector<WindowLabel> ipcw_weights(const Cohort& cohort, double t_L, double dt) {
  std::vector<double> times, entries;
  std::vector<int> events;
  for (const auto& s : cohort.subjects) {
    times.push_back(s.event.time);
    events.push_back(s.event.event);
    entries.push_back(s.event.entry_time);
  }
  return ipcw_weights(times, events, entries, t_L, dt);
}

std::optional<double> auc_ipcw(const std::vector<double>& predictions, const std::vector<WindowLabel>& labels) {
  const std::size_t n = labels.size();
  if (predictions.size() != n) throw DataError("auc_ipcw: predictions length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i].weight <= 0.0 || labels[i].event_in_window != 1) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (labels[j].weight <= 0.0 || labels[j].event_in_window != 0) continue;
      const double wij = labels[i].weight * labels[j].weight;
      den += wij;
      if (predictions[i] > predictions[j])
        num += wij;
      else if (predictions[i] == predictions[j])
        num += 0.5 * wij;  // ties split evenly
    }
  }
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

std::optional<double> brier_ipcw(const std::vector<double>& predictions, const std::vector<WindowLabel>& labels) {
  const std::size_t n = labels.size();
  if (predictions.size() != n) throw DataError("brier_ipcw: predictions length mismatch");
  int at_risk = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i].at_risk) ++at_risk;
    if (labels[i].weight <= 0.0) continue;
    const double d = labels[i].event_in_window - predictions[i];
    acc += labels[i].weight * d * d;
  }
  const double s_hat = static_cast<double>(at_risk) / n;
  if (!(s_hat > 0.0)) return std::nullopt;
  return acc / (n * s_hat);
}

Eigen::MatrixXd pointwise_log_likelihood(const JointData& data, const PosteriorDraws& draws,
                                         const PointwiseOptions& options) {
  const int n = data.n_subjects();
  const int K = static_cast<int>(draws.theta.rows());
  if (K < 2) throw DataError("pointwise_log_likelihood: need at least 2 draws");
  Eigen::MatrixXd out(n, K);
  Rng rng = Rng::substream(options.seed, 0x77616963);
  for (int k = 0; k < K; ++k) {
    const JointParams p = draws.params_at(k, data.spec);
    for (int i = 0; i < n; ++i) {
      if (!options.marginal) {
        out(i, k) = subject_conditional_loglik(data.subjects[i], data.spec, p, draws.b_at(k, i));
      } else {
        std::vector<double> lls(options.marginal_draws);
        const Eigen::Matrix2d L = Eigen::LLT<Eigen::Matrix2d>(p.D).matrixL();
        for (int m = 0; m < options.marginal_draws; ++m) {
          const Eigen::Vector2d b = L * Eigen::Vector2d(rng.normal(), rng.normal());
          lls[m] = subject_conditional_loglik(data.subjects[i], data.spec, p, b);
        }
        out(i, k) = log_mean_exp(lls);
      }
    }
  }
  return out;
}

WaicResult waic(const Eigen::MatrixXd& log_lik) {
  const int n = static_cast<int>(log_lik.rows());
  const int K = static_cast<int>(log_lik.cols());
  if (K < 2) throw DataError("waic: need at least 2 draws");
  WaicResult r;
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(log_lik.row(i).data(), log_lik.row(i).data() + K);
    const double lppd_i = log_mean_exp(row);
    const double mean_i = log_lik.row(i).mean();
    const double var_i = (log_lik.row(i).array() - mean_i).square().sum() / (K - 1);
    r.lppd += lppd_i;
    r.p_waic += var_i;
    r.pointwise_lppd.push_back(lppd_i);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

LpmlResult lpml(const Eigen::MatrixXd& log_lik) {
  const int n = static_cast<int>(log_lik.rows());
  const int K = static_cast<int>(log_lik.cols());
  if (K < 2) throw DataError("lpml: need at least 2 draws");
  LpmlResult r;
  for (int i = 0; i < n; ++i) {
    std::vector<double> neg(K);
    bool unstable = false;
    for (int k = 0; k < K; ++k) {
      if (!std::isfinite(log_lik(i, k))) unstable = true;
      neg[k] = -log_lik(i, k);
    }
    const double log_cpo_i = -log_mean_exp(neg);
    r.log_cpo.push_back(log_cpo_i);
    r.unstable.push_back(unstable || !std::isfinite(log_cpo_i));
    r.lpml += log_cpo_i;
  }
  return r;
}

WaicResult waic(const JointData& data, const PosteriorDraws& draws, const PointwiseOptions& options) {
  return waic(pointwise_log_likelihood(data, draws, options));
}

LpmlResult lpml(const JointData& data, const PosteriorDraws& draws, const PointwiseOptions& options) {
  return lpml(pointwise_log_likelihood(data, draws, options));
}

std::vector<int> stratified_folds(const Cohort& cohort, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross_validate: need at least 2 folds");
  std::vector<int> assignment(cohort.subjects.size(), -1);
  Rng rng = Rng::substream(seed, 0x666f6c64);
  for (int stratum = 0; stratum <= 1; ++stratum) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cohort.subjects.size(); ++i)
      if (cohort.subjects[i].event.event == stratum) idx.push_back(i);
    // Fisher-Yates with the project RNG for reproducibility
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform() * i);
      std::swap(idx[i - 1], idx[j]);
    }
    for (std::size_t r = 0; r < idx.size(); ++r) assignment[idx[r]] = static_cast<int>(r % folds);
  }
  return assignment;
}

MetricReport cross_validate(const Cohort& cohort, const ModelSpec& spec, const std::vector<double>& landmarks,
                            const std::vector<double>& horizons, const CvConfig& config) {
  MetricReport report;
  report.fold_of_subject = stratified_folds(cohort, config.folds, config.seed);

  for (double t_L : landmarks)
    for (double dt : horizons) {
      MetricCell cell;
      cell.t_L = t_L;
      cell.dt = dt;
      cell.auc_folds.assign(config.folds, std::numeric_limits<double>::quiet_NaN());
      cell.bs_folds.assign(config.folds, std::numeric_limits<double>::quiet_NaN());
      report.cells.push_back(cell);
    }

  for (int f = 0; f < config.folds; ++f) {
    Cohort train = cohort;
    train.subjects.clear();
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
      if (report.fold_of_subject[i] == f)
        test_idx.push_back(i);
      else
        train.subjects.push_back(cohort.subjects[i]);
    }
    if (train.subjects.empty() || test_idx.empty()) {
      report.notes.push_back("fold " + std::to_string(f) + ": empty train or test split");
      continue;
    }

    McmcConfig mcmc = config.mcmc;
    mcmc.seed = config.seed + 1000 + static_cast<std::uint64_t>(f);
    const SplineBasis basis = default_basis(train, spec);
    const JointData train_data = build_joint_data(train, spec, basis, mcmc.quad_nodes);
    const PosteriorDraws draws = run_mcmc(train_data, config.prior, mcmc);

    // predictions for held-out subjects at every landmark
    std::map<std::pair<int, int>, std::vector<double>> pi;  // (landmark idx, horizon idx) -> per-test-subject
    for (std::size_t li = 0; li < landmarks.size(); ++li)
      for (std::size_t hi = 0; hi < horizons.size(); ++hi)
        pi[{static_cast<int>(li), static_cast<int>(hi)}].assign(test_idx.size(),
                                                                std::numeric_limits<double>::quiet_NaN());

    for (std::size_t ti = 0; ti < test_idx.size(); ++ti) {
      const Subject& subj = cohort.subjects[test_idx[ti]];
      for (std::size_t li = 0; li < landmarks.size(); ++li) {
        const double t_L = landmarks[li];
        if (subj.event.entry_time > t_L || subj.event.time <= t_L) continue;
        PredictionRequest req;
        req.subject = subj;
        req.landmark = t_L;
        req.horizons = horizons;
        req.max_draws = config.prediction_draws;
        req.mh_steps = config.mh_steps;
        req.seed = config.seed + 7919 * (test_idx[ti] + 1);
        try {
          const auto results = prediction_curve(req, draws, spec, basis);
          for (std::size_t hi = 0; hi < horizons.size(); ++hi)
            pi[{static_cast<int>(li), static_cast<int>(hi)}][ti] = results[hi].pi_mean;
        } catch (const std::exception& e) {
          report.notes.push_back("fold " + std::to_string(f) + " subject " + subj.id + " t_L=" +
                                 format_double(t_L) + ": " + e.what());
        }
      }
    }

    // score the fold
    std::size_t cell_idx = 0;
    for (std::size_t li = 0; li < landmarks.size(); ++li) {
      for (std::size_t hi = 0; hi < horizons.size(); ++hi, ++cell_idx) {
        MetricCell& cell = report.cells[cell_idx];
        std::vector<double> times, entries;
        std::vector<int> events;
        std::vector<double> preds;
        for (std::size_t ti = 0; ti < test_idx.size(); ++ti) {
          const Subject& subj = cohort.subjects[test_idx[ti]];
          times.push_back(subj.event.time);
          events.push_back(subj.event.event);
          entries.push_back(subj.event.entry_time);
          preds.push_back(pi[{static_cast<int>(li), static_cast<int>(hi)}][ti]);
        }
        auto labels = ipcw_weights(times, events, entries, landmarks[li], horizons[hi]);
        // a weighted subject without a prediction invalidates the fold cell
        bool missing_pred = false;
        int fold_events = 0, fold_at_risk = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (labels[i].at_risk) ++fold_at_risk;
          fold_events += labels[i].event_in_window;
          if (labels[i].weight > 0.0 && !std::isfinite(preds[i])) missing_pred = true;
        }
        cell.n_at_risk += fold_at_risk;
        cell.n_events_in_window += fold_events;
        if (missing_pred) {
          report.notes.push_back("fold " + std::to_string(f) + " cell (" + format_double(landmarks[li]) + ", " +
                                 format_double(horizons[hi]) + "): prediction missing for a weighted subject");
          continue;
        }
        const auto auc = auc_ipcw(preds, labels);
        const auto bs = brier_ipcw(preds, labels);
        if (auc) cell.auc_folds[f] = *auc;
        if (bs) cell.bs_folds[f] = *bs;
        if (!auc || !bs)
          report.notes.push_back("fold " + std::to_string(f) + " cell (" + format_double(landmarks[li]) + ", " +
                                 format_double(horizons[hi]) + "): metric not computable");
      }
    }
  }

  for (auto& cell : report.cells) {
    std::vector<double> aucs, bss;
    for (double v : cell.auc_folds)
      if (std::isfinite(v)) aucs.push_back(v);
    for (double v : cell.bs_folds)
      if (std::isfinite(v)) bss.push_back(v);
    if (!aucs.empty()) {
      cell.auc_mean = mean_of(aucs);
      if (aucs.size() > 1) cell.auc_sd = sd_of(aucs);
    }
    if (!bss.empty()) {
      cell.bs_mean = mean_of(bss);
      if (bss.size() > 1) cell.bs_sd = sd_of(bss);
    }
  }
  return report;
}

}  // namespace jm
