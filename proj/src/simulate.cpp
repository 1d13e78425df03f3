#include "jm/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "jm/csv.hpp"
#include "jm/hazard.hpp"
#include "jm/rng.hpp"

namespace jm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SubjectScaffold {
  int sex = 0;
  double raw_age = 0.0;
  double sage = 0.0;
  int cov[kNumSurvivalCovariates] = {0};
  double entry = 0.0;
  std::vector<double> visits;       // full grid over [entry, study_end]
  std::vector<double> bmi_obs;      // observed BMI at each visit
  std::vector<double> bmiz;         // z-scores at each visit
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  Eigen::Vector2d u = Eigen::Vector2d::Zero();
  double uniform_draw = 0.5;
};

double mean_bmiz_shift(const SimTruth&) { return 0.0; }

// population-average linear predictor used by the recentered baseline
double eta_bar(const SimTruth& truth, double t) {
  return truth.beta[0] + truth.beta[1] * t + truth.beta[2] * truth.p_female + truth.beta[4] * mean_bmiz_shift(truth);
}

double eta_bar_integral(const SimTruth& truth, double t) {
  return (truth.beta[0] + truth.beta[2] * truth.p_female + truth.beta[4] * mean_bmiz_shift(truth)) * t +
         0.5 * truth.beta[1] * t * t;
}

double omega_bar(const SimTruth& truth) {
  const double p[kNumSurvivalCovariates] = {truth.p_comorb, truth.p_kidneyhist, truth.p_cortico, truth.p_immuno,
                                            truth.p_immmod, truth.p_bcell,      truth.p_ccb,     truth.p_acei};
  double acc = 0.0;
  for (int k = 0; k < kNumSurvivalCovariates; ++k) acc += truth.omega[k] * p[k];
  return acc;
}

// log baseline hazard for the given truth, with level c factored out
double log_baseline_shape(const SimTruth& truth, double t) {
  switch (truth.baseline) {
    case SimTruth::Baseline::Constant:
      return 0.0;
    case SimTruth::Baseline::Weibull:
      return t > 0.0 ? (truth.weibull_shape - 1.0) * std::log(t) : (truth.weibull_shape > 1.0 ? -kInf : 0.0);
    case SimTruth::Baseline::CenteredConstant:
      return -(truth.alpha_value * eta_bar(truth, t) + truth.alpha_slope * truth.beta[1] +
               truth.alpha_area * eta_bar_integral(truth, t)) -
             omega_bar(truth);
  }
  return 0.0;
}

// full subject log hazard minus the baseline level c
double subject_log_hazard_shape(const SimTruth& truth, const SubjectScaffold& s, const StepFunction& bmiz, double t) {
  double lh = log_baseline_shape(truth, t);
  for (int k = 0; k < kNumSurvivalCovariates; ++k) lh += truth.omega[k] * s.cov[k];
  if (truth.alpha_value != 0.0) {
    const double eta_t = truth.beta[0] + truth.beta[1] * t + truth.beta[2] * s.sex + truth.beta[3] * s.sage +
                         truth.beta[4] * bmiz.at(t) + s.b[0] + s.b[1] * t;
    lh += truth.alpha_value * eta_t;
  }
  if (truth.alpha_slope != 0.0) lh += truth.alpha_slope * (truth.beta[1] + s.b[1]);
  if (truth.alpha_area != 0.0) {
    const double area = (truth.beta[0] + truth.beta[2] * s.sex + truth.beta[3] * s.sage + s.b[0]) * t +
                        0.5 * (truth.beta[1] + s.b[1]) * t * t + truth.beta[4] * bmiz.integral(t);
    lh += truth.alpha_area * area;
  }
  return lh;
}

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.normal(mean, sd);
    if (x >= lo && x <= hi) return x;
  }
  return std::clamp(mean, lo, hi);
}

// draws everything except the event time; visits cover the full window
SubjectScaffold draw_scaffold(const SimTruth& truth, const LmsReference& lms, Rng& rng) {
  SubjectScaffold s;
  s.sex = rng.bernoulli(truth.p_female) ? 1 : 0;
  s.raw_age = truncated_normal(rng, truth.age_mean, truth.age_sd, truth.age_min, truth.age_max);
  s.sage = (s.raw_age - truth.age_mean) / truth.age_sd;  // population scale; refined to sample scale later
  const double p[kNumSurvivalCovariates] = {truth.p_comorb, truth.p_kidneyhist, truth.p_cortico, truth.p_immuno,
                                            truth.p_immmod, truth.p_bcell,      truth.p_ccb,     truth.p_acei};
  for (int k = 0; k < kNumSurvivalCovariates; ++k) s.cov[k] = rng.bernoulli(p[k]) ? 1 : 0;
  s.entry = rng.uniform(0.0, truth.entry_max);

  const int n_vis = std::max(2, rng.poisson(truth.mean_visits));
  const double window = truth.study_end - s.entry;
  s.visits.push_back(s.entry);
  // early repeat measurement; keeps the two-measurement eligibility rule from
  // conditioning event times noticeably
  const double v2 = s.entry + std::min(0.04 + rng.uniform(0.0, 0.12), 0.5 * window);
  s.visits.push_back(v2);
  const int rest = n_vis - 2;
  if (rest > 0) {
    const double step = (truth.study_end - v2) / rest;
    for (int k = 1; k <= rest; ++k) {
      double t = v2 + (k + rng.uniform(-0.3, 0.3)) * step;
      t = std::clamp(t, v2 + 1e-6, truth.study_end);
      s.visits.push_back(t);
    }
  }
  std::sort(s.visits.begin(), s.visits.end());
  for (std::size_t k = 1; k < s.visits.size(); ++k)
    if (s.visits[k] <= s.visits[k - 1]) s.visits[k] = s.visits[k - 1] + 1e-9;

  // latent BMI trajectory and z-scores at the visit grid
  {
    Eigen::LLT<Eigen::Matrix2d> llt(truth.bmi_D);
    s.u = llt.matrixL() * Eigen::Vector2d(rng.normal(), rng.normal());
  }
  for (double t : s.visits) {
    const double latent = truth.bmi_phi[0] + truth.bmi_phi[1] * t + truth.bmi_phi[2] * s.sage +
                          truth.bmi_phi[3] * s.sex + s.u[0] + s.u[1] * t;
    const double obs = std::max(8.0, latent + rng.normal(0.0, truth.bmi_sigma));
    s.bmi_obs.push_back(obs);
    s.bmiz.push_back(bmi_to_zscore(obs, s.raw_age + (t - s.entry), s.sex, lms));
  }

  {
    Eigen::LLT<Eigen::Matrix2d> llt(truth.D);
    s.b = llt.matrixL() * Eigen::Vector2d(rng.normal(), rng.normal());
  }
  s.uniform_draw = rng.uniform();
  return s;
}

}  // namespace

LmsReference synthetic_lms_reference() {
  LmsReference ref;
  for (int sex = 0; sex <= 1; ++sex) {
    for (int a = 0; a <= 30; ++a) {
      LmsReference::Row row;
      row.age = a;
      row.L = -0.8 + 0.005 * a;
      row.M = 13.8 + 0.35 * a + (sex == 0 ? 0.2 : 0.0);
      row.S = 0.15;
      (sex == 0 ? ref.male : ref.female).push_back(row);
    }
  }
  return ref;
}

std::optional<double> invert_cumulative_hazard(const std::function<double(double)>& log_hazard, double entry,
                                               double u, const std::vector<double>& breakpoints, double max_time,
                                               double tol) {
  if (!(u > 0.0 && u < 1.0)) throw NumericError("invert_cumulative_hazard: u must lie in (0,1)");
  const double target = -std::log(u);
  if (target <= 0.0) return entry;

  auto cum = [&](double t) { return integrate_hazard(log_hazard, entry, t, breakpoints, 15); };
  if (cum(max_time) < target) return std::nullopt;

  double lo = entry, hi = max_time;
  // bracket shrink: find the first breakpoint interval containing the root
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (cum(mid) >= target)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

double calibrate_baseline_level(const SimTruth& truth, int pilot_n, std::uint64_t seed) {
  const LmsReference lms = synthetic_lms_reference();
  Rng rng = Rng::substream(seed, 0xca11b7a7e);
  // pilot subjects share the population age standardization
  std::vector<SubjectScaffold> pilot;
  pilot.reserve(pilot_n);
  for (int i = 0; i < pilot_n; ++i) pilot.push_back(draw_scaffold(truth, lms, rng));
  // integral of the level-free hazard over [entry, end]; the level scales it
  std::vector<double> log_integral(pilot.size());
  std::vector<double> log_target(pilot.size());
  for (std::size_t i = 0; i < pilot.size(); ++i) {
    const SubjectScaffold& s = pilot[i];
    StepFunction bmiz;
    bmiz.times = s.visits;
    bmiz.values = s.bmiz;
    auto log_fn = [&](double t) { return subject_log_hazard_shape(truth, s, bmiz, t); };
    const double integral = integrate_hazard(log_fn, s.entry, truth.study_end, s.visits, 15);
    log_integral[i] = std::log(std::max(integral, 1e-300));
    log_target[i] = std::log(-std::log(s.uniform_draw));
  }
  auto event_fraction = [&](double c) {
    int events = 0;
    for (std::size_t i = 0; i < pilot.size(); ++i)
      if (c + log_integral[i] >= log_target[i]) ++events;
    return static_cast<double>(events) / pilot.size();
  };
  double lo = -40.0, hi = 20.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (event_fraction(mid) < truth.target_event_fraction)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

SimCohort simulate_cohort(const SimTruth& truth, int n, std::uint64_t seed) {
  if (n < 1) throw DataError("simulate_cohort: n must be >= 1");
  SimCohort sim;
  sim.lms = synthetic_lms_reference();

  SimTruth t = truth;
  if (std::isnan(t.baseline_level)) t.baseline_level = calibrate_baseline_level(truth, 1500, seed);
  sim.baseline_level = t.baseline_level;

  // pass 1: demographic draws so entry age can be sample-standardized
  std::vector<SubjectScaffold> scaffolds;
  scaffolds.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
    scaffolds.push_back(draw_scaffold(t, sim.lms, rng));
  }
  std::vector<double> ages;
  for (const auto& s : scaffolds) ages.push_back(s.raw_age);
  const Standardization stz = standardize(ages).second;

  // pass 2: regenerate each subject with its standardized age in place
  // (BMI and hazard both depend on sage), then invert the event time
  sim.cohort.age_standardization = stz;
  for (int i = 0; i < n; ++i) {
    Subject subj;
    SimLatent latent;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000)
        throw NumericError("simulate_cohort: could not generate a valid subject; check visit/censoring settings");
      Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i) + static_cast<std::uint64_t>(attempt) * 1000003ull);
      SubjectScaffold s = draw_scaffold(t, sim.lms, rng);
      s.sage = stz.apply(s.raw_age);
      // refresh BMI obs/z with the final sage
      for (std::size_t k = 0; k < s.visits.size(); ++k) {
        const double latent_bmi = t.bmi_phi[0] + t.bmi_phi[1] * s.visits[k] + t.bmi_phi[2] * s.sage +
                                  t.bmi_phi[3] * s.sex + s.u[0] + s.u[1] * s.visits[k];
        const double obs = std::max(8.0, latent_bmi + rng.normal(0.0, t.bmi_sigma));
        s.bmi_obs[k] = obs;
        s.bmiz[k] = bmi_to_zscore(obs, s.raw_age + (s.visits[k] - s.entry), s.sex, sim.lms);
      }

      StepFunction bmiz;
      bmiz.times = s.visits;
      bmiz.values = s.bmiz;
      auto log_fn = [&](double u2) {
        return t.baseline_level + subject_log_hazard_shape(t, s, bmiz, u2);
      };
      const auto t_star = invert_cumulative_hazard(log_fn, s.entry, s.uniform_draw, s.visits, 2.0 * t.study_end);

      const double censor = t.study_end;
      double observed = censor;
      int event = 0;
      if (t_star && *t_star <= censor) {
        observed = *t_star;
        event = 1;
      }

      std::vector<double> kept;
      for (double v : s.visits)
        if (v <= observed) kept.push_back(v);
      if (kept.size() < 2) continue;  // single-measurement subjects are excluded upstream; redraw

      subj = Subject{};
      subj.id = std::to_string(i + 1);
      subj.sex = s.sex;
      subj.raw_age = s.raw_age;
      subj.sage = s.sage;
      int* cov_fields[kNumSurvivalCovariates] = {&subj.comorb, &subj.kidney_hist, &subj.cortico, &subj.immuno,
                                                 &subj.imm_mod, &subj.bcell,      &subj.ccb,     &subj.acei};
      for (int k = 0; k < kNumSurvivalCovariates; ++k) *cov_fields[k] = s.cov[k];
      subj.event.entry_time = s.entry;
      subj.event.time = observed;
      subj.event.event = event;
      for (std::size_t k = 0; k < s.visits.size(); ++k) {
        if (s.visits[k] > observed) break;
        LongitudinalRecord rec;
        rec.time = s.visits[k];
        const double eta_true = t.beta[0] + t.beta[1] * rec.time + t.beta[2] * s.sex + t.beta[3] * s.sage +
                                t.beta[4] * s.bmiz[k] + s.b[0] + s.b[1] * rec.time;
        rec.value = eta_true + (t.sigma > 0.0 ? rng.normal(0.0, t.sigma) : 0.0);
        if (!rng.bernoulli(t.bmiz_missing_rate)) rec.bmiz = s.bmiz[k];
        subj.records.push_back(rec);
        if (rng.bernoulli(t.bmi_visit_fraction)) sim.bmi_records.push_back({subj.id, rec.time, s.bmi_obs[k]});
      }

      latent.subject_id = subj.id;
      latent.b = s.b;
      latent.u = s.u;
      latent.t_star = t_star ? *t_star : kInf;
      latent.censor_time = censor;
      latent.event = event;
      break;
    }
    sim.cohort.subjects.push_back(std::move(subj));
    sim.latent.push_back(std::move(latent));
  }
  return sim;
}

void write_sim_truth(const SimCohort& sim, const std::string& path) {
  CsvWriter w(path);
  w.row({"subject_id", "b0", "b1", "u0", "u1", "t_star", "censor_time", "event", "baseline_level"});
  for (std::size_t i = 0; i < sim.latent.size(); ++i) {
    const SimLatent& l = sim.latent[i];
    w.row({l.subject_id, format_double(l.b[0]), format_double(l.b[1]), format_double(l.u[0]), format_double(l.u[1]),
           std::isfinite(l.t_star) ? format_double(l.t_star) : "inf", format_double(l.censor_time),
           std::to_string(l.event), format_double(sim.baseline_level)});
  }
}

}  // namespace jm
