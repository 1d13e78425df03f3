#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "jm/cohort.hpp"
#include "jm/growth.hpp"
#include "jm/model_spec.hpp"

namespace jm {

// Generating truth. Defaults follow the reported posterior means of the
// selected model (area-only association) and the cohort's covariate
// prevalences, so simulated data mirrors the application at scale.
struct SimTruth {
  ModelSpec spec = model_preset("m5");

  // longitudinal sub-model [intercept, time, sex, sage, bmiz]
  Eigen::VectorXd beta = (Eigen::VectorXd(5) << 3.706, 0.063, -0.085, 0.219, 0.044).finished();
  double sigma = 0.222;
  Eigen::Matrix2d D = (Eigen::Matrix2d() << 0.09, -0.003, -0.003, 0.0025).finished();

  // survival sub-model [comorb, kidneyhist, cortico, immuno, immmod, bcell, ccb, acei]
  Eigen::VectorXd omega =
      (Eigen::VectorXd(8) << 0.087, 0.726, 1.043, -1.584, -1.119, 0.350, 1.992, 0.163).finished();
  double alpha_value = 0.0, alpha_slope = 0.0, alpha_area = 2.983;

  enum class Baseline { Constant, Weibull, CenteredConstant };
  Baseline baseline = Baseline::CenteredConstant;
  // log-level c; NaN requests calibration to target_event_fraction
  double baseline_level = std::numeric_limits<double>::quiet_NaN();
  double weibull_shape = 1.5;
  double target_event_fraction = 0.11;

  // covariate distribution
  double p_female = 0.61;
  double p_comorb = 0.13, p_kidneyhist = 0.09, p_cortico = 0.58, p_immuno = 0.37, p_immmod = 0.27, p_bcell = 0.23,
         p_ccb = 0.17, p_acei = 0.18;
  double age_mean = 11.1, age_sd = 3.96, age_min = 0.02, age_max = 17.96;

  // visit and entry process
  double mean_visits = 17.0;
  double entry_max = 5.0;
  double study_end = 6.75;

  // latent BMI process [intercept, time, sage, sex]
  Eigen::Vector4d bmi_phi = Eigen::Vector4d(18.0, 0.35, 1.2, -0.5);
  Eigen::Matrix2d bmi_D = (Eigen::Matrix2d() << 6.25, 0.0, 0.0, 0.01).finished();
  double bmi_sigma = 0.6;
  double bmiz_missing_rate = 0.0;  // MAR missingness of the bmiz column
  double bmi_visit_fraction = 0.6; // share of visits with a BMI record
};

struct SimLatent {
  std::string subject_id;
  Eigen::Vector2d b;        // longitudinal random effects
  Eigen::Vector2d u;        // BMI random effects
  double t_star = 0.0;      // uncensored event time (infinity when none before bracket)
  double censor_time = 0.0;
  int event = 0;
};

struct SimCohort {
  Cohort cohort;
  std::vector<BmiRecord> bmi_records;
  LmsReference lms;
  std::vector<SimLatent> latent;
  double baseline_level = 0.0;  // resolved log-level actually used
};

// Synthetic LMS grid consistent with the simulated BMI population.
LmsReference synthetic_lms_reference();

// Inverse-transform event-time draw: solves Lambda(entry, t) = -log(u) by
// bracket expansion and bisection; nullopt = no event before max_time.
std::optional<double> invert_cumulative_hazard(const std::function<double(double)>& log_hazard, double entry,
                                               double u, const std::vector<double>& breakpoints, double max_time,
                                               double tol = 1e-8);

// Calibrates the baseline log-level so the expected event fraction matches
// truth.target_event_fraction (monotone bisection on a fixed pilot sample).
double calibrate_baseline_level(const SimTruth& truth, int pilot_n, std::uint64_t seed);

SimCohort simulate_cohort(const SimTruth& truth, int n, std::uint64_t seed);

void write_sim_truth(const SimCohort& sim, const std::string& path);

}  // namespace jm
