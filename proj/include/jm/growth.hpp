#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "jm/cohort.hpp"
#include "jm/lmm.hpp"

namespace jm {

struct BmiRecord {
  std::string subject_id;
  double time = 0.0;  // years since study origin
  double bmi = 0.0;   // kg/m^2
};

// BMI_i(t) = phi0 + phi1 t + phi2 SAge + phi3 Sex + u0i + u1i t.
struct BmiModelFit {
  Eigen::Vector4d phi;
  Eigen::Vector4d phi_se;
  Eigen::Matrix2d random_cov;
  double sigma = 1.0;
  std::map<std::string, Eigen::Vector2d> random_effects;  // subjects without BMI rows get (0,0)
  double loglik = 0.0;
};

// Age grid of (L, M, S) per sex for the z-score transform; values are
// user-supplied reference data.
struct LmsReference {
  struct Row {
    double age = 0.0, L = 0.0, M = 0.0, S = 0.0;
  };
  std::vector<Row> male;    // strictly increasing in age
  std::vector<Row> female;

  Row interpolate(int sex, double age) const;  // linear in age, throws outside grid
};

LmsReference load_lms_reference(const std::string& path);
void write_lms_reference(const LmsReference& ref, const std::string& path);

std::vector<BmiRecord> load_bmi_records(const std::string& path);
void write_bmi_records(const std::vector<BmiRecord>& records, const std::string& path);

BmiModelFit fit_bmi_lmm(const std::vector<BmiRecord>& records, const Cohort& cohort, const LmmOptions& options = {});

std::vector<double> predict_bmi(const BmiModelFit& fit, const Subject& subject, const std::vector<double>& times);

double bmi_to_zscore(double bmi, double age, int sex, const LmsReference& reference);
// Inverse transform, used by tests and the simulator.
double bmi_from_zscore(double z, double age, int sex, const LmsReference& reference);

struct ImputationReport {
  std::size_t observed = 0;
  std::size_t imputed = 0;
};

// Fills missing BMIZ at every measurement time through the LMM + LMS
// pipeline; observed values are preserved and flags record provenance.
Cohort impute_cohort_bmiz(const Cohort& cohort, const std::vector<BmiRecord>& bmi_records,
                          const LmsReference& reference, ImputationReport* report = nullptr);

}  // namespace jm
