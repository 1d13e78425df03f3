#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jm/util.hpp"

namespace jm {

struct LongitudinalRecord {
  double time = 0.0;                // years since study origin
  double value = 0.0;               // log biomarker
  std::optional<double> bmiz;       // missing until observed or imputed
  bool bmiz_imputed = false;        // provenance flag set by the imputation pipeline
};

struct EventRecord {
  double entry_time = 0.0;  // risk-set entry (first measurement)
  double time = 0.0;        // observed follow-up time T_i
  int event = 0;            // delta_i, 1 = event observed
};

struct Subject {
  std::string id;
  int sex = 0;          // 0 male, 1 female
  double sage = 0.0;    // standardized entry age
  double raw_age = 0.0; // entry age on the original scale
  // baseline binary covariates, fixed order used throughout the project
  int comorb = 0, kidney_hist = 0, cortico = 0, immuno = 0, imm_mod = 0, bcell = 0, ccb = 0, acei = 0;
  std::vector<LongitudinalRecord> records;  // sorted strictly increasing in time
  EventRecord event;

  double covariate(const std::string& name) const;
};

inline constexpr int kNumSurvivalCovariates = 8;
extern const char* const kSurvivalCovariateNames[kNumSurvivalCovariates];

struct Standardization {
  double mean = 0.0;
  double sd = 1.0;
  double apply(double raw) const { return (raw - mean) / sd; }
};

struct Cohort {
  std::vector<Subject> subjects;
  Standardization age_standardization;
  std::string longitudinal_path, survival_path;  // provenance
  std::size_t longitudinal_rows = 0;

  std::size_t n_subjects() const { return subjects.size(); }
  std::size_t n_records() const;
  double max_observed_time() const;
  const Subject* find(const std::string& id) const;
};

// Column-name overrides and ingestion settings; every field has the
// spec-default value so an empty config works out of the box.
struct SchemaConfig {
  std::string col_subject_id = "subject_id";
  std::string col_time = "time";
  std::string col_value = "log_creatinine";
  std::string col_bmiz = "bmiz";
  std::string col_entry_time = "entry_time";
  std::string col_event_time = "event_time";
  std::string col_event = "event";
  std::string col_sex = "sex";
  std::string col_age = "age_entry";
  std::string origin_date = "2019-04-01";  // recorded provenance; times are already years
  bool time_is_date = false;               // if true, time columns hold ISO dates
  double post_event_tolerance = 1e-6;      // years a measurement may trail T_i before truncation
  double tie_perturbation = 1e-9;          // added to duplicate times within a subject
  // When set, reuse an existing age standardization instead of refitting
  // (prediction on new subjects with training parameters).
  std::optional<Standardization> fixed_age_standardization;
};

struct LoadReport {
  std::vector<std::string> warnings;              // excluded subjects, truncated records
  std::size_t excluded_single_measurement = 0;
};

struct ValidationIssue {
  std::string invariant;
  std::string subject_id;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  std::size_t count(const std::string& invariant) const;
};

// Standardize to sample mean 0 / sample sd 1; returns the transform for reuse.
std::pair<std::vector<double>, Standardization> standardize(const std::vector<double>& values);

Cohort load_cohort(const std::string& longitudinal_path, const std::string& survival_path,
                   const SchemaConfig& schema = {}, LoadReport* report = nullptr);

ValidationReport validate_cohort(const Cohort& cohort, const SchemaConfig& schema = {});

void write_cohort(const Cohort& cohort, const std::string& longitudinal_path, const std::string& survival_path);

// Days-based date -> years-from-origin conversion (365.25-day years).
double years_from_origin(const std::string& iso_date, const std::string& iso_origin);

bool cohorts_equal(const Cohort& a, const Cohort& b, double tol = 0.0);

}  // namespace jm
