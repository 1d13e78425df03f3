#include "jm/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "jm/csv.hpp"

namespace jm {

const char* const kSurvivalCovariateNames[kNumSurvivalCovariates] = {
    "comorb", "kidneyhist", "cortico", "immuno", "immmod", "bcell", "ccb", "acei"};

double Subject::covariate(const std::string& name) const {
  if (name == "comorb") return comorb;
  if (name == "kidneyhist") return kidney_hist;
  if (name == "cortico") return cortico;
  if (name == "immuno") return immuno;
  if (name == "immmod") return imm_mod;
  if (name == "bcell") return bcell;
  if (name == "ccb") return ccb;
  if (name == "acei") return acei;
  if (name == "sex") return sex;
  if (name == "sage") return sage;
  throw DataError("unknown covariate name: " + name);
}

std::size_t Cohort::n_records() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.records.size();
  return n;
}

double Cohort::max_observed_time() const {
  double m = 0.0;
  for (const auto& s : subjects) m = std::max(m, s.event.time);
  return m;
}

const Subject* Cohort::find(const std::string& id) const {
  for (const auto& s : subjects)
    if (s.id == id) return &s;
  return nullptr;
}

std::size_t ValidationReport::count(const std::string& invariant) const {
  std::size_t n = 0;
  for (const auto& i : issues)
    if (i.invariant == invariant) ++n;
  return n;
}

std::pair<std::vector<double>, Standardization> standardize(const std::vector<double>& values) {
  if (values.size() < 2) throw DataError("standardize: need at least 2 values");
  Standardization st;
  st.mean = mean_of(values);
  st.sd = sd_of(values);
  if (st.sd <= 0.0) throw DataError("standardize: zero variance input");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = st.apply(values[i]);
  return {out, st};
}

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

long parse_iso_days(const std::string& iso) {
  int y = 0, m = 0, d = 0;
  if (std::sscanf(iso.c_str(), "%d-%d-%d", &y, &m, &d) != 3 || m < 1 || m > 12 || d < 1 || d > 31)
    throw DataError("cannot parse ISO date: " + iso);
  return days_from_civil(y, m, d);
}

}  // namespace

double years_from_origin(const std::string& iso_date, const std::string& iso_origin) {
  return static_cast<double>(parse_iso_days(iso_date) - parse_iso_days(iso_origin)) / 365.25;
}

Cohort load_cohort(const std::string& longitudinal_path, const std::string& survival_path, const SchemaConfig& schema,
                   LoadReport* report) {
  LoadReport local_report;
  LoadReport& rep = report ? *report : local_report;

  const CsvTable surv = read_csv(survival_path);
  const CsvTable lng = read_csv(longitudinal_path);
  if (lng.rows.empty()) throw DataError(longitudinal_path + ": no data rows");
  if (surv.rows.empty()) throw DataError(survival_path + ": no data rows");

  const int s_id = surv.require_column(schema.col_subject_id);
  const int s_entry = surv.require_column(schema.col_entry_time);
  const int s_time = surv.require_column(schema.col_event_time);
  const int s_event = surv.require_column(schema.col_event);
  const int s_sex = surv.require_column(schema.col_sex);
  const int s_age = surv.require_column(schema.col_age);
  int s_cov[kNumSurvivalCovariates];
  for (int k = 0; k < kNumSurvivalCovariates; ++k) s_cov[k] = surv.require_column(kSurvivalCovariateNames[k]);

  const int l_id = lng.require_column(schema.col_subject_id);
  const int l_time = lng.require_column(schema.col_time);
  const int l_value = lng.require_column(schema.col_value);
  const int l_bmiz = lng.require_column(schema.col_bmiz);
  const int l_flag = lng.column("bmiz_imputed");  // optional provenance column

  auto read_time = [&](const CsvTable& t, std::size_t row, int col) -> double {
    if (!schema.time_is_date) return parse_double(t, row, col);
    return years_from_origin(t.rows[row][col], schema.origin_date);
  };

  Cohort cohort;
  cohort.longitudinal_path = longitudinal_path;
  cohort.survival_path = survival_path;
  cohort.longitudinal_rows = lng.rows.size();

  std::map<std::string, Subject> by_id;
  std::vector<std::string> order;
  for (std::size_t r = 0; r < surv.rows.size(); ++r) {
    Subject s;
    s.id = surv.rows[r][s_id];
    if (by_id.count(s.id))
      throw DataError(survival_path + ":" + std::to_string(surv.line_numbers[r]) + ": duplicate subject_id '" + s.id +
                      "'");
    s.event.entry_time = read_time(surv, r, s_entry);
    s.event.time = read_time(surv, r, s_time);
    s.event.event = parse_binary(surv, r, s_event);
    s.sex = parse_binary(surv, r, s_sex);
    s.raw_age = parse_double(surv, r, s_age);
    int* cov_fields[kNumSurvivalCovariates] = {&s.comorb, &s.kidney_hist, &s.cortico, &s.immuno,
                                               &s.imm_mod, &s.bcell,      &s.ccb,     &s.acei};
    for (int k = 0; k < kNumSurvivalCovariates; ++k) *cov_fields[k] = parse_binary(surv, r, s_cov[k]);
    if (!std::isfinite(s.event.time) || !std::isfinite(s.event.entry_time))
      throw DataError(survival_path + ":" + std::to_string(surv.line_numbers[r]) + ": nonfinite time for subject '" +
                      s.id + "'");
    if (s.event.entry_time < 0.0 || s.event.entry_time > s.event.time)
      throw DataError(survival_path + ":" + std::to_string(surv.line_numbers[r]) + ": subject '" + s.id +
                      "' violates 0 <= entry_time <= event_time");
    order.push_back(s.id);
    by_id.emplace(s.id, std::move(s));
  }

  for (std::size_t r = 0; r < lng.rows.size(); ++r) {
    const std::string& id = lng.rows[r][l_id];
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw DataError(longitudinal_path + ":" + std::to_string(lng.line_numbers[r]) + ": subject '" + id +
                      "' has longitudinal rows but no survival row");
    LongitudinalRecord rec;
    rec.time = read_time(lng, r, l_time);
    rec.value = parse_double(lng, r, l_value);
    rec.bmiz = parse_optional_double(lng, r, l_bmiz);
    if (l_flag >= 0) rec.bmiz_imputed = parse_optional_double(lng, r, l_flag).value_or(0.0) != 0.0;
    if (rec.time < 0.0) throw DataError(longitudinal_path + ":" + std::to_string(lng.line_numbers[r]) + ": time < 0");
    if (!std::isfinite(rec.value))
      throw DataError(longitudinal_path + ":" + std::to_string(lng.line_numbers[r]) + ": nonfinite measurement");
    it->second.records.push_back(rec);
  }

  std::vector<double> raw_ages;
  std::vector<Subject> kept;
  for (const auto& id : order) {
    Subject& s = by_id[id];
    if (s.records.empty())
      throw DataError(survival_path + ": subject '" + id + "' has a survival row but no longitudinal rows");
    std::stable_sort(s.records.begin(), s.records.end(),
                     [](const LongitudinalRecord& a, const LongitudinalRecord& b) { return a.time < b.time; });
    // Late labs: truncate to T_i within tolerance, drop beyond it with a warning.
    std::vector<LongitudinalRecord> recs;
    for (auto& rec : s.records) {
      if (rec.time > s.event.time) {
        if (rec.time <= s.event.time + schema.post_event_tolerance) {
          rec.time = s.event.time;
          recs.push_back(rec);
        } else {
          rep.warnings.push_back("subject " + id + ": measurement at t=" + format_double(rec.time) +
                                 " after observed time " + format_double(s.event.time) + " truncated away");
        }
      } else {
        recs.push_back(rec);
      }
    }
    // Duplicate times: perturb the later record for strict ordering.
    for (std::size_t j = 1; j < recs.size(); ++j) {
      if (recs[j].time <= recs[j - 1].time) recs[j].time = recs[j - 1].time + schema.tie_perturbation;
    }
    s.records = std::move(recs);
    if (s.records.size() < 2) {
      rep.excluded_single_measurement += 1;
      rep.warnings.push_back("subject " + id + ": fewer than 2 usable measurements, excluded");
      continue;
    }
    raw_ages.push_back(s.raw_age);
    kept.push_back(std::move(s));
  }
  if (kept.empty()) throw DataError("no subjects left after validation");

  if (schema.fixed_age_standardization) {
    cohort.age_standardization = *schema.fixed_age_standardization;
  } else if (raw_ages.size() >= 2 && sd_of(raw_ages) > 0.0) {
    cohort.age_standardization = standardize(raw_ages).second;
  } else {
    // degenerate cohorts (one subject, or constant ages) keep the raw scale
    cohort.age_standardization = Standardization{raw_ages.empty() ? 0.0 : mean_of(raw_ages), 1.0};
    rep.warnings.push_back("entry-age standardization degenerate (fewer than 2 distinct ages); using sd = 1");
  }
  for (auto& s : kept) s.sage = cohort.age_standardization.apply(s.raw_age);
  cohort.subjects = std::move(kept);
  return cohort;
}

ValidationReport validate_cohort(const Cohort& cohort, const SchemaConfig& schema) {
  ValidationReport rep;
  std::set<std::string> seen;
  for (const auto& s : cohort.subjects) {
    if (!seen.insert(s.id).second) rep.issues.push_back({"unique_subject_ids", s.id, "duplicate id"});
    if (s.event.event != 0 && s.event.event != 1)
      rep.issues.push_back({"event_indicator_binary", s.id, "event = " + std::to_string(s.event.event)});
    if (!(s.event.entry_time >= 0.0 && s.event.entry_time <= s.event.time))
      rep.issues.push_back({"entry_before_event", s.id,
                            "entry " + format_double(s.event.entry_time) + " > observed " + format_double(s.event.time)});
    if (!std::isfinite(s.event.time)) rep.issues.push_back({"finite_times", s.id, "observed time not finite"});
    if (s.records.size() < 2)
      rep.issues.push_back({"min_two_measurements", s.id, std::to_string(s.records.size()) + " record(s)"});
    auto binary = [&](int v, const char* name) {
      if (v != 0 && v != 1) rep.issues.push_back({"binary_covariates", s.id, std::string(name) + " not in {0,1}"});
    };
    binary(s.sex, "sex");
    binary(s.comorb, "comorb");
    binary(s.kidney_hist, "kidneyhist");
    binary(s.cortico, "cortico");
    binary(s.immuno, "immuno");
    binary(s.imm_mod, "immmod");
    binary(s.bcell, "bcell");
    binary(s.ccb, "ccb");
    binary(s.acei, "acei");
    double prev = -1.0;
    for (const auto& r : s.records) {
      if (r.time < 0.0) rep.issues.push_back({"nonnegative_times", s.id, "t = " + format_double(r.time)});
      if (!std::isfinite(r.value)) rep.issues.push_back({"finite_values", s.id, "nonfinite measurement"});
      if (r.time <= prev) rep.issues.push_back({"strictly_increasing_times", s.id, "t = " + format_double(r.time)});
      if (r.time > s.event.time + schema.post_event_tolerance)
        rep.issues.push_back({"measurements_within_followup", s.id, "t = " + format_double(r.time)});
      prev = r.time;
    }
  }
  if (!(cohort.age_standardization.sd > 0.0))
    rep.issues.push_back({"standardization_sd_positive", "", "sd = " + format_double(cohort.age_standardization.sd)});
  return rep;
}

void write_cohort(const Cohort& cohort, const std::string& longitudinal_path, const std::string& survival_path) {
  CsvWriter lng(longitudinal_path);
  lng.row({"subject_id", "time", "log_creatinine", "bmiz", "bmiz_imputed"});
  for (const auto& s : cohort.subjects) {
    for (const auto& r : s.records) {
      lng.row({s.id, format_double(r.time), format_double(r.value), r.bmiz ? format_double(*r.bmiz) : "",
               r.bmiz_imputed ? "1" : "0"});
    }
  }
  CsvWriter surv(survival_path);
  std::vector<std::string> header = {"subject_id", "entry_time", "event_time", "event", "sex", "age_entry"};
  for (const char* name : kSurvivalCovariateNames) header.push_back(name);
  surv.row(header);
  for (const auto& s : cohort.subjects) {
    surv.row({s.id, format_double(s.event.entry_time), format_double(s.event.time), std::to_string(s.event.event),
              std::to_string(s.sex), format_double(s.raw_age), std::to_string(s.comorb), std::to_string(s.kidney_hist),
              std::to_string(s.cortico), std::to_string(s.immuno), std::to_string(s.imm_mod), std::to_string(s.bcell),
              std::to_string(s.ccb), std::to_string(s.acei)});
  }
}

bool cohorts_equal(const Cohort& a, const Cohort& b, double tol) {
  if (a.subjects.size() != b.subjects.size()) return false;
  auto close = [tol](double x, double y) { return std::abs(x - y) <= tol; };
  for (std::size_t i = 0; i < a.subjects.size(); ++i) {
    const Subject& x = a.subjects[i];
    const Subject& y = b.subjects[i];
    if (x.id != y.id || x.sex != y.sex || !close(x.sage, y.sage) || !close(x.raw_age, y.raw_age)) return false;
    if (x.comorb != y.comorb || x.kidney_hist != y.kidney_hist || x.cortico != y.cortico || x.immuno != y.immuno ||
        x.imm_mod != y.imm_mod || x.bcell != y.bcell || x.ccb != y.ccb || x.acei != y.acei)
      return false;
    if (!close(x.event.entry_time, y.event.entry_time) || !close(x.event.time, y.event.time) ||
        x.event.event != y.event.event)
      return false;
    if (x.records.size() != y.records.size()) return false;
    for (std::size_t j = 0; j < x.records.size(); ++j) {
      const auto& rx = x.records[j];
      const auto& ry = y.records[j];
      if (!close(rx.time, ry.time) || !close(rx.value, ry.value)) return false;
      if (rx.bmiz.has_value() != ry.bmiz.has_value()) return false;
      if (rx.bmiz && !close(*rx.bmiz, *ry.bmiz)) return false;
    }
  }
  return close(a.age_standardization.mean, b.age_standardization.mean) &&
         close(a.age_standardization.sd, b.age_standardization.sd);
}

}  // namespace jm
