#include "jm/growth.hpp"

#include <algorithm>
#include <cmath>

#include "jm/csv.hpp"

namespace jm {

LmsReference::Row LmsReference::interpolate(int sex, double age) const {
  const std::vector<Row>& grid = sex == 0 ? male : female;
  if (grid.empty()) throw DataError("LMS reference: no rows for sex " + std::to_string(sex));
  if (age < grid.front().age || age > grid.back().age)
    throw DataError("LMS reference: age " + format_double(age) + " outside grid [" + format_double(grid.front().age) +
                    ", " + format_double(grid.back().age) + "] for sex " + std::to_string(sex));
  auto it = std::lower_bound(grid.begin(), grid.end(), age, [](const Row& r, double a) { return r.age < a; });
  if (it == grid.begin()) return *it;
  const Row& hi = *it;
  const Row& lo = *(it - 1);
  if (hi.age == lo.age) return hi;
  const double w = (age - lo.age) / (hi.age - lo.age);
  Row out;
  out.age = age;
  out.L = lo.L + w * (hi.L - lo.L);
  out.M = lo.M + w * (hi.M - lo.M);
  out.S = lo.S + w * (hi.S - lo.S);
  return out;
}

LmsReference load_lms_reference(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_sex = t.require_column("sex");
  const int c_age = t.require_column("age");
  const int c_L = t.require_column("L");
  const int c_M = t.require_column("M");
  const int c_S = t.require_column("S");
  LmsReference ref;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    LmsReference::Row row;
    row.age = parse_double(t, r, c_age);
    row.L = parse_double(t, r, c_L);
    row.M = parse_double(t, r, c_M);
    row.S = parse_double(t, r, c_S);
    if (!(row.M > 0.0) || !(row.S > 0.0))
      throw DataError(path + ":" + std::to_string(t.line_numbers[r]) + ": require M > 0 and S > 0");
    (parse_binary(t, r, c_sex) == 0 ? ref.male : ref.female).push_back(row);
  }
  auto check = [&](std::vector<LmsReference::Row>& grid, const char* label) {
    std::sort(grid.begin(), grid.end(), [](const auto& a, const auto& b) { return a.age < b.age; });
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (grid[i].age <= grid[i - 1].age)
        throw DataError(path + ": duplicate age in " + std::string(label) + " LMS grid");
  };
  check(ref.male, "male");
  check(ref.female, "female");
  return ref;
}

void write_lms_reference(const LmsReference& ref, const std::string& path) {
  CsvWriter w(path);
  w.row({"sex", "age", "L", "M", "S"});
  for (int sex = 0; sex <= 1; ++sex) {
    for (const auto& r : (sex == 0 ? ref.male : ref.female))
      w.row({std::to_string(sex), format_double(r.age), format_double(r.L), format_double(r.M), format_double(r.S)});
  }
}

std::vector<BmiRecord> load_bmi_records(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_id = t.require_column("subject_id");
  const int c_time = t.require_column("time");
  const int c_bmi = t.require_column("bmi");
  std::vector<BmiRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    BmiRecord rec;
    rec.subject_id = t.rows[r][c_id];
    rec.time = parse_double(t, r, c_time);
    rec.bmi = parse_double(t, r, c_bmi);
    if (!(rec.bmi > 0.0))
      throw DataError(path + ":" + std::to_string(t.line_numbers[r]) + ": bmi must be positive");
    if (rec.time < 0.0) throw DataError(path + ":" + std::to_string(t.line_numbers[r]) + ": time must be >= 0");
    out.push_back(rec);
  }
  return out;
}

void write_bmi_records(const std::vector<BmiRecord>& records, const std::string& path) {
  CsvWriter w(path);
  w.row({"subject_id", "time", "bmi"});
  for (const auto& r : records) w.row({r.subject_id, format_double(r.time), format_double(r.bmi)});
}

BmiModelFit fit_bmi_lmm(const std::vector<BmiRecord>& records, const Cohort& cohort, const LmmOptions& options) {
  if (records.empty()) throw DataError("fit_bmi_lmm: no BMI records");
  std::map<std::string, std::vector<const BmiRecord*>> by_id;
  for (const auto& r : records) by_id[r.subject_id].push_back(&r);

  std::vector<LmmCluster> clusters;
  std::vector<const Subject*> cluster_subjects;
  for (const auto& [id, recs] : by_id) {
    const Subject* s = cohort.find(id);
    if (!s) throw DataError("fit_bmi_lmm: BMI record for unknown subject '" + id + "'");
    LmmCluster c;
    const int n = static_cast<int>(recs.size());
    c.X.resize(n, 4);
    c.Z.resize(n, 2);
    c.y.resize(n);
    for (int j = 0; j < n; ++j) {
      c.X(j, 0) = 1.0;
      c.X(j, 1) = recs[j]->time;
      c.X(j, 2) = s->sage;
      c.X(j, 3) = s->sex;
      c.Z(j, 0) = 1.0;
      c.Z(j, 1) = recs[j]->time;
      c.y[j] = recs[j]->bmi;
    }
    clusters.push_back(std::move(c));
    cluster_subjects.push_back(s);
  }

  LmmOptions opts = options;
  if (opts.column_names.empty()) opts.column_names = {"intercept", "time", "sage", "sex"};
  const LmmFit lmm = fit_lmm(clusters, opts);

  BmiModelFit fit;
  fit.phi = lmm.beta;
  fit.phi_se = lmm.beta_se();
  fit.random_cov = lmm.D;
  fit.sigma = lmm.sigma;
  fit.loglik = lmm.loglik;
  for (std::size_t i = 0; i < cluster_subjects.size(); ++i)
    fit.random_effects[cluster_subjects[i]->id] = lmm.blups.row(static_cast<int>(i)).transpose();
  // subjects with no BMI rows fall back to the population line
  for (const auto& s : cohort.subjects)
    if (!fit.random_effects.count(s.id)) fit.random_effects[s.id] = Eigen::Vector2d::Zero();
  return fit;
}

std::vector<double> predict_bmi(const BmiModelFit& fit, const Subject& subject, const std::vector<double>& times) {
  Eigen::Vector2d u = Eigen::Vector2d::Zero();
  auto it = fit.random_effects.find(subject.id);
  if (it != fit.random_effects.end()) u = it->second;
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) {
    if (t < 0.0) throw DataError("predict_bmi: negative time");
    out.push_back(fit.phi[0] + fit.phi[1] * t + fit.phi[2] * subject.sage + fit.phi[3] * subject.sex + u[0] +
                  u[1] * t);
  }
  return out;
}

double bmi_to_zscore(double bmi, double age, int sex, const LmsReference& reference) {
  if (!(bmi > 0.0)) throw DataError("bmi_to_zscore: bmi must be positive");
  const LmsReference::Row r = reference.interpolate(sex, age);
  if (r.L == 0.0) return std::log(bmi / r.M) / r.S;
  return (std::pow(bmi / r.M, r.L) - 1.0) / (r.L * r.S);
}

double bmi_from_zscore(double z, double age, int sex, const LmsReference& reference) {
  const LmsReference::Row r = reference.interpolate(sex, age);
  if (r.L == 0.0) return r.M * std::exp(r.S * z);
  return r.M * std::pow(1.0 + r.L * r.S * z, 1.0 / r.L);
}

Cohort impute_cohort_bmiz(const Cohort& cohort, const std::vector<BmiRecord>& bmi_records,
                          const LmsReference& reference, ImputationReport* report) {
  Cohort out = cohort;
  bool any_missing = false;
  for (const auto& s : out.subjects)
    for (const auto& r : s.records)
      if (!r.bmiz) any_missing = true;

  ImputationReport local;
  ImputationReport& rep = report ? *report : local;

  BmiModelFit fit;
  if (any_missing) fit = fit_bmi_lmm(bmi_records, cohort);

  for (auto& s : out.subjects) {
    std::vector<double> missing_times;
    for (const auto& r : s.records)
      if (!r.bmiz) missing_times.push_back(r.time);
    std::vector<double> predicted;
    if (!missing_times.empty()) predicted = predict_bmi(fit, s, missing_times);
    std::size_t k = 0;
    for (auto& r : s.records) {
      if (r.bmiz) {
        rep.observed += 1;
        continue;
      }
      const double bmi_hat = predicted[k++];
      const double age_at_t = s.raw_age + (r.time - s.event.entry_time);
      try {
        r.bmiz = bmi_to_zscore(std::max(bmi_hat, 1e-6), age_at_t, s.sex, reference);
      } catch (const DataError& e) {
        throw DataError("impute_cohort_bmiz: subject '" + s.id + "' at t = " + format_double(r.time) + ": " +
                        e.what());
      }
      r.bmiz_imputed = true;
      rep.imputed += 1;
    }
  }
  return out;
}

}  // namespace jm
