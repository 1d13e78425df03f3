#include "jm/likelihood.hpp"

#include <cmath>

#include "jm/quadrature.hpp"

namespace jm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

int time_coefficient_index(const ModelSpec& spec) {
  for (std::size_t c = 0; c < spec.longitudinal_covariates.size(); ++c)
    if (spec.longitudinal_covariates[c] == "time") return static_cast<int>(c) + 1;
  return -1;
}

// Integrated design row: componentwise integral of [1, covariates...] from 0 to t.
Eigen::VectorXd integrated_design_row(const Subject& subject, const ModelSpec& spec, double t,
                                      const StepFunction& bmiz) {
  Eigen::VectorXd x(spec.n_beta());
  x[0] = t;
  for (std::size_t c = 0; c < spec.longitudinal_covariates.size(); ++c) {
    const std::string& name = spec.longitudinal_covariates[c];
    if (name == "time")
      x[c + 1] = 0.5 * t * t;
    else if (name == "bmiz")
      x[c + 1] = bmiz.integral(t);
    else
      x[c + 1] = subject.covariate(name) * t;
  }
  return x;
}

}  // namespace

IntervalDesign build_interval_design(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                                     double t0, double t1, const StepFunction& bmiz, int nodes_per_segment) {
  IntervalDesign d;
  if (t1 < t0) throw NumericError("build_interval_design: t1 < t0");
  std::vector<double> breaks = basis.interior_knots();
  breaks.insert(breaks.end(), bmiz.times.begin(), bmiz.times.end());
  std::vector<double> nodes, weights;
  composite_nodes(t0, t1, breaks, nodes_per_segment, nodes, weights);
  const int K = static_cast<int>(nodes.size());
  const int Q = basis.size();
  const int p = spec.n_beta();
  d.qw.resize(K);
  d.B.resize(K, Q);
  d.Xv.resize(K, p);
  d.Xa.resize(K, p);
  d.Zv.resize(K, 2);
  d.Za.resize(K, 2);
  for (int k = 0; k < K; ++k) {
    const double u = nodes[k];
    d.qw[k] = weights[k];
    d.B.row(k) = basis.evaluate(u).transpose();
    d.Xv.row(k) = longitudinal_design_row(subject, spec, u, bmiz).transpose();
    d.Xa.row(k) = integrated_design_row(subject, spec, u, bmiz).transpose();
    d.Zv(k, 0) = 1.0;
    d.Zv(k, 1) = u;
    d.Za(k, 0) = u;
    d.Za(k, 1) = 0.5 * u * u;
  }
  return d;
}

PointDesign build_point_design(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis, double t,
                               const StepFunction& bmiz) {
  PointDesign d;
  d.B = basis.evaluate(t).transpose();
  d.Xv = longitudinal_design_row(subject, spec, t, bmiz).transpose();
  d.Xa = integrated_design_row(subject, spec, t, bmiz).transpose();
  d.Zv << 1.0, t;
  d.Za << t, 0.5 * t * t;
  return d;
}

SubjectDesign build_subject_design(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                                   int nodes_per_segment) {
  SubjectDesign sd;
  const StepFunction bmiz = bmiz_trajectory(subject);
  const int n = static_cast<int>(subject.records.size());
  const int p = spec.n_beta();
  sd.Xl.resize(n, p);
  sd.Zl.resize(n, 2);
  sd.y.resize(n);
  for (int j = 0; j < n; ++j) {
    const auto& rec = subject.records[j];
    sd.Xl.row(j) = longitudinal_design_row(subject, spec, rec.time, bmiz).transpose();
    sd.Zl(j, 0) = 1.0;
    sd.Zl(j, 1) = rec.time;
    sd.y[j] = rec.value;
  }
  sd.xs.resize(spec.n_omega());
  for (int k = 0; k < spec.n_omega(); ++k) sd.xs[k] = subject.covariate(spec.survival_covariates[k]);
  sd.entry = subject.event.entry_time;
  sd.time = subject.event.time;
  sd.event = subject.event.event;
  sd.risk = build_interval_design(subject, spec, basis, sd.entry, sd.time, bmiz, nodes_per_segment);
  sd.at_event = build_point_design(subject, spec, basis, sd.time, bmiz);
  sd.time_coef = time_coefficient_index(spec);
  return sd;
}

JointData build_joint_data(const Cohort& cohort, const ModelSpec& spec, const SplineBasis& basis,
                           int nodes_per_segment) {
  JointData data;
  data.spec = spec;
  data.basis = basis;
  data.penalty = spline_penalty_matrix(basis.size());
  data.subjects.reserve(cohort.subjects.size());
  for (const auto& s : cohort.subjects) {
    for (const auto& r : s.records)
      if (!r.bmiz)
        throw DataError("build_joint_data: subject '" + s.id + "' has missing BMIZ at t = " + std::to_string(r.time));
    data.subjects.push_back(build_subject_design(s, spec, basis, nodes_per_segment));
    data.subject_ids.push_back(s.id);
    data.n_obs_total += static_cast<int>(s.records.size());
  }
  return data;
}

double subject_longitudinal_loglik(const SubjectDesign& sd, const Eigen::VectorXd& beta, double sigma2,
                                   const Eigen::Vector2d& b) {
  if (!(sigma2 > 0.0)) throw NumericError("subject_longitudinal_loglik: sigma2 must be > 0");
  const Eigen::VectorXd resid = sd.y - sd.Xl * beta - sd.Zl * b;
  const double n = static_cast<double>(sd.y.size());
  return -0.5 * (n * (kLog2Pi + std::log(sigma2)) + resid.squaredNorm() / sigma2);
}

Eigen::VectorXd interval_log_hazard(const IntervalDesign& d, const ModelSpec& spec, const SubjectDesign& sd,
                                    const JointParams& p, const Eigen::Vector2d& b) {
  Eigen::VectorXd lh = d.B * p.gamma;
  lh.array() += sd.xs.dot(p.omega);
  if (spec.assoc_value) lh += p.alpha_value * (d.Xv * p.beta + d.Zv * b);
  if (spec.assoc_slope) {
    const double beta_time = sd.time_coef >= 0 ? p.beta[sd.time_coef] : 0.0;
    lh.array() += p.alpha_slope * (beta_time + b[1]);
  }
  if (spec.assoc_area) lh += p.alpha_area * (d.Xa * p.beta + d.Za * b);
  return lh;
}

double interval_cumulative_hazard(const IntervalDesign& d, const ModelSpec& spec, const SubjectDesign& sd,
                                  const JointParams& p, const Eigen::Vector2d& b) {
  if (d.n_nodes() == 0) return 0.0;
  return d.qw.dot(interval_log_hazard(d, spec, sd, p, b).array().exp().matrix());
}

double point_log_hazard(const PointDesign& d, const ModelSpec& spec, const SubjectDesign& sd, const JointParams& p,
                        const Eigen::Vector2d& b) {
  double lh = d.B.dot(p.gamma) + sd.xs.dot(p.omega);
  if (spec.assoc_value) lh += p.alpha_value * (d.Xv.dot(p.beta) + d.Zv.dot(b));
  if (spec.assoc_slope) {
    const double beta_time = sd.time_coef >= 0 ? p.beta[sd.time_coef] : 0.0;
    lh += p.alpha_slope * (beta_time + b[1]);
  }
  if (spec.assoc_area) lh += p.alpha_area * (d.Xa.dot(p.beta) + d.Za.dot(b));
  return lh;
}

double subject_survival_loglik(const SubjectDesign& sd, const ModelSpec& spec, const JointParams& p,
                               const Eigen::Vector2d& b) {
  double ll = -interval_cumulative_hazard(sd.risk, spec, sd, p, b);
  if (sd.event == 1) ll += point_log_hazard(sd.at_event, spec, sd, p, b);
  return ll;
}

double subject_conditional_loglik(const SubjectDesign& sd, const ModelSpec& spec, const JointParams& p,
                                  const Eigen::Vector2d& b) {
  return subject_longitudinal_loglik(sd, p.beta, p.sigma2, b) + subject_survival_loglik(sd, spec, p, b);
}

}  // namespace jm
