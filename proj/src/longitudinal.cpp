#include "jm/longitudinal.hpp"

#include <cmath>

namespace jm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double StepFunction::at(double t) const {
  if (times.empty()) return 0.0;
  if (t < times.front()) return values.front();
  // last breakpoint <= t
  auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto idx = static_cast<std::size_t>(it - times.begin()) - 1;
  return values[idx];
}

double StepFunction::integral(double t) const {
  if (times.empty()) return 0.0;
  if (t <= 0.0) return 0.0;
  double acc = 0.0;
  double lo = 0.0;
  // segment before the first breakpoint takes the first value
  double current = values.front();
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double hi = std::min(times[k], t);
    if (hi > lo) acc += current * (hi - lo);
    if (t <= times[k]) return acc;
    lo = std::max(lo, times[k]);
    current = values[k];
  }
  if (t > lo) acc += current * (t - lo);
  return acc;
}

StepFunction bmiz_trajectory(const Subject& subject) {
  StepFunction f;
  f.times.reserve(subject.records.size());
  f.values.reserve(subject.records.size());
  for (const auto& r : subject.records) {
    if (!r.bmiz) continue;
    f.times.push_back(r.time);
    f.values.push_back(*r.bmiz);
  }
  return f;
}

Eigen::VectorXd longitudinal_design_row(const Subject& subject, const ModelSpec& spec, double t,
                                        const StepFunction& bmiz) {
  Eigen::VectorXd x(spec.n_beta());
  x[0] = 1.0;
  for (std::size_t c = 0; c < spec.longitudinal_covariates.size(); ++c) {
    const std::string& name = spec.longitudinal_covariates[c];
    if (name == "time")
      x[c + 1] = t;
    else if (name == "bmiz")
      x[c + 1] = bmiz.at(t);
    else
      x[c + 1] = subject.covariate(name);
  }
  return x;
}

double eta(const Subject& subject, const ModelSpec& spec, const LongitudinalParams& params, const RandomEffects& b,
           double t, const StepFunction& bmiz) {
  const Eigen::VectorXd x = longitudinal_design_row(subject, spec, t, bmiz);
  return x.dot(params.beta) + b[0] + b[1] * t;
}

double eta_slope(const ModelSpec& spec, const LongitudinalParams& params, const RandomEffects& b) {
  double slope = b[1];
  for (std::size_t c = 0; c < spec.longitudinal_covariates.size(); ++c) {
    if (spec.longitudinal_covariates[c] == "time") slope += params.beta[c + 1];
  }
  return slope;
}

double eta_integral(const Subject& subject, const ModelSpec& spec, const LongitudinalParams& params,
                    const RandomEffects& b, double t0, double t1, const StepFunction& bmiz) {
  if (t1 < t0) throw NumericError("eta_integral: t1 < t0");
  const double dt = t1 - t0;
  const double dt2 = 0.5 * (t1 * t1 - t0 * t0);
  double acc = (params.beta[0] + b[0]) * dt + b[1] * dt2;
  for (std::size_t c = 0; c < spec.longitudinal_covariates.size(); ++c) {
    const std::string& name = spec.longitudinal_covariates[c];
    const double coef = params.beta[c + 1];
    if (name == "time")
      acc += coef * dt2;
    else if (name == "bmiz")
      acc += coef * bmiz.integral(t0, t1);
    else
      acc += coef * subject.covariate(name) * dt;
  }
  return acc;
}

double longitudinal_loglik(const Subject& subject, const ModelSpec& spec, const LongitudinalParams& params,
                           const RandomEffects& b) {
  if (!(params.sigma > 0.0)) throw NumericError("longitudinal_loglik: sigma must be > 0");
  const StepFunction bmiz = bmiz_trajectory(subject);
  const double inv_var = 1.0 / (params.sigma * params.sigma);
  double ll = 0.0;
  for (const auto& rec : subject.records) {
    const double resid = rec.value - eta(subject, spec, params, b, rec.time, bmiz);
    ll += -0.5 * (kLog2Pi + 2.0 * std::log(params.sigma) + resid * resid * inv_var);
  }
  return ll;
}

}  // namespace jm
