#include "jm/hazard.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "jm/quadrature.hpp"

namespace jm {

SplineBasis SplineBasis::clamped(double lo, double hi, const std::vector<double>& interior, int degree) {
  if (!(hi > lo)) throw NumericError("SplineBasis: need hi > lo");
  if (degree < 0) throw NumericError("SplineBasis: negative degree");
  SplineBasis b;
  b.degree = degree;
  b.lo = lo;
  b.hi = hi;
  for (int i = 0; i <= degree; ++i) b.knots.push_back(lo);
  double prev = lo;
  for (double t : interior) {
    if (t <= lo || t >= hi) throw NumericError("SplineBasis: interior knot outside (lo, hi)");
    if (t < prev) throw NumericError("SplineBasis: interior knots must be nondecreasing");
    b.knots.push_back(t);
    prev = t;
  }
  for (int i = 0; i <= degree; ++i) b.knots.push_back(hi);
  return b;
}

SplineBasis SplineBasis::from_event_times(const std::vector<double>& event_times, double lo, double hi, int n_interior,
                                          int degree) {
  std::vector<double> interior;
  if (n_interior > 0 && !event_times.empty()) {
    std::set<double> uniq;
    for (int k = 1; k <= n_interior; ++k) {
      double q = quantile(event_times, static_cast<double>(k) / (n_interior + 1));
      q = std::min(std::max(q, lo), hi);
      // keep knots strictly inside and strictly increasing
      while (uniq.count(q)) q = std::nextafter(q, hi);
      if (q > lo && q < hi) uniq.insert(q);
    }
    interior.assign(uniq.begin(), uniq.end());
  } else if (n_interior > 0) {
    // no events: fall back to an even grid
    for (int k = 1; k <= n_interior; ++k) interior.push_back(lo + (hi - lo) * k / (n_interior + 1));
  }
  return clamped(lo, hi, interior, degree);
}

std::vector<double> SplineBasis::interior_knots() const {
  std::vector<double> out;
  for (std::size_t i = degree + 1; i + degree + 1 < knots.size(); ++i) out.push_back(knots[i]);
  return out;
}

std::vector<double> SplineBasis::greville_abscissae() const {
  std::vector<double> out(size());
  for (int q = 0; q < size(); ++q) {
    double s = 0.0;
    for (int j = 1; j <= degree; ++j) s += knots[q + j];
    out[q] = degree > 0 ? s / degree : 0.5 * (knots[q] + knots[q + 1]);
  }
  return out;
}

Eigen::VectorXd SplineBasis::evaluate(double t) const {
  if (!in_range(t)) throw NumericError("SplineBasis: t = " + std::to_string(t) + " outside [" + std::to_string(lo) +
                                       ", " + std::to_string(hi) + "]");
  const int p = degree;
  const int q = size();
  // span index: knots[span] <= t < knots[span+1]; t == hi lands in the last span
  int span = p;
  {
    int lo_i = p, hi_i = q;  // valid spans are [p, q-1] between knots[p] and knots[q]
    if (t >= knots[q]) {
      span = q - 1;
      while (span > p && knots[span] == knots[span + 1]) --span;
    } else {
      while (hi_i - lo_i > 1) {
        const int mid = (lo_i + hi_i) / 2;
        if (t < knots[mid])
          hi_i = mid;
        else
          lo_i = mid;
      }
      span = lo_i;
    }
  }
  // de Boor triangular scheme
  std::vector<double> N(p + 1, 0.0), left(p + 1, 0.0), right(p + 1, 0.0);
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - knots[span + 1 - j];
    right[j] = knots[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? N[r] / denom : 0.0;
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(q);
  for (int r = 0; r <= p; ++r) {
    const int idx = span - p + r;
    if (idx >= 0 && idx < q) out[idx] = N[r];
  }
  return out;
}

Eigen::VectorXd bspline_basis(double t, const SplineBasis& basis) { return basis.evaluate(t); }

double log_baseline_hazard(double t, const Eigen::VectorXd& gamma, const SplineBasis& basis) {
  if (gamma.size() != basis.size()) throw NumericError("log_baseline_hazard: gamma length != basis size");
  return basis.evaluate(t).dot(gamma);
}

AssociationValue association_at(const Subject& subject, const ModelSpec& spec, const LongitudinalParams& lp,
                                const RandomEffects& b, double t, const StepFunction& bmiz) {
  AssociationValue g;
  if (spec.assoc_value) g.value = eta(subject, spec, lp, b, t, bmiz);
  if (spec.assoc_slope) g.slope = eta_slope(spec, lp, b);
  if (spec.assoc_area) g.cumulative = eta_integral(subject, spec, lp, b, 0.0, t, bmiz);
  return g;
}

double survival_covariate_term(const Subject& subject, const ModelSpec& spec, const SurvivalParams& sp) {
  if (sp.omega.size() != spec.n_omega()) throw NumericError("survival params: omega length != covariate count");
  double acc = 0.0;
  for (int k = 0; k < spec.n_omega(); ++k) acc += sp.omega[k] * subject.covariate(spec.survival_covariates[k]);
  return acc;
}

double log_hazard(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                  const LongitudinalParams& lp, const SurvivalParams& sp, const RandomEffects& b, double t,
                  const StepFunction& bmiz) {
  double lh = log_baseline_hazard(t, sp.gamma, basis) + survival_covariate_term(subject, spec, sp);
  if (spec.assoc_value) lh += sp.alpha_value * eta(subject, spec, lp, b, t, bmiz);
  if (spec.assoc_slope) lh += sp.alpha_slope * eta_slope(spec, lp, b);
  if (spec.assoc_area) lh += sp.alpha_area * eta_integral(subject, spec, lp, b, 0.0, t, bmiz);
  return lh;
}

double hazard(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis, const LongitudinalParams& lp,
              const SurvivalParams& sp, const RandomEffects& b, double t, const StepFunction& bmiz) {
  return std::exp(log_hazard(subject, spec, basis, lp, sp, b, t, bmiz));
}

double integrate_hazard(const std::function<double(double)>& log_fn, double t0, double t1,
                        const std::vector<double>& breakpoints, int nodes_per_segment) {
  if (t1 < t0) throw NumericError("integrate_hazard: t1 < t0");
  if (t1 == t0) return 0.0;
  std::vector<double> nodes, weights;
  composite_nodes(t0, t1, breakpoints, nodes_per_segment, nodes, weights);
  double acc = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double lh = log_fn(nodes[k]);
    if (!std::isfinite(lh) && lh > 0.0)
      throw NumericError("integrate_hazard: nonfinite integrand at t = " + std::to_string(nodes[k]));
    acc += weights[k] * std::exp(lh);
  }
  if (!std::isfinite(acc))
    throw NumericError("integrate_hazard: nonfinite integral over [" + std::to_string(t0) + ", " + std::to_string(t1) +
                       "]");
  return acc;
}

double cumulative_hazard(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                         const LongitudinalParams& lp, const SurvivalParams& sp, const RandomEffects& b, double t0,
                         double t1, const StepFunction& bmiz, int nodes_per_segment) {
  std::vector<double> breaks = basis.interior_knots();
  breaks.insert(breaks.end(), bmiz.times.begin(), bmiz.times.end());
  auto log_fn = [&](double t) { return log_hazard(subject, spec, basis, lp, sp, b, t, bmiz); };
  return integrate_hazard(log_fn, t0, t1, breaks, nodes_per_segment);
}

double survival_loglik(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                       const LongitudinalParams& lp, const SurvivalParams& sp, const RandomEffects& b,
                       int nodes_per_segment) {
  const StepFunction bmiz = bmiz_trajectory(subject);
  const double T = subject.event.time;
  double ll = -cumulative_hazard(subject, spec, basis, lp, sp, b, subject.event.entry_time, T, bmiz,
                                 nodes_per_segment);
  if (subject.event.event == 1) ll += log_hazard(subject, spec, basis, lp, sp, b, T, bmiz);
  return ll;
}

Eigen::MatrixXd spline_penalty_matrix(int n_basis, double ridge) {
  if (n_basis < 3) throw NumericError("spline_penalty_matrix: need at least 3 basis functions");
  Eigen::MatrixXd D2 = Eigen::MatrixXd::Zero(n_basis - 2, n_basis);
  for (int r = 0; r < n_basis - 2; ++r) {
    D2(r, r) = 1.0;
    D2(r, r + 1) = -2.0;
    D2(r, r + 2) = 1.0;
  }
  return D2.transpose() * D2 + ridge * Eigen::MatrixXd::Identity(n_basis, n_basis);
}

}  // namespace jm
