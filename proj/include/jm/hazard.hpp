#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "jm/longitudinal.hpp"
#include "jm/model_spec.hpp"

namespace jm {

// Clamped B-spline basis on [lo, hi]. Boundary knots are repeated degree+1
// times so the basis is a partition of unity on the closed interval.
struct SplineBasis {
  int degree = 3;
  std::vector<double> knots;  // full clamped knot vector
  double lo = 0.0, hi = 1.0;

  int size() const { return static_cast<int>(knots.size()) - degree - 1; }
  bool in_range(double t) const { return t >= lo && t <= hi; }
  Eigen::VectorXd evaluate(double t) const;          // throws on t outside [lo, hi]
  std::vector<double> interior_knots() const;
  std::vector<double> greville_abscissae() const;    // linear functions are B(t)'gamma with gamma = line(greville)

  static SplineBasis clamped(double lo, double hi, const std::vector<double>& interior, int degree = 3);
  // Interior knots at quantiles of observed event times (spec default: 9 knots).
  static SplineBasis from_event_times(const std::vector<double>& event_times, double lo, double hi,
                                      int n_interior = 9, int degree = 3);
};

struct SurvivalParams {
  Eigen::VectorXd omega;      // baseline-covariate coefficients, ModelSpec order
  double alpha_value = 0.0;   // current-value association
  double alpha_slope = 0.0;   // slope association
  double alpha_area = 0.0;    // cumulative-exposure association
  Eigen::VectorXd gamma;      // log baseline-hazard spline coefficients
  double tau = 1.0;           // smoothing precision of the spline penalty
};

// Evaluated association triple at one time point.
struct AssociationValue {
  double value = 0.0;
  double slope = 0.0;
  double cumulative = 0.0;
};

Eigen::VectorXd bspline_basis(double t, const SplineBasis& basis);

double log_baseline_hazard(double t, const Eigen::VectorXd& gamma, const SplineBasis& basis);

AssociationValue association_at(const Subject& subject, const ModelSpec& spec, const LongitudinalParams& lp,
                                const RandomEffects& b, double t, const StepFunction& bmiz);

double survival_covariate_term(const Subject& subject, const ModelSpec& spec, const SurvivalParams& sp);

double log_hazard(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                  const LongitudinalParams& lp, const SurvivalParams& sp, const RandomEffects& b, double t,
                  const StepFunction& bmiz);

double hazard(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis, const LongitudinalParams& lp,
              const SurvivalParams& sp, const RandomEffects& b, double t, const StepFunction& bmiz);

// Composite Gauss-Legendre integral of exp(log_fn) over [t0, t1], split at
// the supplied breakpoints. Shared by the model path and the simulator.
double integrate_hazard(const std::function<double(double)>& log_fn, double t0, double t1,
                        const std::vector<double>& breakpoints, int nodes_per_segment = 15);

// Integral of the subject hazard over [t0, t1]; segments split at spline
// knots and BMIZ step points.
double cumulative_hazard(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                         const LongitudinalParams& lp, const SurvivalParams& sp, const RandomEffects& b, double t0,
                         double t1, const StepFunction& bmiz, int nodes_per_segment = 15);

// delta * log lambda(T) - Lambda(entry, T): delayed-entry likelihood term.
double survival_loglik(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                       const LongitudinalParams& lp, const SurvivalParams& sp, const RandomEffects& b,
                       int nodes_per_segment = 15);

// Second-difference penalty matrix K = Delta2' Delta2 + ridge * I for the
// random-walk prior on gamma.
Eigen::MatrixXd spline_penalty_matrix(int n_basis, double ridge = 1e-6);

}  // namespace jm
