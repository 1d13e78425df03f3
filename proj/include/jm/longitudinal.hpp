#pragma once

#include <Eigen/Dense>
#include <vector>

#include "jm/cohort.hpp"
#include "jm/model_spec.hpp"

namespace jm {

struct LongitudinalParams {
  Eigen::VectorXd beta;  // ordered [intercept, covariates...] per ModelSpec
  double sigma = 1.0;    // residual sd
};

using RandomEffects = Eigen::Vector2d;  // (intercept, slope) deviations

// Piecewise-constant covariate trajectory: value at t is the value attached
// to the last breakpoint <= t; the first value extends left, the last right.
struct StepFunction {
  std::vector<double> times;
  std::vector<double> values;

  double at(double t) const;
  // Integral from 0 to t of the step function.
  double integral(double t) const;
  double integral(double t0, double t1) const { return integral(t1) - integral(t0); }
};

// The subject's imputed BMIZ trajectory over its record grid.
StepFunction bmiz_trajectory(const Subject& subject);

// Design row [1, t, covariates..., bmiz(t)] in ModelSpec order.
Eigen::VectorXd longitudinal_design_row(const Subject& subject, const ModelSpec& spec, double t,
                                        const StepFunction& bmiz);

double eta(const Subject& subject, const ModelSpec& spec, const LongitudinalParams& params, const RandomEffects& b,
           double t, const StepFunction& bmiz);

// d/dt of eta; time-varying covariates are piecewise-constant so only the
// linear-in-time terms contribute.
double eta_slope(const ModelSpec& spec, const LongitudinalParams& params, const RandomEffects& b);

// Exact integral of eta over [t0, t1] (closed form per BMIZ segment).
double eta_integral(const Subject& subject, const ModelSpec& spec, const LongitudinalParams& params,
                    const RandomEffects& b, double t0, double t1, const StepFunction& bmiz);

// Sum over records of log N(y_ij; eta(s_ij), sigma^2).
double longitudinal_loglik(const Subject& subject, const ModelSpec& spec, const LongitudinalParams& params,
                           const RandomEffects& b);

}  // namespace jm
