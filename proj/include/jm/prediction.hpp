#pragma once

#include <Eigen/Dense>
#include <vector>

#include "jm/likelihood.hpp"
#include "jm/mcmc.hpp"
#include "jm/rng.hpp"

namespace jm {

struct PredictionRequest {
  Subject subject;                 // history + baseline covariates; records after t_L are ignored
  double landmark = 0.0;           // t_L
  std::vector<double> horizons;    // prediction windows (years)
  int mh_steps = 25;               // conditional random-effect sampler steps per draw
  int max_draws = 0;               // 0 = use every retained draw
  std::uint64_t seed = 0;
};

struct PredictionResult {
  double landmark = 0.0;
  double horizon = 0.0;
  double pi_mean = 0.0;            // posterior mean event probability
  double pi_lo = 0.0, pi_hi = 0.0; // 95% credible interval
  Eigen::VectorXd per_draw;        // Monte-Carlo draws behind the estimate
  int mode_fallbacks = 0;          // conditional-mode failures (b = 0 restarts)
};

// Design pieces for one (subject, landmark) pair, reused across draws.
struct PredictionContext {
  SubjectDesign history;                 // records <= t_L, risk interval [entry, t_L]
  std::vector<IntervalDesign> windows;   // quadrature over [t_L, t_L + dt] per horizon
  std::vector<double> horizons;
  double landmark = 0.0;
};

PredictionContext build_prediction_context(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                                           double landmark, const std::vector<double>& horizons,
                                           int nodes_per_segment = 15);

// One draw from p(b | T > t_L, history, theta): Newton mode finding, then
// Metropolis steps with a Hessian-scaled random walk.
Eigen::Vector2d sample_conditional_random_effects(const SubjectDesign& history, const ModelSpec& spec,
                                                  const JointParams& params, int mh_steps, Rng& rng,
                                                  bool* mode_ok = nullptr);

// pi(t_L + dt | t_L) for every horizon in the request, pairing each retained
// posterior draw with one fresh conditional b draw (shared across horizons).
std::vector<PredictionResult> prediction_curve(const PredictionRequest& request, const PosteriorDraws& draws,
                                               const ModelSpec& spec, const SplineBasis& basis);

// Single-horizon convenience wrapper.
PredictionResult dynamic_event_probability(const PredictionRequest& request, const PosteriorDraws& draws,
                                           const ModelSpec& spec, const SplineBasis& basis);

}  // namespace jm
