#include "jm/prediction.hpp"

#include <cmath>

#include "jm/csv.hpp"

namespace jm {

namespace {

// Gradient and Hessian of the conditional log density of b:
//   longitudinal loglik + survival loglik over [entry, t_L] + log phi(b; 0, D).
struct ConditionalTarget {
  const SubjectDesign& sd;
  const ModelSpec& spec;
  const JointParams& p;
  Eigen::Matrix2d Dinv;

  explicit ConditionalTarget(const SubjectDesign& sd_, const ModelSpec& spec_, const JointParams& p_)
      : sd(sd_), spec(spec_), p(p_) {
    Dinv = p.D.inverse();
  }

  double logdens(const Eigen::Vector2d& b) const {
    double ll = -0.5 * b.dot(Dinv * b);
    if (sd.y.size() > 0) {
      const Eigen::VectorXd resid = sd.y - sd.Xl * p.beta - sd.Zl * b;
      ll += -0.5 * resid.squaredNorm() / p.sigma2;
    }
    ll -= interval_cumulative_hazard(sd.risk, spec, sd, p, b);
    return ll;
  }

  void grad_hess(const Eigen::Vector2d& b, Eigen::Vector2d& grad, Eigen::Matrix2d& hess) const {
    grad = -Dinv * b;
    hess = -Dinv;
    if (sd.y.size() > 0) {
      const Eigen::VectorXd resid = sd.y - sd.Xl * p.beta - sd.Zl * b;
      grad += sd.Zl.transpose() * resid / p.sigma2;
      hess -= sd.Zl.transpose() * sd.Zl / p.sigma2;
    }
    if (sd.risk.n_nodes() > 0) {
      const Eigen::VectorXd lh = interval_log_hazard(sd.risk, spec, sd, p, b);
      const Eigen::VectorXd lam = lh.array().exp() * sd.risk.qw.array();
      for (int k = 0; k < sd.risk.n_nodes(); ++k) {
        Eigen::Vector2d f = Eigen::Vector2d::Zero();
        if (spec.assoc_value) f += p.alpha_value * sd.risk.Zv.row(k).transpose();
        if (spec.assoc_slope) f[1] += p.alpha_slope;
        if (spec.assoc_area) f += p.alpha_area * sd.risk.Za.row(k).transpose();
        grad -= lam[k] * f;
        hess -= lam[k] * f * f.transpose();
      }
    }
  }
};

}  // namespace

PredictionContext build_prediction_context(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                                           double landmark, const std::vector<double>& horizons,
                                           int nodes_per_segment) {
  if (landmark < subject.event.entry_time)
    throw DataError("prediction: landmark before risk-set entry of subject '" + subject.id + "'");
  if (subject.event.time < landmark)
    throw DataError("prediction: subject '" + subject.id + "' is not at risk at the landmark");
  Subject truncated = subject;
  truncated.records.clear();
  for (const auto& r : subject.records)
    if (r.time <= landmark) truncated.records.push_back(r);
  if (truncated.records.empty())
    throw DataError("prediction: subject '" + subject.id + "' has no measurements up to the landmark");

  PredictionContext ctx;
  ctx.landmark = landmark;
  ctx.horizons = horizons;
  const StepFunction bmiz = bmiz_trajectory(truncated);

  const int p = spec.n_beta();
  const int n = static_cast<int>(truncated.records.size());
  ctx.history.Xl.resize(n, p);
  ctx.history.Zl.resize(n, 2);
  ctx.history.y.resize(n);
  for (int j = 0; j < n; ++j) {
    const auto& rec = truncated.records[j];
    ctx.history.Xl.row(j) = longitudinal_design_row(truncated, spec, rec.time, bmiz).transpose();
    ctx.history.Zl(j, 0) = 1.0;
    ctx.history.Zl(j, 1) = rec.time;
    ctx.history.y[j] = rec.value;
  }
  ctx.history.xs.resize(spec.n_omega());
  for (int k = 0; k < spec.n_omega(); ++k) ctx.history.xs[k] = truncated.covariate(spec.survival_covariates[k]);
  ctx.history.entry = truncated.event.entry_time;
  ctx.history.time = landmark;
  ctx.history.event = 0;  // conditioning on survival to t_L only
  ctx.history.risk = build_interval_design(truncated, spec, basis, ctx.history.entry, landmark, bmiz,
                                           nodes_per_segment);
  ctx.history.at_event = build_point_design(truncated, spec, basis, landmark, bmiz);
  for (std::size_t c = 0; c < spec.longitudinal_covariates.size(); ++c)
    if (spec.longitudinal_covariates[c] == "time") ctx.history.time_coef = static_cast<int>(c) + 1;

  for (double dt : horizons) {
    if (dt < 0.0) throw DataError("prediction: negative horizon");
    const double end = landmark + dt;
    if (!basis.in_range(end))
      throw DataError("prediction: t_L + dt = " + format_double(end) +
                      " lies beyond the baseline-hazard boundary knot " + format_double(basis.hi));
    ctx.windows.push_back(build_interval_design(truncated, spec, basis, landmark, end, bmiz, nodes_per_segment));
  }
  return ctx;
}

Eigen::Vector2d sample_conditional_random_effects(const SubjectDesign& history, const ModelSpec& spec,
                                                  const JointParams& params, int mh_steps, Rng& rng, bool* mode_ok) {
  const ConditionalTarget target(history, spec, params);

  // Newton search for the conditional mode
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  bool ok = true;
  Eigen::Vector2d grad;
  Eigen::Matrix2d hess;
  double f = target.logdens(b);
  for (int it = 0; it < 50; ++it) {
    target.grad_hess(b, grad, hess);
    const Eigen::Vector2d step = (-hess).ldlt().solve(grad);
    if (!step.allFinite()) {
      ok = false;
      break;
    }
    double scale = 1.0;
    bool moved = false;
    for (int half = 0; half < 20; ++half) {
      const Eigen::Vector2d cand = b + scale * step;
      const double f_new = target.logdens(cand);
      if (std::isfinite(f_new) && f_new >= f - 1e-12) {
        moved = f_new > f + 1e-11;
        b = cand;
        f = f_new;
        break;
      }
      scale *= 0.5;
    }
    if (!moved) break;
    if (grad.norm() < 1e-9) break;
  }
  if (!std::isfinite(f)) {
    ok = false;
    b.setZero();
    f = target.logdens(b);
  }
  if (mode_ok) *mode_ok = ok;

  // Hessian-scaled random-walk Metropolis around the mode
  target.grad_hess(b, grad, hess);
  Eigen::Matrix2d prop_cov = (-hess).inverse();
  if (!prop_cov.allFinite() || !(prop_cov.determinant() > 0.0)) prop_cov = params.D;
  const Eigen::LLT<Eigen::Matrix2d> llt(prop_cov);
  const Eigen::Matrix2d L = llt.info() == Eigen::Success ? Eigen::Matrix2d(llt.matrixL())
                                                         : Eigen::Matrix2d(params.D.llt().matrixL());
  const double scale = 2.38 / std::sqrt(2.0);
  double f_cur = f;
  for (int s = 0; s < mh_steps; ++s) {
    const Eigen::Vector2d cand = b + scale * (L * Eigen::Vector2d(rng.normal(), rng.normal()));
    const double f_new = target.logdens(cand);
    const double ratio = f_new - f_cur;
    if (!std::isnan(ratio) && (ratio >= 0.0 || std::log(rng.uniform()) < ratio)) {
      b = cand;
      f_cur = f_new;
    }
  }
  return b;
}

std::vector<PredictionResult> prediction_curve(const PredictionRequest& request, const PosteriorDraws& draws,
                                               const ModelSpec& spec, const SplineBasis& basis) {
  if (draws.theta.rows() == 0) throw DataError("prediction: no posterior draws");
  const PredictionContext ctx =
      build_prediction_context(request.subject, spec, basis, request.landmark, request.horizons);

  const int total = static_cast<int>(draws.theta.rows());
  int K = total;
  int stride = 1;
  if (request.max_draws > 0 && request.max_draws < total) {
    K = request.max_draws;
    stride = total / K;
  }

  Rng rng = Rng::substream(request.seed, 0x70726564);
  const int H = static_cast<int>(request.horizons.size());
  Eigen::MatrixXd pi(K, H);
  int fallbacks = 0;
  for (int k = 0; k < K; ++k) {
    const int row = k * stride;
    const JointParams p = draws.params_at(row, spec);
    bool ok = true;
    const Eigen::Vector2d b =
        sample_conditional_random_effects(ctx.history, spec, p, request.mh_steps, rng, &ok);
    if (!ok) ++fallbacks;
    for (int h = 0; h < H; ++h) {
      const double cum = interval_cumulative_hazard(ctx.windows[h], spec, ctx.history, p, b);
      pi(k, h) = 1.0 - std::exp(-cum);
    }
  }

  std::vector<PredictionResult> out;
  for (int h = 0; h < H; ++h) {
    PredictionResult r;
    r.landmark = request.landmark;
    r.horizon = request.horizons[h];
    r.per_draw = pi.col(h);
    r.pi_mean = pi.col(h).mean();
    std::vector<double> v(pi.col(h).data(), pi.col(h).data() + K);
    r.pi_lo = quantile(v, 0.025);
    r.pi_hi = quantile(v, 0.975);
    r.mode_fallbacks = fallbacks;
    out.push_back(std::move(r));
  }
  return out;
}

PredictionResult dynamic_event_probability(const PredictionRequest& request, const PosteriorDraws& draws,
                                           const ModelSpec& spec, const SplineBasis& basis) {
  PredictionRequest req = request;
  if (req.horizons.size() != 1) throw DataError("dynamic_event_probability: expected exactly one horizon");
  return prediction_curve(req, draws, spec, basis).front();
}

}  // namespace jm
