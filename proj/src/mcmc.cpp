#include "jm/mcmc.hpp"

#include <cmath>
#include <thread>

#include "jm/lmm.hpp"
#include "jm/rng.hpp"

namespace jm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_normal_density(double x, double sd) {
  return -0.5 * (kLog2Pi + 2.0 * std::log(sd) + x * x / (sd * sd));
}

double log_inverse_gamma_density(double x, double a, double b) {
  if (!(x > 0.0)) return kNegInf;
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

double log_gamma_density(double x, double a, double b) {
  if (!(x > 0.0)) return kNegInf;
  return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x;
}

double log_inverse_wishart_density(const Eigen::Matrix2d& D, double nu, const Eigen::Matrix2d& S) {
  const double detD = D.determinant();
  if (!(detD > 0.0) || D(0, 1) != D(1, 0)) return kNegInf;
  Eigen::LLT<Eigen::Matrix2d> llt(D);
  if (llt.info() != Eigen::Success) return kNegInf;
  const double log_gamma2 = 0.5 * std::log(M_PI) + std::lgamma(0.5 * nu) + std::lgamma(0.5 * nu - 0.5);
  return 0.5 * nu * std::log(S.determinant()) - nu * std::log(2.0) - log_gamma2 -
         0.5 * (nu + 3.0) * std::log(detD) - 0.5 * (S * D.inverse()).trace();
}

double log_bivariate_normal(const Eigen::Vector2d& x, const Eigen::Matrix2d& D) {
  const double det = D.determinant();
  if (!(det > 0.0)) return kNegInf;
  const Eigen::Matrix2d Dinv = D.inverse();
  return -kLog2Pi - 0.5 * std::log(det) - 0.5 * x.dot(Dinv * x);
}

// log N(gamma; 0, (tau K)^-1) including constants.
double log_gamma_prior(const Eigen::VectorXd& gamma, double tau, const Eigen::MatrixXd& penalty) {
  if (!(tau > 0.0)) return kNegInf;
  const int q = static_cast<int>(gamma.size());
  Eigen::LLT<Eigen::MatrixXd> llt(penalty);
  double logdet_K = 0.0;
  for (int i = 0; i < q; ++i) logdet_K += 2.0 * std::log(llt.matrixL()(i, i));
  return 0.5 * (q * (std::log(tau) - kLog2Pi) + logdet_K) - 0.5 * tau * gamma.dot(penalty * gamma);
}

}  // namespace

std::vector<std::string> parameter_names(const ModelSpec& spec, int n_basis) {
  std::vector<std::string> names;
  names.push_back("beta.intercept");
  for (const auto& c : spec.longitudinal_covariates) names.push_back("beta." + c);
  names.push_back("sigma2");
  names.push_back("D.1.1");
  names.push_back("D.1.2");
  names.push_back("D.2.2");
  for (const auto& c : spec.survival_covariates) names.push_back("omega." + c);
  for (const auto& a : spec.alpha_names()) names.push_back("alpha." + a);
  for (int q = 1; q <= n_basis; ++q) names.push_back("gamma." + std::to_string(q));
  names.push_back("tau");
  return names;
}

int PosteriorDraws::column(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<int>(j);
  throw NumericError("PosteriorDraws: unknown parameter '" + name + "'");
}

JointParams PosteriorDraws::params_at(int row, const ModelSpec& spec) const {
  JointParams p;
  int k = 0;
  p.beta.resize(spec.n_beta());
  for (int j = 0; j < spec.n_beta(); ++j) p.beta[j] = theta(row, k++);
  p.sigma2 = theta(row, k++);
  p.D(0, 0) = theta(row, k++);
  p.D(0, 1) = p.D(1, 0) = theta(row, k++);
  p.D(1, 1) = theta(row, k++);
  p.omega.resize(spec.n_omega());
  for (int j = 0; j < spec.n_omega(); ++j) p.omega[j] = theta(row, k++);
  if (spec.assoc_value) p.alpha_value = theta(row, k++);
  if (spec.assoc_slope) p.alpha_slope = theta(row, k++);
  if (spec.assoc_area) p.alpha_area = theta(row, k++);
  const int q = static_cast<int>(names.size()) - k - 1;
  p.gamma.resize(q);
  for (int j = 0; j < q; ++j) p.gamma[j] = theta(row, k++);
  p.tau = theta(row, k++);
  return p;
}

Eigen::Vector2d PosteriorDraws::b_at(int row, int subject_index) const {
  return Eigen::Vector2d(b(row, 2 * subject_index), b(row, 2 * subject_index + 1));
}

double joint_log_posterior(const JointData& data, const PriorSpec& prior, const JointParams& params,
                           const Eigen::MatrixXd& b, bool prior_only) {
  if (!(params.sigma2 > 0.0) || !(params.tau > 0.0)) return kNegInf;
  {
    Eigen::LLT<Eigen::Matrix2d> llt(params.D);
    if (llt.info() != Eigen::Success || params.D(0, 1) != params.D(1, 0)) return kNegInf;
  }
  double lp = 0.0;
  for (int j = 0; j < params.beta.size(); ++j) lp += log_normal_density(params.beta[j], prior.beta_sd);
  for (int j = 0; j < params.omega.size(); ++j) lp += log_normal_density(params.omega[j], prior.omega_sd);
  if (data.spec.assoc_value) lp += log_normal_density(params.alpha_value, prior.alpha_sd);
  if (data.spec.assoc_slope) lp += log_normal_density(params.alpha_slope, prior.alpha_sd);
  if (data.spec.assoc_area) lp += log_normal_density(params.alpha_area, prior.alpha_sd);
  lp += log_inverse_gamma_density(params.sigma2, prior.sigma2_a, prior.sigma2_b);
  lp += log_inverse_wishart_density(params.D, prior.wishart_df, prior.wishart_scale);
  lp += log_gamma_prior(params.gamma, params.tau, data.penalty);
  lp += log_gamma_density(params.tau, prior.tau_a, prior.tau_b);
  for (int i = 0; i < data.n_subjects(); ++i) {
    const Eigen::Vector2d bi = b.row(i).transpose();
    lp += log_bivariate_normal(bi, params.D);
    if (!prior_only) lp += subject_conditional_loglik(data.subjects[i], data.spec, params, bi);
  }
  return std::isfinite(lp) ? lp : kNegInf;
}

double gibbs_sigma2(double prior_a, double prior_b, double sum_sq_resid, int n_obs, Rng& rng) {
  return rng.inverse_gamma(prior_a + 0.5 * n_obs, prior_b + 0.5 * sum_sq_resid);
}

Eigen::Matrix2d gibbs_random_effects_cov(double prior_df, const Eigen::Matrix2d& prior_scale, const Eigen::MatrixXd& b,
                                         Rng& rng) {
  const Eigen::Matrix2d scale = prior_scale + b.transpose() * b;
  return rng.inverse_wishart(prior_df + static_cast<double>(b.rows()), scale);
}

double gibbs_tau(double prior_a, double prior_b, const Eigen::VectorXd& gamma, const Eigen::MatrixXd& penalty,
                 Rng& rng) {
  const double quad = gamma.dot(penalty * gamma);
  return rng.gamma(prior_a + 0.5 * static_cast<double>(gamma.size()), prior_b + 0.5 * quad);
}

SplineBasis default_basis(const Cohort& cohort, const ModelSpec& spec) {
  std::vector<double> event_times;
  for (const auto& s : cohort.subjects)
    if (s.event.event == 1) event_times.push_back(s.event.time);
  const double hi = std::max(cohort.max_observed_time(), 1e-6);
  return SplineBasis::from_event_times(event_times, 0.0, hi, spec.spline_interior_knots, spec.spline_degree);
}

namespace {

// ---------------------------------------------------------------------------
// adaptive random-walk proposal for one parameter block
// ---------------------------------------------------------------------------

struct AdaptiveBlock {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd chol;
  double log_scale = 0.0;
  long n_adapt = 0;
  long proposals = 0, accepts = 0;  // counted after burn-in
  double target = 0.234;
  int refresh_interval = 50;

  void init(int dim, const Eigen::MatrixXd& cov0, double target_rate) {
    mean = Eigen::VectorXd::Zero(dim);
    cov = cov0;
    target = target_rate;
    log_scale = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
    refresh_chol();
  }

  void refresh_chol() {
    Eigen::MatrixXd c = cov + 1e-12 * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() == Eigen::Success) {
      chol = llt.matrixL();
    } else {
      chol = c.diagonal().cwiseAbs().cwiseSqrt().asDiagonal();
    }
  }

  Eigen::VectorXd propose(const Eigen::VectorXd& x, Rng& rng) const {
    return x + std::exp(log_scale) * (chol * rng.normal_vector(static_cast<int>(x.size())));
  }

  // Robbins-Monro scale tuning plus streaming covariance; burn-in only.
  void adapt(const Eigen::VectorXd& x, bool accepted) {
    ++n_adapt;
    const double step = 1.0 / std::pow(static_cast<double>(n_adapt) + 10.0, 0.6);
    log_scale += step * ((accepted ? 1.0 : 0.0) - target);
    const Eigen::VectorXd delta = x - mean;
    mean += delta / static_cast<double>(n_adapt);
    if (n_adapt > 1) {
      cov += (delta * (x - mean).transpose() - cov) / static_cast<double>(n_adapt);
      cov = 0.5 * (cov + cov.transpose()).eval();
    }
    if (n_adapt >= 2 * x.size() && n_adapt % refresh_interval == 0) refresh_chol();
  }

  void count(bool accepted) {
    ++proposals;
    if (accepted) ++accepts;
  }

  double acceptance_rate() const { return proposals ? static_cast<double>(accepts) / proposals : 0.0; }
};

// ---------------------------------------------------------------------------
// warm start: longitudinal LME, then penalized Newton for (gamma, omega, alpha)
// ---------------------------------------------------------------------------

struct WarmStart {
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_cov;
  double sigma2 = 0.04;
  Eigen::Matrix2d D = Eigen::Matrix2d::Identity();
  Eigen::MatrixXd b_hat;  // n x 2
  Eigen::VectorXd gamma, omega;
  double alpha_value = 0.0, alpha_slope = 0.0, alpha_area = 0.0;
  Eigen::MatrixXd surv_cov;  // proposal covariance for [gamma, omega, alpha]
};

WarmStart longitudinal_warm_start(const JointData& data) {
  WarmStart w;
  std::vector<LmmCluster> clusters;
  clusters.reserve(data.subjects.size());
  for (const auto& sd : data.subjects) clusters.push_back({sd.Xl, sd.Zl, sd.y});
  LmmOptions opts;
  opts.column_names.push_back("intercept");
  for (const auto& c : data.spec.longitudinal_covariates) opts.column_names.push_back(c);
  const LmmFit fit = fit_lmm(clusters, opts);
  w.beta = fit.beta;
  w.beta_cov = fit.beta_cov;
  w.sigma2 = fit.sigma * fit.sigma;
  w.D = fit.D;
  if (w.D.determinant() < 1e-10) w.D += 1e-4 * Eigen::Matrix2d::Identity();
  w.b_hat = fit.blups;
  return w;
}

double nelson_aalen_constant(const JointData& data) {
  double events = 0.0, exposure = 0.0;
  for (const auto& sd : data.subjects) {
    events += sd.event;
    exposure += sd.time - sd.entry;
  }
  return std::log(std::max(events, 0.5) / std::max(exposure, 1e-6));
}

// Concave penalized fit of the survival linear predictor with random effects
// fixed at their BLUPs; the inverse Hessian seeds the adaptive proposal.
void survival_warm_start(const JointData& data, const PriorSpec& prior, WarmStart& w, double tau0) {
  const ModelSpec& spec = data.spec;
  const int Q = data.basis.size();
  const int n_om = spec.n_omega();
  const int n_al = spec.n_alpha();
  const int dim = Q + n_om + n_al;

  struct NodeSet {
    Eigen::MatrixXd F;        // K x dim  [B, xs, assoc features at b_hat]
    Eigen::VectorXd w;        // weights
    Eigen::VectorXd f_event;  // dim, valid when event
    int event = 0;
  };
  std::vector<NodeSet> nodes(data.subjects.size());
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const SubjectDesign& sd = data.subjects[i];
    const Eigen::Vector2d bi = w.b_hat.row(static_cast<int>(i)).transpose();
    const int K = sd.risk.n_nodes();
    NodeSet ns;
    ns.F.resize(K, dim);
    ns.w = sd.risk.qw;
    ns.event = sd.event;
    ns.F.leftCols(Q) = sd.risk.B;
    for (int k = 0; k < K; ++k) ns.F.block(k, Q, 1, n_om) = sd.xs.transpose();
    int col = Q + n_om;
    if (spec.assoc_value) ns.F.col(col++) = sd.risk.Xv * w.beta + sd.risk.Zv * bi;
    if (spec.assoc_slope) ns.F.col(col++).setConstant((sd.time_coef >= 0 ? w.beta[sd.time_coef] : 0.0) + bi[1]);
    if (spec.assoc_area) ns.F.col(col++) = sd.risk.Xa * w.beta + sd.risk.Za * bi;
    if (sd.event == 1) {
      ns.f_event.resize(dim);
      ns.f_event.head(Q) = sd.at_event.B.transpose();
      ns.f_event.segment(Q, n_om) = sd.xs;
      int c2 = Q + n_om;
      if (spec.assoc_value) ns.f_event[c2++] = sd.at_event.Xv.dot(w.beta) + sd.at_event.Zv.dot(bi);
      if (spec.assoc_slope) ns.f_event[c2++] = (sd.time_coef >= 0 ? w.beta[sd.time_coef] : 0.0) + bi[1];
      if (spec.assoc_area) ns.f_event[c2++] = sd.at_event.Xa.dot(w.beta) + sd.at_event.Za.dot(bi);
    }
    nodes[i] = std::move(ns);
  }

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(dim, dim);
  P.topLeftCorner(Q, Q) = tau0 * data.penalty;
  for (int j = 0; j < n_om; ++j) P(Q + j, Q + j) = 1.0 / (prior.omega_sd * prior.omega_sd);
  for (int j = 0; j < n_al; ++j) P(Q + n_om + j, Q + n_om + j) = 1.0 / (prior.alpha_sd * prior.alpha_sd);

  Eigen::VectorXd phi = Eigen::VectorXd::Zero(dim);
  phi.head(Q).setConstant(nelson_aalen_constant(data));

  auto objective = [&](const Eigen::VectorXd& v) {
    double ll = -0.5 * v.dot(P * v);
    for (const auto& ns : nodes) {
      const Eigen::VectorXd lin = ns.F * v;
      ll -= ns.w.dot(lin.array().exp().matrix());
      if (ns.event == 1) ll += ns.f_event.dot(v);
    }
    return ll;
  };

  double f_cur = objective(phi);
  Eigen::MatrixXd H = -P;
  for (int iter = 0; iter < 60; ++iter) {
    Eigen::VectorXd grad = -P * phi;
    H = -P;
    for (const auto& ns : nodes) {
      const Eigen::VectorXd lam = (ns.F * phi).array().exp() * ns.w.array();
      grad -= ns.F.transpose() * lam;
      H -= ns.F.transpose() * lam.asDiagonal() * ns.F;
      if (ns.event == 1) grad += ns.f_event;
    }
    const Eigen::VectorXd step = (-H).ldlt().solve(grad);
    if (!step.allFinite()) break;
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half) {
      const Eigen::VectorXd cand = phi + scale * step;
      const double f_new = objective(cand);
      if (std::isfinite(f_new) && f_new >= f_cur - 1e-12) {
        improved = f_new > f_cur + 1e-10;
        phi = cand;
        f_cur = f_new;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }

  w.gamma = phi.head(Q);
  w.omega = phi.segment(Q, n_om);
  int c = Q + n_om;
  if (spec.assoc_value) w.alpha_value = phi[c++];
  if (spec.assoc_slope) w.alpha_slope = phi[c++];
  if (spec.assoc_area) w.alpha_area = phi[c++];
  const Eigen::MatrixXd cov = (-H).ldlt().solve(Eigen::MatrixXd::Identity(dim, dim));
  if (cov.allFinite())
    w.surv_cov = 0.5 * (cov + cov.transpose());
  else
    w.surv_cov = 0.01 * Eigen::MatrixXd::Identity(dim, dim);
}

// ---------------------------------------------------------------------------
// one chain of the Metropolis-within-Gibbs sampler
// ---------------------------------------------------------------------------

struct SubjectCache {
  Eigen::VectorXd g;             // B gamma at risk nodes
  Eigen::VectorXd vbeta, abeta;  // design * beta at risk nodes
  Eigen::VectorXd vb, ab;        // Z * b at risk nodes
  double xs_omega = 0.0;
  double gT = 0.0, vbetaT = 0.0, abetaT = 0.0, vbT = 0.0, abT = 0.0;
  Eigen::VectorXd resid;         // y - Xl beta - Zl b
  double rss = 0.0;
  double surv_ll = 0.0;
};

// Pointers into cached (or proposed) pieces; lets block updates mix current
// and proposal components without copying node vectors.
struct CacheView {
  const Eigen::VectorXd* g = nullptr;
  const Eigen::VectorXd* vbeta = nullptr;
  const Eigen::VectorXd* abeta = nullptr;
  const Eigen::VectorXd* vb = nullptr;
  const Eigen::VectorXd* ab = nullptr;
  double gT = 0.0, vbetaT = 0.0, abetaT = 0.0, vbT = 0.0, abT = 0.0;
  double xs_omega = 0.0;

  static CacheView of(const SubjectCache& c) {
    CacheView v;
    v.g = &c.g;
    v.vbeta = &c.vbeta;
    v.abeta = &c.abeta;
    v.vb = &c.vb;
    v.ab = &c.ab;
    v.gT = c.gT;
    v.vbetaT = c.vbetaT;
    v.abetaT = c.abetaT;
    v.vbT = c.vbT;
    v.abT = c.abT;
    v.xs_omega = c.xs_omega;
    return v;
  }
};

class ChainRunner {
 public:
  ChainRunner(const JointData& data, const PriorSpec& prior, const McmcConfig& cfg, const WarmStart& warm,
              int chain_id)
      : data_(data),
        prior_(prior),
        cfg_(cfg),
        spec_(data.spec),
        rng_(Rng::substream(cfg.seed, static_cast<std::uint64_t>(chain_id))),
        n_(data.n_subjects()) {
    initialize(warm, chain_id);
  }

  void run(Eigen::Ref<Eigen::MatrixXd> theta_out, Eigen::Ref<Eigen::MatrixXd> b_out,
           Eigen::Ref<Eigen::VectorXi> iter_out, ChainDiagnostics& diag) {
    const int burnin = cfg_.burnin();
    int stored = 0;
    for (int iter = 0; iter < cfg_.n_iterations; ++iter) {
      const bool adapting = iter < burnin;
      update_beta(adapting);
      if (cfg_.merge_survival_blocks) {
        update_survival_merged(adapting);
      } else {
        update_omega_alpha(adapting);
        update_gamma(adapting);
      }
      update_random_effects(adapting);
      update_sigma2();
      update_D();
      update_tau();
      if (iter >= burnin && (iter - burnin) % cfg_.thin == 0) {
        store(theta_out, b_out, stored);
        iter_out[stored] = iter;
        ++stored;
      }
    }
    diag.acceptance_rates["beta"] = beta_block_.acceptance_rate();
    if (cfg_.merge_survival_blocks) {
      diag.acceptance_rates["survival"] = surv_block_.acceptance_rate();
    } else {
      diag.acceptance_rates["omega_alpha"] = surv_block_.acceptance_rate();
      diag.acceptance_rates["gamma"] = gamma_block_.acceptance_rate();
    }
    double acc_b = 0.0;
    for (const auto& blk : b_blocks_) acc_b += blk.acceptance_rate();
    diag.acceptance_rates["b"] = n_ ? acc_b / n_ : 0.0;
  }

 private:
  const JointData& data_;
  const PriorSpec& prior_;
  const McmcConfig& cfg_;
  const ModelSpec& spec_;
  Rng rng_;
  int n_;

  JointParams p_;
  Eigen::MatrixXd b_;  // n x 2
  std::vector<SubjectCache> cache_;
  std::vector<SubjectCache> prop_;  // proposal workspace
  double total_surv_ll_ = 0.0;
  double total_rss_ = 0.0;
  int total_obs_ = 0;

  AdaptiveBlock beta_block_, surv_block_, gamma_block_;
  std::vector<AdaptiveBlock> b_blocks_;

  void initialize(const WarmStart& warm, int chain_id) {
    p_.beta = warm.beta;
    p_.sigma2 = warm.sigma2;
    p_.D = warm.D;
    p_.omega = warm.omega;
    p_.alpha_value = warm.alpha_value;
    p_.alpha_slope = warm.alpha_slope;
    p_.alpha_area = warm.alpha_area;
    p_.gamma = warm.gamma;
    p_.tau = 10.0;
    b_ = warm.b_hat;

    // overdispersed starts; chain 0 sits at the warm start
    if (chain_id > 0 && cfg_.init_jitter > 0.0) {
      const double j = cfg_.init_jitter;
      const Eigen::VectorXd beta_se = warm.beta_cov.diagonal().cwiseSqrt();
      for (int k = 0; k < p_.beta.size(); ++k) p_.beta[k] += j * beta_se[k] * rng_.normal();
      const int Q = data_.basis.size();
      const Eigen::VectorXd se = warm.surv_cov.diagonal().cwiseSqrt();
      for (int q = 0; q < Q; ++q) p_.gamma[q] += j * se[q] * rng_.normal();
      for (int k = 0; k < p_.omega.size(); ++k) p_.omega[k] += j * se[Q + k] * rng_.normal();
      int c = Q + static_cast<int>(p_.omega.size());
      if (spec_.assoc_value) p_.alpha_value += j * se[c++] * rng_.normal();
      if (spec_.assoc_slope) p_.alpha_slope += j * se[c++] * rng_.normal();
      if (spec_.assoc_area) p_.alpha_area += j * se[c++] * rng_.normal();
      p_.sigma2 *= std::exp(0.2 * j * rng_.normal());
    }

    cache_.resize(n_);
    prop_.resize(n_);
    total_obs_ = data_.n_obs_total;
    rebuild_all_caches();
    if (!std::isfinite(total_surv_ll_) || !std::isfinite(total_rss_))
      throw NumericError("run_mcmc: non-finite posterior at initial values (chain " + std::to_string(chain_id) +
                         "); check data scaling and initial-value settings");

    beta_block_.init(static_cast<int>(p_.beta.size()), warm.beta_cov, 0.234);
    beta_block_.refresh_interval = cfg_.adaptation_interval;
    if (cfg_.merge_survival_blocks) {
      const int surv_dim = data_.basis.size() + spec_.n_omega() + spec_.n_alpha();
      surv_block_.init(surv_dim, warm.surv_cov, 0.234);
      surv_block_.refresh_interval = cfg_.adaptation_interval;
    } else {
      const int Q = data_.basis.size();
      const int d_oa = spec_.n_omega() + spec_.n_alpha();
      surv_block_.init(d_oa, warm.surv_cov.bottomRightCorner(d_oa, d_oa), 0.234);
      gamma_block_.init(Q, warm.surv_cov.topLeftCorner(Q, Q), 0.234);
      surv_block_.refresh_interval = gamma_block_.refresh_interval = cfg_.adaptation_interval;
    }
    b_blocks_.resize(n_);
    for (int i = 0; i < n_; ++i) {
      b_blocks_[i].init(2, p_.D, 0.234);
      b_blocks_[i].refresh_interval = cfg_.adaptation_interval * 4;
    }
  }

  double slope_term(const Eigen::Vector2d& bi, const Eigen::VectorXd& beta) const {
    const int tc = data_.subjects.front().time_coef;
    return (tc >= 0 ? beta[tc] : 0.0) + bi[1];
  }

  // survival log likelihood of one subject from component views
  double surv_ll_from(const SubjectDesign& sd, const CacheView& v, double alpha_value, double alpha_slope,
                      double alpha_area, const Eigen::VectorXd& beta, const Eigen::Vector2d& bi) const {
    const double constant = v.xs_omega + (spec_.assoc_slope ? alpha_slope * slope_term(bi, beta) : 0.0);
    Eigen::ArrayXd lh = v.g->array() + constant;
    if (spec_.assoc_value) lh += alpha_value * (v.vbeta->array() + v.vb->array());
    if (spec_.assoc_area) lh += alpha_area * (v.abeta->array() + v.ab->array());
    double ll = -(sd.risk.qw.array() * lh.exp()).sum();
    if (sd.event == 1) {
      double lhT = v.gT + constant;
      if (spec_.assoc_value) lhT += alpha_value * (v.vbetaT + v.vbT);
      if (spec_.assoc_area) lhT += alpha_area * (v.abetaT + v.abT);
      ll += lhT;
    }
    return ll;
  }

  void fill_gamma_cache(const SubjectDesign& sd, SubjectCache& c, const Eigen::VectorXd& gamma) const {
    c.g.noalias() = sd.risk.B * gamma;
    c.gT = sd.at_event.B.dot(gamma);
  }

  void fill_beta_cache(const SubjectDesign& sd, SubjectCache& c, const Eigen::VectorXd& beta) const {
    if (spec_.assoc_value) {
      c.vbeta.noalias() = sd.risk.Xv * beta;
      c.vbetaT = sd.at_event.Xv.dot(beta);
    }
    if (spec_.assoc_area) {
      c.abeta.noalias() = sd.risk.Xa * beta;
      c.abetaT = sd.at_event.Xa.dot(beta);
    }
  }

  void fill_b_cache(const SubjectDesign& sd, SubjectCache& c, const Eigen::Vector2d& bi) const {
    if (spec_.assoc_value) {
      c.vb.noalias() = sd.risk.Zv * bi;
      c.vbT = sd.at_event.Zv.dot(bi);
    }
    if (spec_.assoc_area) {
      c.ab.noalias() = sd.risk.Za * bi;
      c.abT = sd.at_event.Za.dot(bi);
    }
  }

  void fill_resid(const SubjectDesign& sd, SubjectCache& c, const Eigen::VectorXd& beta,
                  const Eigen::Vector2d& bi) const {
    c.resid = sd.y - sd.Xl * beta - sd.Zl * bi;
    c.rss = c.resid.squaredNorm();
  }

  void rebuild_all_caches() {
    total_surv_ll_ = 0.0;
    total_rss_ = 0.0;
    for (int i = 0; i < n_; ++i) {
      const SubjectDesign& sd = data_.subjects[i];
      SubjectCache& c = cache_[i];
      const Eigen::Vector2d bi = b_.row(i).transpose();
      fill_gamma_cache(sd, c, p_.gamma);
      fill_beta_cache(sd, c, p_.beta);
      fill_b_cache(sd, c, bi);
      c.xs_omega = sd.xs.dot(p_.omega);
      fill_resid(sd, c, p_.beta, bi);
      c.surv_ll = cfg_.prior_only
                      ? 0.0
                      : surv_ll_from(sd, CacheView::of(c), p_.alpha_value, p_.alpha_slope, p_.alpha_area, p_.beta, bi);
      total_surv_ll_ += c.surv_ll;
      total_rss_ += c.rss;
    }
  }

  double longitudinal_ll_at(double rss) const {
    return cfg_.prior_only ? 0.0 : -0.5 * (total_obs_ * (kLog2Pi + std::log(p_.sigma2)) + rss / p_.sigma2);
  }

  double beta_log_prior(const Eigen::VectorXd& beta) const {
    double lp = 0.0;
    for (int k = 0; k < beta.size(); ++k) lp += log_normal_density(beta[k], prior_.beta_sd);
    return lp;
  }

  double survival_log_prior(const Eigen::VectorXd& omega, double av, double as, double aa,
                            const Eigen::VectorXd& gamma) const {
    double lp = 0.0;
    for (int k = 0; k < omega.size(); ++k) lp += log_normal_density(omega[k], prior_.omega_sd);
    if (spec_.assoc_value) lp += log_normal_density(av, prior_.alpha_sd);
    if (spec_.assoc_slope) lp += log_normal_density(as, prior_.alpha_sd);
    if (spec_.assoc_area) lp += log_normal_density(aa, prior_.alpha_sd);
    lp += -0.5 * p_.tau * gamma.dot(data_.penalty * gamma);
    return lp;
  }

  void update_beta(bool adapting) {
    const Eigen::VectorXd prop = beta_block_.propose(p_.beta, rng_);
    const bool affects_survival = spec_.n_alpha() > 0;
    double new_rss = 0.0, new_surv = 0.0;
    if (!cfg_.prior_only) {
      for (int i = 0; i < n_; ++i) {
        const SubjectDesign& sd = data_.subjects[i];
        SubjectCache& pc = prop_[i];
        const Eigen::Vector2d bi = b_.row(i).transpose();
        fill_resid(sd, pc, prop, bi);
        new_rss += pc.rss;
        if (affects_survival) {
          fill_beta_cache(sd, pc, prop);
          CacheView v = CacheView::of(cache_[i]);
          if (spec_.assoc_value) {
            v.vbeta = &pc.vbeta;
            v.vbetaT = pc.vbetaT;
          }
          if (spec_.assoc_area) {
            v.abeta = &pc.abeta;
            v.abetaT = pc.abetaT;
          }
          pc.surv_ll = surv_ll_from(sd, v, p_.alpha_value, p_.alpha_slope, p_.alpha_area, prop, bi);
        } else {
          pc.surv_ll = cache_[i].surv_ll;
        }
        new_surv += pc.surv_ll;
      }
    }
    const double log_num = longitudinal_ll_at(new_rss) + (cfg_.prior_only ? 0.0 : new_surv) + beta_log_prior(prop);
    const double log_den =
        longitudinal_ll_at(total_rss_) + (cfg_.prior_only ? 0.0 : total_surv_ll_) + beta_log_prior(p_.beta);
    const bool accept = mh_accept(log_num - log_den);
    if (accept) {
      p_.beta = prop;
      if (!cfg_.prior_only) {
        for (int i = 0; i < n_; ++i) {
          SubjectCache& c = cache_[i];
          SubjectCache& pc = prop_[i];
          c.resid.swap(pc.resid);
          c.rss = pc.rss;
          if (spec_.assoc_value) {
            c.vbeta.swap(pc.vbeta);
            c.vbetaT = pc.vbetaT;
          }
          if (spec_.assoc_area) {
            c.abeta.swap(pc.abeta);
            c.abetaT = pc.abetaT;
          }
          c.surv_ll = pc.surv_ll;
        }
        total_rss_ = new_rss;
        total_surv_ll_ = new_surv;
      }
    }
    if (adapting)
      beta_block_.adapt(p_.beta, accept);
    else
      beta_block_.count(accept);
  }

  void unpack_survival(const Eigen::VectorXd& phi, Eigen::VectorXd& gamma, Eigen::VectorXd& omega, double& av,
                       double& as, double& aa) const {
    const int Q = data_.basis.size();
    const int n_om = spec_.n_omega();
    gamma = phi.head(Q);
    omega = phi.segment(Q, n_om);
    int c = Q + n_om;
    av = spec_.assoc_value ? phi[c++] : 0.0;
    as = spec_.assoc_slope ? phi[c++] : 0.0;
    aa = spec_.assoc_area ? phi[c++] : 0.0;
  }

  Eigen::VectorXd pack_survival() const {
    const int Q = data_.basis.size();
    const int n_om = spec_.n_omega();
    Eigen::VectorXd phi(Q + n_om + spec_.n_alpha());
    phi.head(Q) = p_.gamma;
    phi.segment(Q, n_om) = p_.omega;
    int c = Q + n_om;
    if (spec_.assoc_value) phi[c++] = p_.alpha_value;
    if (spec_.assoc_slope) phi[c++] = p_.alpha_slope;
    if (spec_.assoc_area) phi[c++] = p_.alpha_area;
    return phi;
  }

  void update_survival_merged(bool adapting) {
    const Eigen::VectorXd prop = surv_block_.propose(pack_survival(), rng_);
    Eigen::VectorXd gamma_p, omega_p;
    double av, as, aa;
    unpack_survival(prop, gamma_p, omega_p, av, as, aa);

    double new_surv = 0.0;
    if (!cfg_.prior_only) {
      for (int i = 0; i < n_; ++i) {
        const SubjectDesign& sd = data_.subjects[i];
        SubjectCache& pc = prop_[i];
        fill_gamma_cache(sd, pc, gamma_p);
        pc.xs_omega = sd.xs.dot(omega_p);
        CacheView v = CacheView::of(cache_[i]);
        v.g = &pc.g;
        v.gT = pc.gT;
        v.xs_omega = pc.xs_omega;
        pc.surv_ll = surv_ll_from(sd, v, av, as, aa, p_.beta, b_.row(i).transpose());
        new_surv += pc.surv_ll;
      }
    }
    const double log_num = (cfg_.prior_only ? 0.0 : new_surv) + survival_log_prior(omega_p, av, as, aa, gamma_p);
    const double log_den = (cfg_.prior_only ? 0.0 : total_surv_ll_) +
                           survival_log_prior(p_.omega, p_.alpha_value, p_.alpha_slope, p_.alpha_area, p_.gamma);
    const bool accept = mh_accept(log_num - log_den);
    if (accept) {
      p_.gamma = gamma_p;
      p_.omega = omega_p;
      p_.alpha_value = av;
      p_.alpha_slope = as;
      p_.alpha_area = aa;
      if (!cfg_.prior_only) {
        for (int i = 0; i < n_; ++i) {
          cache_[i].g.swap(prop_[i].g);
          cache_[i].gT = prop_[i].gT;
          cache_[i].xs_omega = prop_[i].xs_omega;
          cache_[i].surv_ll = prop_[i].surv_ll;
        }
        total_surv_ll_ = new_surv;
      }
    }
    if (adapting)
      surv_block_.adapt(pack_survival(), accept);
    else
      surv_block_.count(accept);
  }

  void update_omega_alpha(bool adapting) {
    const int n_om = spec_.n_omega();
    Eigen::VectorXd cur(n_om + spec_.n_alpha());
    cur.head(n_om) = p_.omega;
    int c = n_om;
    if (spec_.assoc_value) cur[c++] = p_.alpha_value;
    if (spec_.assoc_slope) cur[c++] = p_.alpha_slope;
    if (spec_.assoc_area) cur[c++] = p_.alpha_area;
    const Eigen::VectorXd prop = surv_block_.propose(cur, rng_);
    const Eigen::VectorXd omega_p = prop.head(n_om);
    c = n_om;
    const double av = spec_.assoc_value ? prop[c++] : 0.0;
    const double as = spec_.assoc_slope ? prop[c++] : 0.0;
    const double aa = spec_.assoc_area ? prop[c++] : 0.0;

    double new_surv = 0.0;
    if (!cfg_.prior_only) {
      for (int i = 0; i < n_; ++i) {
        const SubjectDesign& sd = data_.subjects[i];
        CacheView v = CacheView::of(cache_[i]);
        v.xs_omega = sd.xs.dot(omega_p);
        prop_[i].xs_omega = v.xs_omega;
        prop_[i].surv_ll = surv_ll_from(sd, v, av, as, aa, p_.beta, b_.row(i).transpose());
        new_surv += prop_[i].surv_ll;
      }
    }
    const double log_num = (cfg_.prior_only ? 0.0 : new_surv) + survival_log_prior(omega_p, av, as, aa, p_.gamma);
    const double log_den = (cfg_.prior_only ? 0.0 : total_surv_ll_) +
                           survival_log_prior(p_.omega, p_.alpha_value, p_.alpha_slope, p_.alpha_area, p_.gamma);
    const bool accept = mh_accept(log_num - log_den);
    if (accept) {
      p_.omega = omega_p;
      p_.alpha_value = av;
      p_.alpha_slope = as;
      p_.alpha_area = aa;
      if (!cfg_.prior_only) {
        for (int i = 0; i < n_; ++i) {
          cache_[i].xs_omega = prop_[i].xs_omega;
          cache_[i].surv_ll = prop_[i].surv_ll;
        }
        total_surv_ll_ = new_surv;
      }
    }
    if (adapting) {
      Eigen::VectorXd now(n_om + spec_.n_alpha());
      now.head(n_om) = p_.omega;
      int c2 = n_om;
      if (spec_.assoc_value) now[c2++] = p_.alpha_value;
      if (spec_.assoc_slope) now[c2++] = p_.alpha_slope;
      if (spec_.assoc_area) now[c2++] = p_.alpha_area;
      surv_block_.adapt(now, accept);
    } else {
      surv_block_.count(accept);
    }
  }

  void update_gamma(bool adapting) {
    const Eigen::VectorXd prop = gamma_block_.propose(p_.gamma, rng_);
    double new_surv = 0.0;
    if (!cfg_.prior_only) {
      for (int i = 0; i < n_; ++i) {
        const SubjectDesign& sd = data_.subjects[i];
        SubjectCache& pc = prop_[i];
        fill_gamma_cache(sd, pc, prop);
        CacheView v = CacheView::of(cache_[i]);
        v.g = &pc.g;
        v.gT = pc.gT;
        pc.surv_ll = surv_ll_from(sd, v, p_.alpha_value, p_.alpha_slope, p_.alpha_area, p_.beta,
                                  b_.row(i).transpose());
        new_surv += pc.surv_ll;
      }
    }
    const double prior_num = -0.5 * p_.tau * prop.dot(data_.penalty * prop);
    const double prior_den = -0.5 * p_.tau * p_.gamma.dot(data_.penalty * p_.gamma);
    const bool accept = mh_accept((cfg_.prior_only ? 0.0 : new_surv - total_surv_ll_) + prior_num - prior_den);
    if (accept) {
      p_.gamma = prop;
      if (!cfg_.prior_only) {
        for (int i = 0; i < n_; ++i) {
          cache_[i].g.swap(prop_[i].g);
          cache_[i].gT = prop_[i].gT;
          cache_[i].surv_ll = prop_[i].surv_ll;
        }
        total_surv_ll_ = new_surv;
      }
    }
    if (adapting)
      gamma_block_.adapt(p_.gamma, accept);
    else
      gamma_block_.count(accept);
  }

  void update_random_effects(bool adapting) {
    const Eigen::Matrix2d Dinv = p_.D.inverse();
    const double logdetD = std::log(p_.D.determinant());
    for (int i = 0; i < n_; ++i) {
      const SubjectDesign& sd = data_.subjects[i];
      const Eigen::Vector2d cur = b_.row(i).transpose();
      const Eigen::Vector2d prop = b_blocks_[i].propose(cur, rng_);

      SubjectCache& pc = prop_[i];
      double new_surv_i = 0.0, new_rss_i = 0.0;
      double ll_new = 0.0, ll_cur = 0.0;
      if (!cfg_.prior_only) {
        fill_b_cache(sd, pc, prop);
        fill_resid(sd, pc, p_.beta, prop);
        new_rss_i = pc.rss;
        CacheView v = CacheView::of(cache_[i]);
        if (spec_.assoc_value) {
          v.vb = &pc.vb;
          v.vbT = pc.vbT;
        }
        if (spec_.assoc_area) {
          v.ab = &pc.ab;
          v.abT = pc.abT;
        }
        new_surv_i = surv_ll_from(sd, v, p_.alpha_value, p_.alpha_slope, p_.alpha_area, p_.beta, prop);
        const double n_i = static_cast<double>(sd.y.size());
        ll_new = -0.5 * (n_i * (kLog2Pi + std::log(p_.sigma2)) + new_rss_i / p_.sigma2) + new_surv_i;
        ll_cur = -0.5 * (n_i * (kLog2Pi + std::log(p_.sigma2)) + cache_[i].rss / p_.sigma2) + cache_[i].surv_ll;
      }
      ll_new += -0.5 * (2.0 * kLog2Pi + logdetD + prop.dot(Dinv * prop));
      ll_cur += -0.5 * (2.0 * kLog2Pi + logdetD + cur.dot(Dinv * cur));
      const bool accept = mh_accept(ll_new - ll_cur);
      if (accept) {
        b_.row(i) = prop.transpose();
        if (!cfg_.prior_only) {
          total_rss_ += new_rss_i - cache_[i].rss;
          total_surv_ll_ += new_surv_i - cache_[i].surv_ll;
          cache_[i].resid.swap(pc.resid);
          cache_[i].rss = new_rss_i;
          cache_[i].surv_ll = new_surv_i;
          if (spec_.assoc_value) {
            cache_[i].vb.swap(pc.vb);
            cache_[i].vbT = pc.vbT;
          }
          if (spec_.assoc_area) {
            cache_[i].ab.swap(pc.ab);
            cache_[i].abT = pc.abT;
          }
        }
      }
      if (adapting)
        b_blocks_[i].adapt(b_.row(i).transpose(), accept);
      else
        b_blocks_[i].count(accept);
    }
  }

  void update_sigma2() {
    if (cfg_.prior_only) {
      p_.sigma2 = rng_.inverse_gamma(prior_.sigma2_a, prior_.sigma2_b);
      return;
    }
    p_.sigma2 = gibbs_sigma2(prior_.sigma2_a, prior_.sigma2_b, total_rss_, total_obs_, rng_);
  }

  void update_D() {
    if (cfg_.prior_only) {
      p_.D = rng_.inverse_wishart(prior_.wishart_df, prior_.wishart_scale);
      return;
    }
    p_.D = gibbs_random_effects_cov(prior_.wishart_df, prior_.wishart_scale, b_, rng_);
  }

  void update_tau() { p_.tau = gibbs_tau(prior_.tau_a, prior_.tau_b, p_.gamma, data_.penalty, rng_); }

  bool mh_accept(double log_ratio) {
    if (std::isnan(log_ratio)) return false;
    if (log_ratio >= 0.0) return true;
    return std::log(rng_.uniform()) < log_ratio;
  }

  void store(Eigen::Ref<Eigen::MatrixXd> theta_out, Eigen::Ref<Eigen::MatrixXd> b_out, int row) {
    int k = 0;
    for (int j = 0; j < p_.beta.size(); ++j) theta_out(row, k++) = p_.beta[j];
    theta_out(row, k++) = p_.sigma2;
    theta_out(row, k++) = p_.D(0, 0);
    theta_out(row, k++) = p_.D(0, 1);
    theta_out(row, k++) = p_.D(1, 1);
    for (int j = 0; j < p_.omega.size(); ++j) theta_out(row, k++) = p_.omega[j];
    if (spec_.assoc_value) theta_out(row, k++) = p_.alpha_value;
    if (spec_.assoc_slope) theta_out(row, k++) = p_.alpha_slope;
    if (spec_.assoc_area) theta_out(row, k++) = p_.alpha_area;
    for (int j = 0; j < p_.gamma.size(); ++j) theta_out(row, k++) = p_.gamma[j];
    theta_out(row, k++) = p_.tau;
    for (int i = 0; i < n_; ++i) {
      b_out(row, 2 * i) = b_(i, 0);
      b_out(row, 2 * i + 1) = b_(i, 1);
    }
  }
};

}  // namespace

PosteriorDraws run_mcmc(const Cohort& cohort, const ModelSpec& spec, const PriorSpec& prior,
                        const McmcConfig& config) {
  const SplineBasis basis = default_basis(cohort, spec);
  const JointData data = build_joint_data(cohort, spec, basis, config.quad_nodes);
  return run_mcmc(data, prior, config);
}

PosteriorDraws run_mcmc(const JointData& data, const PriorSpec& prior, const McmcConfig& config) {
  if (config.burnin() >= config.n_iterations) throw ConfigError("mcmc: burn-in must be smaller than iterations");
  if (config.thin < 1) throw ConfigError("mcmc: thin must be >= 1");
  if (config.n_chains < 1) throw ConfigError("mcmc: need at least one chain");
  if (data.n_subjects() == 0) throw DataError("mcmc: empty cohort");

  WarmStart warm;
  if (config.prior_only || !config.warm_start) {
    const int p = data.spec.n_beta();
    warm.beta = Eigen::VectorXd::Zero(p);
    warm.beta_cov = Eigen::MatrixXd::Identity(p, p);
    warm.sigma2 = 1.0;
    warm.D = Eigen::Matrix2d::Identity();
    warm.b_hat = Eigen::MatrixXd::Zero(data.n_subjects(), 2);
    warm.omega = Eigen::VectorXd::Zero(data.spec.n_omega());
    warm.gamma =
        Eigen::VectorXd::Constant(data.basis.size(), config.prior_only ? 0.0 : nelson_aalen_constant(data));
    const int sdim = data.basis.size() + data.spec.n_omega() + data.spec.n_alpha();
    warm.surv_cov = Eigen::MatrixXd::Identity(sdim, sdim);
  } else {
    warm = longitudinal_warm_start(data);
    survival_warm_start(data, prior, warm, 10.0);
  }

  const int per_chain = (config.n_iterations - config.burnin() + config.thin - 1) / config.thin;
  const auto names = parameter_names(data.spec, data.basis.size());

  PosteriorDraws draws;
  draws.names = names;
  draws.n_chains = config.n_chains;
  draws.per_chain = per_chain;
  draws.theta.resize(config.n_chains * per_chain, static_cast<int>(names.size()));
  draws.b.resize(config.n_chains * per_chain, 2 * data.n_subjects());
  draws.chain.resize(config.n_chains * per_chain);
  draws.iteration.resize(config.n_chains * per_chain);
  draws.chain_info.resize(config.n_chains);
  for (int i = 0; i < data.n_subjects(); ++i) {
    const std::string sid =
        i < static_cast<int>(data.subject_ids.size()) ? data.subject_ids[i] : std::to_string(i + 1);
    draws.b_names.push_back("b." + sid + ".0");
    draws.b_names.push_back("b." + sid + ".1");
  }

  auto run_one = [&](int c) {
    ChainRunner runner(data, prior, config, warm, c);
    ChainDiagnostics diag;
    Eigen::VectorXi iters(per_chain);
    runner.run(draws.theta.middleRows(c * per_chain, per_chain), draws.b.middleRows(c * per_chain, per_chain), iters,
               diag);
    for (int r = 0; r < per_chain; ++r) {
      draws.chain[c * per_chain + r] = c;
      draws.iteration[c * per_chain + r] = iters[r];
    }
    draws.chain_info[c] = std::move(diag);
  };

  const int max_threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
  if (config.n_chains == 1 || max_threads <= 1) {
    for (int c = 0; c < config.n_chains; ++c) run_one(c);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(config.n_chains);
    for (int c = 0; c < config.n_chains; ++c) {
      pool.emplace_back([&, c]() {
        try {
          run_one(c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
      if (static_cast<int>(pool.size()) == max_threads || c == config.n_chains - 1) {
        for (auto& t : pool) t.join();
        pool.clear();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return draws;
}

}  // namespace jm
