#include "jm/lmm.hpp"

#include <cmath>

#include "jm/optim.hpp"
#include "jm/util.hpp"

namespace jm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct CrossProducts {
  Eigen::MatrixXd XtX, XtZ;
  Eigen::Matrix2d ZtZ;
  Eigen::VectorXd Xty;
  Eigen::Vector2d Zty;
  double yty = 0.0;
  int n = 0;
};

struct ProfiledState {
  Eigen::VectorXd beta;
  Eigen::MatrixXd info;   // sum X' V^-1 X
  double loglik = 0.0;
};

// theta = (log(sigma - floor), log L00, L10, log L11), D = L L'.
void unpack(const Eigen::VectorXd& theta, const LmmOptions& opts, double& sigma, Eigen::Matrix2d& D) {
  int k = 0;
  if (opts.fixed_sigma) {
    sigma = *opts.fixed_sigma;
  } else {
    sigma = opts.sigma_floor + std::exp(std::clamp(theta[k++], -30.0, 30.0));
  }
  Eigen::Matrix2d L = Eigen::Matrix2d::Zero();
  L(0, 0) = std::exp(std::clamp(theta[k], -30.0, 30.0));
  L(1, 0) = std::clamp(theta[k + 1], -1e6, 1e6);
  L(1, 1) = std::exp(std::clamp(theta[k + 2], -30.0, 30.0));
  D = L * L.transpose();
}

ProfiledState profiled_loglik(const std::vector<CrossProducts>& cp, double sigma, const Eigen::Matrix2d& D) {
  const int p = static_cast<int>(cp.front().XtX.rows());
  const double s2 = sigma * sigma;
  const double inv_s2 = 1.0 / s2;
  const Eigen::Matrix2d Dinv = D.inverse();
  const double logdetD = std::log(D.determinant());

  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  double quad_yy = 0.0;
  double logdet = 0.0;
  int total_n = 0;
  for (const auto& c : cp) {
    const Eigen::Matrix2d M = Dinv + inv_s2 * c.ZtZ;
    const Eigen::Matrix2d Minv = M.inverse();
    logdet += c.n * std::log(s2) + logdetD + std::log(M.determinant());
    const Eigen::MatrixXd XtZM = c.XtZ * Minv;  // p x 2
    info += inv_s2 * c.XtX - inv_s2 * inv_s2 * XtZM * c.XtZ.transpose();
    rhs += inv_s2 * c.Xty - inv_s2 * inv_s2 * XtZM * c.Zty;
    quad_yy += inv_s2 * c.yty - inv_s2 * inv_s2 * c.Zty.dot(Minv * c.Zty);
    total_n += c.n;
  }
  ProfiledState st;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  st.beta = ldlt.solve(rhs);
  st.info = info;
  const double quad = quad_yy - st.beta.dot(rhs);
  st.loglik = -0.5 * (total_n * kLog2Pi + logdet + quad);
  return st;
}

}  // namespace

LmmFit fit_lmm(const std::vector<LmmCluster>& clusters, const LmmOptions& options) {
  if (clusters.empty()) throw DataError("fit_lmm: no clusters");
  const int p = static_cast<int>(clusters.front().X.cols());

  std::vector<CrossProducts> cp;
  cp.reserve(clusters.size());
  double y_mean = 0.0, y_sq = 0.0;
  int total_n = 0;
  for (const auto& c : clusters) {
    if (c.X.cols() != p) throw DataError("fit_lmm: inconsistent design widths");
    if (c.X.rows() != c.y.size() || c.Z.rows() != c.y.size() || c.Z.cols() != 2)
      throw DataError("fit_lmm: inconsistent cluster shapes");
    CrossProducts x;
    x.XtX = c.X.transpose() * c.X;
    x.XtZ = c.X.transpose() * c.Z;
    x.ZtZ = c.Z.transpose() * c.Z;
    x.Xty = c.X.transpose() * c.y;
    x.Zty = c.Z.transpose() * c.y;
    x.yty = c.y.squaredNorm();
    x.n = static_cast<int>(c.y.size());
    total_n += x.n;
    y_mean += c.y.sum();
    y_sq += x.yty;
    cp.push_back(std::move(x));
  }
  y_mean /= total_n;
  const double y_sd = std::sqrt(std::max(1e-12, y_sq / total_n - y_mean * y_mean));

  // identifiability check on the pooled fixed-effect design
  {
    Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(p, p);
    for (const auto& c : cp) XtX += c.XtX;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(XtX);
    lu.setThreshold(1e-10);
    if (lu.rank() < p) {
      std::string col = "?";
      // name the first column whose removal restores full rank
      for (int j = 0; j < p; ++j) {
        Eigen::MatrixXd sub(p - 1, p - 1);
        int rr = 0;
        for (int r = 0; r < p; ++r) {
          if (r == j) continue;
          int cc = 0;
          for (int c2 = 0; c2 < p; ++c2) {
            if (c2 == j) continue;
            sub(rr, cc++) = XtX(r, c2);
          }
          ++rr;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu2(sub);
        lu2.setThreshold(1e-10);
        if (lu2.rank() == p - 1) {
          col = j < static_cast<int>(options.column_names.size()) ? options.column_names[j]
                                                                  : "column " + std::to_string(j);
          break;
        }
      }
      throw DataError("fit_lmm: fixed-effect design is rank deficient; term not identified: " + col);
    }
  }

  const int n_theta = (options.fixed_sigma ? 0 : 1) + 3;
  Eigen::VectorXd theta0(n_theta);
  int k = 0;
  if (!options.fixed_sigma) theta0[k++] = std::log(std::max(0.5 * y_sd, 1e-4));
  theta0[k] = std::log(std::max(0.5 * y_sd, 1e-4));
  theta0[k + 1] = 0.0;
  theta0[k + 2] = std::log(std::max(0.1 * y_sd, 1e-4));

  auto objective = [&](const Eigen::VectorXd& theta) {
    double sigma;
    Eigen::Matrix2d D;
    unpack(theta, options, sigma, D);
    if (!(D.determinant() > 0.0) || !std::isfinite(D.determinant())) return 1e100;
    const ProfiledState st = profiled_loglik(cp, sigma, D);
    return std::isfinite(st.loglik) ? -st.loglik : 1e100;
  };

  NelderMeadOptions nm;
  nm.max_iterations = options.max_iterations;
  const NelderMeadResult opt = nelder_mead(objective, theta0, nm);

  double sigma;
  Eigen::Matrix2d D;
  unpack(opt.x, options, sigma, D);
  const ProfiledState st = profiled_loglik(cp, sigma, D);

  LmmFit fit;
  fit.beta = st.beta;
  fit.beta_cov = st.info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.sigma = sigma;
  fit.D = D;
  fit.loglik = st.loglik;
  fit.blups.resize(static_cast<int>(cp.size()), 2);
  const double inv_s2 = 1.0 / (sigma * sigma);
  const Eigen::Matrix2d Dinv = D.inverse();
  for (std::size_t i = 0; i < cp.size(); ++i) {
    const Eigen::Matrix2d M = Dinv + inv_s2 * cp[i].ZtZ;
    const Eigen::Vector2d ztr = cp[i].Zty - cp[i].XtZ.transpose() * fit.beta;
    fit.blups.row(i) = (M.inverse() * (inv_s2 * ztr)).transpose();
  }
  return fit;
}

}  // namespace jm
