#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <vector>

#include "jm/util.hpp"

namespace jm {

struct NelderMeadOptions {
  int max_iterations = 2000;
  double f_tolerance = 1e-12;
  double x_tolerance = 1e-10;
  double initial_step = 0.25;
  int restarts = 2;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Downhill simplex minimization of f.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                                    NelderMeadOptions opts = {}) {
  const int n = static_cast<int>(x0.size());
  NelderMeadResult result;
  result.x = x0;
  result.f = f(x0);

  for (int restart = 0; restart <= opts.restarts; ++restart) {
    std::vector<Eigen::VectorXd> pts(n + 1, result.x);
    std::vector<double> fv(n + 1);
    fv[0] = result.f;
    for (int i = 0; i < n; ++i) {
      pts[i + 1][i] += opts.initial_step * (std::abs(pts[i + 1][i]) > 1.0 ? std::abs(pts[i + 1][i]) : 1.0);
      fv[i + 1] = f(pts[i + 1]);
    }
    auto order = [&]() {
      std::vector<int> idx(n + 1);
      for (int i = 0; i <= n; ++i) idx[i] = i;
      std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
      std::vector<Eigen::VectorXd> p2(n + 1);
      std::vector<double> f2(n + 1);
      for (int i = 0; i <= n; ++i) {
        p2[i] = pts[idx[i]];
        f2[i] = fv[idx[i]];
      }
      pts = std::move(p2);
      fv = std::move(f2);
    };
    order();

    for (int it = 0; it < opts.max_iterations; ++it) {
      ++result.iterations;
      if (std::abs(fv[n] - fv[0]) < opts.f_tolerance &&
          (pts[n] - pts[0]).cwiseAbs().maxCoeff() < opts.x_tolerance) {
        result.converged = true;
        break;
      }
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < n; ++i) centroid += pts[i];
      centroid /= n;

      const Eigen::VectorXd xr = centroid + (centroid - pts[n]);
      const double fr = f(xr);
      if (fr < fv[0]) {
        const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[n]);
        const double fe = f(xe);
        if (fe < fr) {
          pts[n] = xe;
          fv[n] = fe;
        } else {
          pts[n] = xr;
          fv[n] = fr;
        }
      } else if (fr < fv[n - 1]) {
        pts[n] = xr;
        fv[n] = fr;
      } else {
        const Eigen::VectorXd xc = centroid + 0.5 * (pts[n] - centroid);
        const double fc = f(xc);
        if (fc < fv[n]) {
          pts[n] = xc;
          fv[n] = fc;
        } else {
          for (int i = 1; i <= n; ++i) {
            pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
            fv[i] = f(pts[i]);
          }
        }
      }
      order();
    }
    result.x = pts[0];
    result.f = fv[0];
  }
  return result;
}

}  // namespace jm
