#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

#include "jm/util.hpp"

namespace jm {

// Deterministic RNG wrapper. All distributions are implemented here rather
// than through std:: distribution objects so that draws are bit-identical
// for a given seed regardless of standard-library internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Derives an independent substream: splitmix64 of (seed, index).
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
  }

  // Uniform on (0,1), never returns 0 or 1.
  double uniform() {
    const std::uint64_t u = engine_();
    return (static_cast<double>(u >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Marsaglia polar method without state carry-over.
  double normal() {
    while (true) {
      const double u = 2.0 * uniform() - 1.0;
      const double v = 2.0 * uniform() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Marsaglia-Tsang; shape > 0, returns Gamma(shape, rate) with mean shape/rate.
  double gamma(double shape, double rate) {
    if (shape <= 0.0 || rate <= 0.0) throw NumericError("gamma: shape and rate must be > 0");
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  // Inverse-gamma with density b^a/Gamma(a) x^{-a-1} exp(-b/x).
  double inverse_gamma(double a, double b) { return 1.0 / gamma(a, b); }

  int poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
      const double limit = std::exp(-mean);
      double prod = uniform();
      int k = 0;
      while (prod > limit) {
        prod *= uniform();
        ++k;
      }
      return k;
    }
    // Normal approximation for large means, clamped at zero.
    const int k = static_cast<int>(std::lround(mean + std::sqrt(mean) * normal()));
    return k < 0 ? 0 : k;
  }

  bool bernoulli(double p) { return uniform() < p; }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z[i] = normal();
    return z;
  }

  // Draw from N(mean, cov) via the lower-triangular factor of cov.
  Eigen::VectorXd mvnormal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericError("mvnormal: covariance not positive definite");
    return mean + llt.matrixL() * normal_vector(static_cast<int>(mean.size()));
  }

  // Wishart(nu, scale) via the Bartlett decomposition; E[W] = nu * scale.
  Eigen::MatrixXd wishart(double nu, const Eigen::MatrixXd& scale) {
    const int d = static_cast<int>(scale.rows());
    if (nu <= d - 1) throw NumericError("wishart: require nu > d - 1");
    Eigen::LLT<Eigen::MatrixXd> llt(scale);
    if (llt.info() != Eigen::Success) throw NumericError("wishart: scale not positive definite");
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      A(i, i) = std::sqrt(2.0 * gamma(0.5 * (nu - i), 1.0));
      for (int j = 0; j < i; ++j) A(i, j) = normal();
    }
    const Eigen::MatrixXd LA = llt.matrixL() * A;
    return LA * LA.transpose();
  }

  // Inverse-Wishart(nu, S): W ~ Wishart(nu, S^{-1}), return W^{-1}.
  Eigen::MatrixXd inverse_wishart(double nu, const Eigen::MatrixXd& S) {
    const Eigen::MatrixXd W = wishart(nu, S.inverse());
    return W.inverse();
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace jm
