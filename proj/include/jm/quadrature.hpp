#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <vector>

#include "jm/util.hpp"

namespace jm {

struct QuadratureRule {
  Eigen::VectorXd nodes;    // on (-1, 1)
  Eigen::VectorXd weights;  // sum to 2
};

// Gauss-Legendre nodes/weights by Newton iteration on P_n.
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw NumericError("gauss_legendre: need n >= 1");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  return rule;
}

inline const QuadratureRule& cached_gauss_legendre(int n) {
  static std::map<int, QuadratureRule> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, gauss_legendre(n)).first;
  return it->second;
}

// Composite rule over [a, b] split at the supplied interior breakpoints.
// Returns node/weight pairs on the original scale.
inline void composite_nodes(double a, double b, const std::vector<double>& breaks, int nodes_per_segment,
                            std::vector<double>& nodes_out, std::vector<double>& weights_out) {
  nodes_out.clear();
  weights_out.clear();
  if (b <= a) return;
  std::vector<double> edges;
  edges.push_back(a);
  for (double t : breaks) {
    if (t > a && t < b) edges.push_back(t);
  }
  edges.push_back(b);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  const QuadratureRule& rule = cached_gauss_legendre(nodes_per_segment);
  for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
    const double lo = edges[s], hi = edges[s + 1];
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    if (half <= 0.0) continue;
    for (int k = 0; k < nodes_per_segment; ++k) {
      nodes_out.push_back(mid + half * rule.nodes[k]);
      weights_out.push_back(half * rule.weights[k]);
    }
  }
}

}  // namespace jm
