#pragma once

// Gauss-Jacobi collocation for Beta-distributed uncertain parameters.
//
// Nodes and weights come from the Golub-Welsch construction: the Jacobi
// recurrence for the weight (1-u)^a (1+u)^b on [-1,1] is assembled into a
// symmetric tridiagonal matrix whose eigenvalues are the nodes and whose
// squared first eigenvector components are the weights. A Beta(alpha, beta)
// density on [0,1] corresponds to a = beta-1, b = alpha-1 under z = (u+1)/2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "epiforge/error.hpp"

namespace epiforge {

struct BetaSpec {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0))
      throw std::invalid_argument("BetaSpec: shape parameters must be positive");
  }
  double mean() const { return alpha / (alpha + beta); }

  /// E[z^k] = prod_{j<k} (alpha+j)/(alpha+beta+j).
  double raw_moment(int k) const {
    double m = 1.0;
    for (int j = 0; j < k; ++j) m *= (alpha + j) / (alpha + beta + j);
    return m;
  }
};

struct UncertaintyGrid {
  BetaSpec spec;
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

namespace detail {

// Implicit-shift QL on a symmetric tridiagonal matrix. On return `diag` holds
// the eigenvalues and `first_row` the first component of each eigenvector.
// `offdiag[i]` couples rows i and i+1; its last entry is scratch.
inline void tridiagonal_ql(std::vector<double>& diag, std::vector<double>& offdiag,
                           std::vector<double>& first_row, double tol = 1e-14) {
  const int n = static_cast<int>(diag.size());
  offdiag.resize(n, 0.0);
  offdiag[n - 1] = 0.0;
  first_row.assign(n, 0.0);
  first_row[0] = 1.0;

  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m = l;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(diag[m]) + std::abs(diag[m + 1]);
        if (std::abs(offdiag[m]) <= tol * dd) break;
      }
      if (m == l) break;
      if (++iter > 200) throw Error("tridiagonal_ql: no convergence");

      double g = (diag[l + 1] - diag[l]) / (2.0 * offdiag[l]);
      double r = std::hypot(g, 1.0);
      g = diag[m] - diag[l] + offdiag[l] / (g + std::copysign(r, g));
      double s = 1.0, c = 1.0, p = 0.0;
      int i = m - 1;
      bool underflow = false;
      for (; i >= l; --i) {
        const double f = s * offdiag[i];
        const double b = c * offdiag[i];
        r = std::hypot(f, g);
        offdiag[i + 1] = r;
        if (r == 0.0) {
          diag[i + 1] -= p;
          offdiag[m] = 0.0;
          underflow = true;
          break;
        }
        s = f / r;
        c = g / r;
        g = diag[i + 1] - p;
        r = (diag[i] - g) * s + 2.0 * c * b;
        p = s * r;
        diag[i + 1] = g + p;
        g = c * r - b;
        const double z1 = first_row[i + 1];
        first_row[i + 1] = s * first_row[i] + c * z1;
        first_row[i] = c * first_row[i] - s * z1;
      }
      if (underflow) continue;
      diag[l] -= p;
      offdiag[l] = g;
      offdiag[m] = 0.0;
    } while (m != l);
  }
}

// Monic Jacobi recurrence coefficients for weight (1-u)^a (1+u)^b.
inline double jacobi_alpha(int n, double a, double b) {
  if (n == 0) return (b - a) / (a + b + 2.0);
  const double s = 2.0 * n + a + b;
  return (b * b - a * a) / (s * (s + 2.0));
}

inline double jacobi_beta(int n, double a, double b) {
  if (n == 1) {
    const double s = 2.0 + a + b;
    return 4.0 * (1.0 + a) * (1.0 + b) / (s * s * (s + 1.0));
  }
  const double s = 2.0 * n + a + b;
  return 4.0 * n * (n + a) * (n + b) * (n + a + b) / (s * s * (s + 1.0) * (s - 1.0));
}

}  // namespace detail

/// Gauss-Jacobi rule with `m` points, exact for polynomials of degree 2m-1
/// against the Beta(spec.alpha, spec.beta) density.
inline UncertaintyGrid build_grid(const BetaSpec& spec, int m) {
  spec.validate();
  if (m < 1) throw std::invalid_argument("build_grid: need at least one node");

  const double a = spec.beta - 1.0;
  const double b = spec.alpha - 1.0;
  std::vector<double> diag(m), off(m, 0.0), first;
  for (int i = 0; i < m; ++i) diag[i] = detail::jacobi_alpha(i, a, b);
  for (int i = 1; i < m; ++i) off[i - 1] = std::sqrt(detail::jacobi_beta(i, a, b));
  detail::tridiagonal_ql(diag, off, first);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return diag[i] < diag[j]; });

  UncertaintyGrid grid{spec, {}, {}};
  grid.nodes.reserve(m);
  grid.weights.reserve(m);
  for (auto i : order) {
    grid.nodes.push_back(0.5 * (diag[i] + 1.0));
    grid.weights.push_back(first[i] * first[i]);
  }
  const double total = std::accumulate(grid.weights.begin(), grid.weights.end(), 0.0);
  for (auto& w : grid.weights) w /= total;
  return grid;
}

/// Weighted sum over the collocation nodes.
inline double expect(std::span<const double> weights, std::span<const double> values) {
  if (weights.size() != values.size())
    throw std::invalid_argument("expect: " + std::to_string(values.size()) + " values for " +
                                std::to_string(weights.size()) + " nodes");
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) sum += values[i] * weights[i];
  return sum;
}

inline double expect(const UncertaintyGrid& grid, std::span<const double> values) {
  return expect(grid.weights, values);
}

// One collocation point of the joint (z1, z2) uncertainty space.
struct UncertaintyNode {
  double z1 = 0.5;
  double z2 = 0.5;
  double weight = 1.0;
};

enum class NodePairing { comonotone, tensor };

/// Combines the per-variable grids into joint nodes. Comonotone pairing keeps
/// the index m shared (weights from the first grid); the tensor option builds
/// all M1*M2 combinations with product weights.
inline std::vector<UncertaintyNode> pair_grids(const UncertaintyGrid& g1, const UncertaintyGrid& g2,
                                               NodePairing pairing = NodePairing::comonotone) {
  std::vector<UncertaintyNode> out;
  if (pairing == NodePairing::comonotone) {
    if (g1.size() != g2.size())
      throw std::invalid_argument("pair_grids: comonotone pairing needs equal grid sizes");
    double total = 0.0;
    for (std::size_t m = 0; m < g1.size(); ++m) {
      out.push_back({g1.nodes[m], g2.nodes[m], g1.weights[m]});
      total += g1.weights[m];
    }
    for (auto& n : out) n.weight /= total;
  } else {
    for (std::size_t i = 0; i < g1.size(); ++i)
      for (std::size_t j = 0; j < g2.size(); ++j)
        out.push_back({g1.nodes[i], g2.nodes[j], g1.weights[i] * g2.weights[j]});
  }
  return out;
}

inline std::vector<double> node_weights(std::span<const UncertaintyNode> nodes) {
  std::vector<double> w;
  w.reserve(nodes.size());
  for (const auto& n : nodes) w.push_back(n.weight);
  return w;
}

inline void to_json(nlohmann::json& j, const BetaSpec& s) {
  j = nlohmann::json{{"alpha", s.alpha}, {"beta", s.beta}};
}
inline void from_json(const nlohmann::json& j, BetaSpec& s) {
  j.at("alpha").get_to(s.alpha);
  j.at("beta").get_to(s.beta);
}

inline void to_json(nlohmann::json& j, const UncertaintyGrid& g) {
  j = nlohmann::json{{"alpha", g.spec.alpha}, {"beta", g.spec.beta}, {"nodes", g.nodes}, {"weights", g.weights}};
}
inline void from_json(const nlohmann::json& j, UncertaintyGrid& g) {
  j.at("alpha").get_to(g.spec.alpha);
  j.at("beta").get_to(g.spec.beta);
  j.at("nodes").get_to(g.nodes);
  j.at("weights").get_to(g.weights);
  if (g.nodes.size() != g.weights.size()) throw DataError("grid JSON: nodes/weights length mismatch");
}

inline void to_json(nlohmann::json& j, const UncertaintyNode& n) {
  j = nlohmann::json{{"z1", n.z1}, {"z2", n.z2}, {"weight", n.weight}};
}
inline void from_json(const nlohmann::json& j, UncertaintyNode& n) {
  j.at("z1").get_to(n.z1);
  j.at("z2").get_to(n.z2);
  j.at("weight").get_to(n.weight);
}

}  // namespace epiforge
