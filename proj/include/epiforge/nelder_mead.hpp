#pragma once

// Nelder-Mead downhill simplex with dimension-adaptive coefficients and
// restarts from the incumbent. Unconstrained; box constraints are expressed
// by the caller through smooth reparametrisations (see bounded transforms).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace epiforge {

struct NelderMeadOptions {
  int max_evaluations = 4000;  // per round
  double f_tolerance = 1e-13;  // absolute spread of vertex values
  double x_tolerance = 1e-8;   // max vertex distance from the best vertex
  double initial_step = 0.5;
  int restarts = 2;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> best_history;  // incumbent value after every iteration
};

template <class Objective>
NelderMeadResult nelder_mead(Objective&& f, std::vector<double> x0, const NelderMeadOptions& opt = {}) {
  const std::size_t n = x0.size();
  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  res.x = x0;
  res.value = eval(x0);
  if (n == 0) {
    res.converged = true;
    return res;
  }

  const double dn = static_cast<double>(n);
  const double reflect = 1.0;
  const double expand = 1.0 + 2.0 / dn;
  const double contract = 0.75 - 0.5 / dn;
  const double shrink = 1.0 - 1.0 / dn;

  for (int round = 0; round <= opt.restarts; ++round) {
    std::vector<std::vector<double>> pts(n + 1, res.x);
    std::vector<double> vals(n + 1, res.value);
    for (std::size_t i = 0; i < n; ++i) {
      pts[i + 1][i] += opt.initial_step;
      vals[i + 1] = eval(pts[i + 1]);
    }
    std::vector<std::size_t> order(n + 1);
    const int budget_end = res.evaluations + opt.max_evaluations;
    bool round_converged = false;

    std::vector<double> centroid(n), trial(n), trial2(n);
    auto along = [&](const std::vector<double>& from, double coef, std::vector<double>& out) {
      for (std::size_t k = 0; k < n; ++k) out[k] = centroid[k] + coef * (from[k] - centroid[k]);
    };

    while (res.evaluations < budget_end) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
      const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

      if (vals[best] < res.value) {
        res.value = vals[best];
        res.x = pts[best];
      }
      ++res.iterations;
      res.best_history.push_back(res.value);

      double spread = vals[worst] - vals[best];
      double size = 0.0;
      for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t k = 0; k < n; ++k) size = std::max(size, std::abs(pts[i][k] - pts[best][k]));
      if (spread <= opt.f_tolerance && size <= opt.x_tolerance) {
        round_converged = true;
        break;
      }

      std::fill(centroid.begin(), centroid.end(), 0.0);
      for (std::size_t i = 0; i <= n; ++i)
        if (i != worst)
          for (std::size_t k = 0; k < n; ++k) centroid[k] += pts[i][k] / dn;

      along(pts[worst], -reflect, trial);
      const double fr = eval(trial);
      if (fr < vals[best]) {
        along(pts[worst], -reflect * expand, trial2);
        const double fe = eval(trial2);
        if (fe < fr) {
          pts[worst] = trial2;
          vals[worst] = fe;
        } else {
          pts[worst] = trial;
          vals[worst] = fr;
        }
        continue;
      }
      if (fr < vals[second]) {
        pts[worst] = trial;
        vals[worst] = fr;
        continue;
      }
      const bool outside = fr < vals[worst];
      along(pts[worst], outside ? -reflect * contract : contract, trial2);
      const double fc = eval(trial2);
      if (fc < (outside ? fr : vals[worst])) {
        pts[worst] = trial2;
        vals[worst] = fc;
        continue;
      }
      for (std::size_t i = 0; i <= n; ++i) {
        if (i == best) continue;
        for (std::size_t k = 0; k < n; ++k) pts[i][k] = pts[best][k] + shrink * (pts[i][k] - pts[best][k]);
        vals[i] = eval(pts[i]);
      }
    }
    for (std::size_t i = 0; i <= n; ++i)
      if (vals[i] < res.value) {
        res.value = vals[i];
        res.x = pts[i];
      }
    res.converged = round_converged;
  }
  return res;
}

// Smooth bijections between unconstrained optimiser coordinates and bounded values.
inline double softplus(double u) { return u > 30.0 ? u : std::log1p(std::exp(u)); }
inline double softplus_inverse(double v) {
  v = std::max(v, 1e-12);
  return v > 30.0 ? v : std::log(std::expm1(v));
}
inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }
inline double logit(double v) {
  v = std::clamp(v, 1e-9, 1.0 - 1e-9);
  return std::log(v / (1.0 - v));
}

}  // namespace epiforge
