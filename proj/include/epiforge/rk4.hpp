#pragma once

// Fixed-step classical Runge-Kutta integration.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "epiforge/error.hpp"
#include "epiforge/format.hpp"
#include "epiforge/models.hpp"

namespace epiforge {

template <class T>
concept VectorState = std::copyable<T> && requires(T s, const T cs) {
  { s.data() } -> std::same_as<double*>;
  { cs.data() } -> std::same_as<const double*>;
  { cs.size() } -> std::convertible_to<std::size_t>;
};

template <VectorState State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  double step = 0.0;

  const State& front() const { return states.front(); }
  const State& back() const { return states.back(); }

  /// Linear interpolation between stored samples; clamps outside the range.
  State at(double t) const {
    if (t <= times.front()) return states.front();
    if (t >= times.back()) return states.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - times.begin());
    const std::size_t lo = hi - 1;
    const double theta = (t - times[lo]) / (times[hi] - times[lo]);
    if (theta == 0.0) return states[lo];
    State out = states[lo];
    double* o = out.data();
    const double* b = states[hi].data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] += theta * (b[i] - o[i]);
    return out;
  }
};

/// Integrates y' = rhs(y, t) from t0 to t_end with step h; the final step is
/// shortened so the last stored time is exactly t_end.
template <VectorState State, class Rhs>
Trajectory<State> integrate(Rhs&& rhs, const State& initial, double t0, double t_end, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("integrate: step must be positive");
  if (!(t_end > t0)) throw std::invalid_argument("integrate: t_end must exceed t0");
  if (h > t_end - t0 + 1e-12) throw std::invalid_argument("integrate: step longer than the interval");

  const auto n_steps = static_cast<std::size_t>(std::ceil((t_end - t0) / h - 1e-9));
  Trajectory<State> traj;
  traj.step = h;
  traj.times.reserve(n_steps + 1);
  traj.states.reserve(n_steps + 1);
  traj.times.push_back(t0);
  traj.states.push_back(initial);

  const std::size_t n = initial.size();
  State y = initial;
  State tmp = initial;
  for (std::size_t s = 0; s < n_steps; ++s) {
    const double t = traj.times.back();
    const double t_next = s + 1 == n_steps ? t_end : t0 + static_cast<double>(s + 1) * h;
    const double dt = t_next - t;

    const State k1 = rhs(y, t);
    for (std::size_t i = 0; i < n; ++i) tmp.data()[i] = y.data()[i] + 0.5 * dt * k1.data()[i];
    const State k2 = rhs(tmp, t + 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) tmp.data()[i] = y.data()[i] + 0.5 * dt * k2.data()[i];
    const State k3 = rhs(tmp, t + 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) tmp.data()[i] = y.data()[i] + dt * k3.data()[i];
    const State k4 = rhs(tmp, t_next);

    double* yv = y.data();
    for (std::size_t i = 0; i < n; ++i) {
      yv[i] += dt / 6.0 * (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] + k4.data()[i]);
      if (!std::isfinite(yv[i])) throw NumericalError("integrate: non-finite state at t=" + std::to_string(t_next), t_next);
    }
    traj.times.push_back(t_next);
    traj.states.push_back(y);
  }
  return traj;
}

/// CSV with columns t,age_class,node_index,S,I,A,R.
inline void write_trajectory_csv(std::ostream& os, const Trajectory<CompartmentState>& traj) {
  os << "t,age_class,node_index,S,I,A,R\n";
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const auto& s = traj.states[i];
    for (std::size_t a = 0; a < s.n_ages(); ++a)
      for (std::size_t m = 0; m < s.n_nodes(); ++m)
        os << fmt_double(traj.times[i]) << ',' << a << ',' << m << ',' << fmt_double(s(m, a, kS)) << ','
           << fmt_double(s(m, a, kI)) << ',' << fmt_double(s(m, a, kA)) << ',' << fmt_double(s(m, a, kR)) << '\n';
  }
}

}  // namespace epiforge
