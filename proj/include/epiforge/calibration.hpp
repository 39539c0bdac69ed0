#pragma once

// Two-phase calibration of the social SIAR model against reported I and R.
//
// Phase 1 fits beta and xi per age class over [t0, tL] with H = 1. Phase 2
// walks the weekly windows of [tL, T] and fits H and xi per age class, each
// window starting from the terminal state of the previous one. Every
// uncertainty node is fitted on its own.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "epiforge/dataset.hpp"
#include "epiforge/error.hpp"
#include "epiforge/format.hpp"
#include "epiforge/models.hpp"
#include "epiforge/nelder_mead.hpp"
#include "epiforge/parallel.hpp"
#include "epiforge/quadrature.hpp"
#include "epiforge/rk4.hpp"

namespace epiforge {

struct FitConfig {
  double p = 0.5;  // weight of the infected misfit; 1 - p goes to recovered
  double t0 = 2.0;
  double tL = 15.0;
  double T = 105.0;
  int k_l = 3;
  int k_r = 4;
  double stride = 7.0;
  int max_iters = 4000;  // objective evaluations per optimizer round
  double tol = 1e-12;
  int restarts = 2;
  double h = 0.2;
  double k = 0.1;
  double bound_margin = 1e-3;  // xi this close to 0 or 1 is snapped to the bound

  void validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("FitConfig: p must lie in [0,1]");
    if (!(t0 < tL && tL < T)) throw std::invalid_argument("FitConfig: need t0 < tL < T");
    if (k_l < 0 || k_r < 0 || k_l + k_r == 0) throw std::invalid_argument("FitConfig: bad window extent");
    if (!(stride > 0.0)) throw std::invalid_argument("FitConfig: stride must be positive");
    if (max_iters < 1 || restarts < 0) throw std::invalid_argument("FitConfig: bad optimizer budget");
    if (!(h > 0.0)) throw std::invalid_argument("FitConfig: step must be positive");
    if (!(k >= 0.0 && k <= 1.0)) throw std::invalid_argument("FitConfig: k must lie in [0,1]");
  }

  /// {t0, tL, tL + stride, tL + 2 stride, ..., T}: window 0 is the phase-1
  /// interval, the rest are the phase-2 weeks (the last one may be shorter).
  std::vector<double> window_edges() const {
    std::vector<double> e{t0, tL};
    for (double t = tL + stride; t < T - 1e-9; t += stride) e.push_back(t);
    e.push_back(T);
    return e;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FitConfig, p, t0, tL, T, k_l, k_r, stride, max_iters, tol, restarts, h,
                                                k, bound_margin)

struct FitDiagnostics {
  double objective = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
  bool xi_at_bound = false;
  std::vector<double> history;  // incumbent objective per optimizer iteration (not serialized)
};

inline void to_json(nlohmann::json& j, const FitDiagnostics& d) {
  j = {{"objective", d.objective},     {"evaluations", d.evaluations}, {"iterations", d.iterations},
       {"converged", d.converged},     {"degenerate", d.degenerate},   {"xi_at_bound", d.xi_at_bound}};
}
inline void from_json(const nlohmann::json& j, FitDiagnostics& d) {
  d.objective = j.at("objective").get<double>();
  d.evaluations = j.at("evaluations").get<int>();
  d.iterations = j.at("iterations").get<int>();
  d.converged = j.at("converged").get<bool>();
  d.degenerate = j.at("degenerate").get<bool>();
  d.xi_at_bound = j.at("xi_at_bound").get<bool>();
}

struct NodeDiagnostics {
  FitDiagnostics phase1;
  std::vector<FitDiagnostics> phase2;  // one per phase-2 window

  double total_objective() const {
    double s = phase1.objective;
    for (const auto& d : phase2) s += d.objective;
    return s;
  }
};

struct CalibrationResult {
  FitConfig config;
  AgeGrid ages;
  std::vector<UncertaintyNode> nodes;
  EpiParams params;
  CompartmentState initial;  // state at t0 for every node
  std::vector<NodeDiagnostics> diagnostics;
  bool phase2_complete = false;

  std::size_t n_nodes() const { return nodes.size(); }
  std::vector<double> weights() const { return node_weights(nodes); }
  std::vector<double> objectives() const {
    std::vector<double> out;
    for (const auto& d : diagnostics) out.push_back(d.total_objective());
    return out;
  }
};

inline void to_json(nlohmann::json& j, const AgeGrid& g) {
  j = nlohmann::json::array();
  for (const auto& c : g.classes()) j.push_back({{"lo", c.lo}, {"hi", c.hi}, {"label", c.label}, {"share", c.share}});
}
inline void from_json(const nlohmann::json& j, AgeGrid& g) {
  std::vector<AgeClass> classes;
  for (const auto& c : j)
    classes.push_back({c.at("lo").get<double>(), c.at("hi").get<double>(), c.at("label").get<std::string>(),
                       c.at("share").get<double>()});
  g = AgeGrid(std::move(classes));
}

inline void to_json(nlohmann::json& j, const CalibrationResult& r) {
  auto initial = nlohmann::json::array();
  for (std::size_t m = 0; m < r.n_nodes(); ++m) {
    auto ages = nlohmann::json::array();
    for (std::size_t a = 0; a < r.ages.size(); ++a)
      ages.push_back({{"S", r.initial(m, a, kS)}, {"I", r.initial(m, a, kI)}, {"A", r.initial(m, a, kA)},
                      {"R", r.initial(m, a, kR)}});
    initial.push_back({{"ages", ages}});
  }
  auto diags = nlohmann::json::array();
  for (const auto& d : r.diagnostics) diags.push_back({{"phase1", d.phase1}, {"phase2", d.phase2}});
  j = {{"config", r.config},   {"ages", r.ages},       {"nodes", r.nodes},
       {"params", r.params},   {"initial", initial},   {"diagnostics", diags},
       {"objectives", r.objectives()}, {"phase2_complete", r.phase2_complete}};
}

inline void from_json(const nlohmann::json& j, CalibrationResult& r) {
  r.config = j.at("config").get<FitConfig>();
  r.ages = j.at("ages").get<AgeGrid>();
  r.nodes = j.at("nodes").get<std::vector<UncertaintyNode>>();
  r.params = j.at("params").get<EpiParams>();
  if (r.params.n_nodes() != r.nodes.size() || r.params.n_ages() != r.ages.size())
    throw DataError("calibration JSON: parameter shape does not match nodes/ages");
  r.initial = CompartmentState(r.ages.size(), r.nodes.size());
  const auto& init = j.at("initial");
  for (std::size_t m = 0; m < r.n_nodes(); ++m)
    for (std::size_t a = 0; a < r.ages.size(); ++a) {
      const auto& e = init.at(m).at("ages").at(a);
      r.initial(m, a, kS) = e.at("S").get<double>();
      r.initial(m, a, kI) = e.at("I").get<double>();
      r.initial(m, a, kA) = e.at("A").get<double>();
      r.initial(m, a, kR) = e.at("R").get<double>();
    }
  r.diagnostics.clear();
  for (const auto& d : j.at("diagnostics"))
    r.diagnostics.push_back({d.at("phase1").get<FitDiagnostics>(), d.at("phase2").get<std::vector<FitDiagnostics>>()});
  r.phase2_complete = j.at("phase2_complete").get<bool>();
}

// ---------------------------------------------------------------------------
// Simulation.

/// Integrates [ta, tb] holding the coefficients of window w fixed.
inline Trajectory<CompartmentState> simulate_window(const EpiParams& p, std::size_t w, const CompartmentState& init,
                                                    double ta, double tb, double h) {
  auto rhs = [&](const CompartmentState& y, double) { return rhs_siar_in_window(y, p, w); };
  return integrate(rhs, init, ta, tb, std::min(h, tb - ta));
}

/// Forward run over all windows, integrating each window as its own segment.
/// Segment boundaries appear once in the output.
inline Trajectory<CompartmentState> simulate(const EpiParams& p, const CompartmentState& init, double h) {
  const auto& e = p.window_edges();
  Trajectory<CompartmentState> out;
  out.step = h;
  out.times.push_back(e.front());
  out.states.push_back(init);
  for (std::size_t w = 0; w + 1 < e.size(); ++w) {
    auto seg = simulate_window(p, w, out.states.back(), e[w], e[w + 1], h);
    out.times.insert(out.times.end(), seg.times.begin() + 1, seg.times.end());
    out.states.insert(out.states.end(), std::make_move_iterator(seg.states.begin() + 1),
                      std::make_move_iterator(seg.states.end()));
  }
  return out;
}

inline Trajectory<CompartmentState> simulate(const CalibrationResult& r) {
  return simulate(r.params, r.initial, r.config.h);
}

// ---------------------------------------------------------------------------
// Objective.

/// Reported I and R as dense tables (one node).
struct ObservedSeries {
  ChannelTable I;
  ChannelTable R;

  explicit ObservedSeries(const EpiDataset& data) : I(channel_table(data, kI)), R(channel_table(data, kR)) {}

  /// Indices of data times inside [ta, tb].
  std::vector<std::size_t> days_in(double ta, double tb) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < I.times.size(); ++i)
      if (I.times[i] >= ta - 1e-9 && I.times[i] <= tb + 1e-9) out.push_back(i);
    return out;
  }
};

/// Sum over age classes of p |I_sim - I_data|_2 + (1 - p) |R_sim - R_data|_2
/// over the data days in [ta, tb], simulation interpolated to those days.
inline double objective(const Trajectory<CompartmentState>& sim, const ObservedSeries& data, double ta, double tb,
                        double p, std::size_t node = 0) {
  const auto days = data.days_in(ta, tb);
  if (days.empty()) throw DataError("objective: no data days in [" + fmt_double(ta) + ", " + fmt_double(tb) + "]");
  const std::size_t na = data.I.n_ages;
  std::vector<double> ei(na, 0.0), er(na, 0.0);
  for (auto di : days) {
    const auto s = sim.at(data.I.times[di]);
    for (std::size_t a = 0; a < na; ++a) {
      const double dI = s(node, a, kI) - data.I(di, a, 0);
      const double dR = s(node, a, kR) - data.R(di, a, 0);
      ei[a] += dI * dI;
      er[a] += dR * dR;
    }
  }
  double J = 0.0;
  for (std::size_t a = 0; a < na; ++a) J += p * std::sqrt(ei[a]) + (1.0 - p) * std::sqrt(er[a]);
  return J;
}

inline double objective(const Trajectory<CompartmentState>& sim, const EpiDataset& data, double ta, double tb, double p,
                        std::size_t node = 0) {
  return objective(sim, ObservedSeries(data), ta, tb, p, node);
}

// ---------------------------------------------------------------------------

namespace detail {

/// Single-node state at t0: I, R from data, A = (1 - xi)/xi I, S = share - I - A - R.
inline CompartmentState initial_from_data(const AgeGrid& ages, const ObservedSeries& data, double t0,
                                          std::span<const double> xi) {
  const auto ti = data.I.find_time(t0);
  if (!ti) throw DataError("calibration: no data on day " + fmt_double(t0));
  CompartmentState s(ages.size(), 1);
  for (std::size_t a = 0; a < ages.size(); ++a) {
    const double I = data.I(*ti, a, 0), R = data.R(*ti, a, 0);
    const double A = (1.0 - xi[a]) / xi[a] * I;
    s(0, a, kI) = I;
    s(0, a, kR) = R;
    s(0, a, kA) = A;
    s(0, a, kS) = ages[a].share - I - A - R;
  }
  return s;
}

inline double negativity(const CompartmentState& s) {
  double neg = 0.0;
  for (double v : s) neg += std::max(-v, 0.0);
  return neg;
}

inline NelderMeadOptions optimizer_options(const FitConfig& cfg) {
  NelderMeadOptions o;
  o.max_evaluations = cfg.max_iters;
  o.f_tolerance = cfg.tol;
  o.x_tolerance = 1e-8;
  o.restarts = cfg.restarts;
  return o;
}

inline void record(FitDiagnostics& d, const NelderMeadResult& r) {
  d.evaluations = r.evaluations;
  d.iterations = r.iterations;
  d.converged = r.converged;
  d.history = r.best_history;
}

inline constexpr double kPenalty = 1e3;

struct NodeFit {
  EpiParams params;           // one node
  CompartmentState initial;   // one node
  CompartmentState terminal;  // state at the end of the last fitted window
  NodeDiagnostics diag;
};

inline NodeFit fit_node_phase1(const AgeGrid& ages, const ObservedSeries& data, EpiParams np, const FitConfig& cfg) {
  const std::size_t na = ages.size();
  const double t0 = cfg.t0, tL = cfg.tL;
  NodeFit out;

  bool silent = true;
  for (auto di : data.days_in(t0, tL))
    for (std::size_t a = 0; a < na; ++a)
      if (data.I(di, a, 0) != 0.0 || data.R(di, a, 0) != 0.0) silent = false;

  auto decode = [&](const std::vector<double>& x, EpiParams& p, std::vector<double>& xi) {
    for (std::size_t a = 0; a < na; ++a) {
      p.beta(0, a) = softplus(x[a]);
      xi[a] = logistic(x[na + a]);
      p.xi(0, 0, a) = xi[a];
      p.H(0, 0, a) = 1.0;
    }
  };
  auto evaluate = [&](const EpiParams& p, const std::vector<double>& xi) {
    const auto init = initial_from_data(ages, data, t0, xi);
    const double neg = negativity(init);
    if (neg > 0.0) return kPenalty * (1.0 + neg);
    try {
      return objective(simulate_window(p, 0, init, t0, tL, cfg.h), data, t0, tL, cfg.p);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<double> xi(na, 0.5);
  if (silent) {
    for (std::size_t a = 0; a < na; ++a) {
      np.beta(0, a) = 0.0;
      np.xi(0, 0, a) = xi[a];
      np.H(0, 0, a) = 1.0;
    }
    out.diag.phase1.degenerate = true;
    out.diag.phase1.converged = true;
  } else {
    std::vector<double> x0(2 * na);
    for (std::size_t a = 0; a < na; ++a) {
      x0[a] = softplus_inverse(0.3);
      x0[na + a] = logit(0.5);
    }
    EpiParams trial = np;
    std::vector<double> xi_trial(na);
    auto f = [&](const std::vector<double>& x) {
      decode(x, trial, xi_trial);
      return evaluate(trial, xi_trial);
    };
    const auto r = nelder_mead(f, x0, optimizer_options(cfg));
    record(out.diag.phase1, r);
    decode(r.x, np, xi);
    // Only the upper bound can be snapped: xi = 0 would make A(t0) infinite.
    for (std::size_t a = 0; a < na; ++a) {
      if (xi[a] > 1.0 - cfg.bound_margin) {
        xi[a] = 1.0;
        out.diag.phase1.xi_at_bound = true;
      } else if (xi[a] < cfg.bound_margin) {
        out.diag.phase1.xi_at_bound = true;
      }
      np.xi(0, 0, a) = xi[a];
    }
  }
  for (std::size_t w = 1; w < np.n_windows(); ++w)
    for (std::size_t a = 0; a < na; ++a) {
      np.xi(0, w, a) = np.xi(0, 0, a);
      np.H(0, w, a) = 1.0;
    }

  out.initial = initial_from_data(ages, data, t0, xi);
  const auto traj = simulate_window(np, 0, out.initial, t0, tL, cfg.h);
  out.diag.phase1.objective = objective(traj, data, t0, tL, cfg.p);
  out.terminal = traj.back();
  out.params = std::move(np);
  return out;
}

inline void fit_node_phase2(const ObservedSeries& data, NodeFit& nf, const FitConfig& cfg) {
  EpiParams& np = nf.params;
  const std::size_t na = np.n_ages();
  const auto& e = np.window_edges();
  const double T = e.back();
  nf.diag.phase2.assign(np.n_windows() - 1, {});
  CompartmentState state = nf.terminal;

  for (std::size_t w = 1; w < np.n_windows(); ++w) {
    auto& diag = nf.diag.phase2[w - 1];
    const double ta = e[w], tb = e[w + 1];
    const double span_end = std::min(ta + cfg.k_l + cfg.k_r, T);
    if (data.days_in(ta, span_end).empty())
      throw DataError("calibration: no data in window [" + fmt_double(ta) + ", " + fmt_double(span_end) + "]");

    for (std::size_t a = 0; a < na; ++a) {
      np.H(0, w, a) = np.H(0, w - 1, a);
      np.xi(0, w, a) = np.xi(0, w - 1, a);
    }

    double pool = 0.0, signal = 0.0;
    for (std::size_t a = 0; a < na; ++a) pool += state(0, a, kI) + state(0, a, kA);
    for (auto di : data.days_in(ta, span_end))
      for (std::size_t a = 0; a < na; ++a) signal += std::abs(data.I(di, a, 0));

    if (pool == 0.0 && signal == 0.0) {
      diag.degenerate = true;
      diag.converged = true;
    } else {
      EpiParams trial = np;
      auto decode = [&](const std::vector<double>& x, EpiParams& p) {
        for (std::size_t a = 0; a < na; ++a) {
          p.H(0, w, a) = softplus(x[a]);
          p.xi(0, w, a) = logistic(x[na + a]);
        }
      };
      auto f = [&](const std::vector<double>& x) {
        decode(x, trial);
        try {
          return objective(simulate_window(trial, w, state, ta, span_end, cfg.h), data, ta, span_end, cfg.p);
        } catch (const NumericalError&) {
          return std::numeric_limits<double>::infinity();
        }
      };
      std::vector<double> x0(2 * na);
      for (std::size_t a = 0; a < na; ++a) {
        x0[a] = softplus_inverse(np.H(0, w, a));
        x0[na + a] = logit(np.xi(0, w, a));
      }
      const auto r = nelder_mead(f, x0, optimizer_options(cfg));
      record(diag, r);
      decode(r.x, np);
      for (std::size_t a = 0; a < na; ++a) {
        double& xi = np.xi(0, w, a);
        if (xi > 1.0 - cfg.bound_margin) {
          xi = 1.0;
          diag.xi_at_bound = true;
        } else if (xi < cfg.bound_margin) {
          xi = 0.0;
          diag.xi_at_bound = true;
        }
      }
    }

    const auto fit_traj = simulate_window(np, w, state, ta, span_end, cfg.h);
    diag.objective = objective(fit_traj, data, ta, span_end, cfg.p);
    state = span_end == tb ? fit_traj.back() : simulate_window(np, w, state, ta, tb, cfg.h).back();
  }
  nf.terminal = state;
}

}  // namespace detail

/// Phase 1 for every node; windows after tL inherit H = 1 and the fitted xi.
inline CalibrationResult calibrate_phase1(const EpiDataset& data, std::span<const UncertaintyNode> nodes,
                                          const FitConfig& cfg, const RecoveryLaw& law = {}) {
  cfg.validate();
  if (nodes.empty()) throw std::invalid_argument("calibrate: no uncertainty nodes");
  const ObservedSeries obs(data);
  if (obs.days_in(cfg.t0, cfg.tL).empty()) throw DataError("calibration: data does not cover [t0, tL]");

  CalibrationResult res;
  res.config = cfg;
  res.ages = data.ages;
  res.nodes.assign(nodes.begin(), nodes.end());
  res.params = EpiParams(data.ages.size(), nodes.size(), cfg.window_edges());
  res.params.k = cfg.k;
  sample_gammas(nodes, data.ages, res.params, law);
  res.initial = CompartmentState(data.ages.size(), nodes.size());
  res.diagnostics.resize(nodes.size());

  parallel_for(nodes.size(), [&](std::size_t m) {
    auto fit = detail::fit_node_phase1(data.ages, obs, res.params.node_slice(m), cfg);
    res.params.set_node(m, fit.params);
    res.initial.set_node(m, fit.initial);
    res.diagnostics[m] = std::move(fit.diag);
  });
  return res;
}

/// Phase 2 on top of a phase-1 result.
inline CalibrationResult calibrate_phase2(const EpiDataset& data, CalibrationResult res) {
  const auto& cfg = res.config;
  const ObservedSeries obs(data);
  if (!(data.ages == res.ages)) throw DataError("calibration: data age classes differ from the phase-1 result");

  parallel_for(res.n_nodes(), [&](std::size_t m) {
    detail::NodeFit fit;
    fit.params = res.params.node_slice(m);
    fit.initial = res.initial.node_slice(m);
    fit.terminal = simulate_window(fit.params, 0, fit.initial, cfg.t0, cfg.tL, cfg.h).back();
    fit.diag = res.diagnostics[m];
    detail::fit_node_phase2(obs, fit, cfg);
    res.params.set_node(m, fit.params);
    res.diagnostics[m] = std::move(fit.diag);
  });
  res.phase2_complete = true;
  return res;
}

inline CalibrationResult calibrate(const EpiDataset& data, std::span<const UncertaintyNode> nodes, const FitConfig& cfg,
                                   const RecoveryLaw& law = {}) {
  return calibrate_phase2(data, calibrate_phase1(data, nodes, cfg, law));
}

// ---------------------------------------------------------------------------
// Reporting and augmentation.

/// Weighted quantile: smallest value whose cumulative weight reaches q.
inline double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q) {
  if (values.empty() || values.size() != weights.size()) throw std::invalid_argument("weighted_quantile: bad input");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double acc = 0.0;
  for (auto i : order) {
    acc += weights[i] / total;
    if (acc >= q - 1e-12) return values[i];
  }
  return values[order.back()];
}

/// Fit-vs-data table: node mean and 95% node band of I and R at every data day.
inline void write_fit_csv(std::ostream& os, const CalibrationResult& r, const EpiDataset& data) {
  const auto traj = simulate(r);
  const ObservedSeries obs(data);
  const auto w = r.weights();
  os << "t,date,age_class,I_data,R_data,I_mean,I_lo,I_hi,R_mean,R_lo,R_hi\n";
  std::vector<double> vi(r.n_nodes()), vr(r.n_nodes());
  for (auto di : obs.days_in(r.config.t0, r.config.T)) {
    const double t = obs.I.times[di];
    const auto s = traj.at(t);
    for (std::size_t a = 0; a < r.ages.size(); ++a) {
      for (std::size_t m = 0; m < r.n_nodes(); ++m) {
        vi[m] = s(m, a, kI);
        vr[m] = s(m, a, kR);
      }
      os << fmt_double(t) << ',' << iso_date(static_cast<int>(std::lround(t))) << ',' << r.ages[a].label << ','
         << fmt_double(obs.I(di, a, 0)) << ',' << fmt_double(obs.R(di, a, 0)) << ',' << fmt_double(expect(w, vi))
         << ',' << fmt_double(weighted_quantile(vi, w, 0.025)) << ',' << fmt_double(weighted_quantile(vi, w, 0.975))
         << ',' << fmt_double(expect(w, vr)) << ',' << fmt_double(weighted_quantile(vr, w, 0.025)) << ','
         << fmt_double(weighted_quantile(vr, w, 0.975)) << '\n';
    }
  }
}

/// Synthetic per-node S, I, A, R at ta + i h, i = 0..floor((tb - ta)/h), read
/// off the calibrated forward run.
inline EpiDataset augment(const CalibrationResult& r, double ta, double tb, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("augment: step must be positive");
  if (ta > tb || ta < r.config.t0 - 1e-9 || tb > r.config.T + 1e-9)
    throw std::invalid_argument("augment: window outside the calibrated interval");
  const auto traj = simulate(r);
  const auto n = static_cast<std::size_t>(std::floor((tb - ta) / h + 1e-9)) + 1;

  EpiDataset out;
  out.ages = r.ages;
  out.kind = DataKind::synthetic;
  out.resolution = h;
  out.records.reserve(n * r.ages.size() * r.n_nodes());
  for (std::size_t i = 0; i < n; ++i) {
    const double t = ta + static_cast<double>(i) * h;
    const auto s = traj.at(t);
    for (std::size_t a = 0; a < r.ages.size(); ++a)
      for (std::size_t m = 0; m < r.n_nodes(); ++m)
        out.records.push_back({t, a, m, s(m, a, kI), s(m, a, kR), s(m, a, kS), s(m, a, kA), std::nullopt});
  }
  return out;
}

}  // namespace epiforge
