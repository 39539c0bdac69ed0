#pragma once

// Physics-informed network for the (age-structured) SIAR model.
//
// The network maps standardized inputs (age x, time t, uncertainty z; which of
// them depends on the input mode) to the four compartment fractions. The loss
// is omega_d L_d + omega_p L_p where L_d compares node-averaged outputs with
// node-averaged data and L_p penalizes node-averaged ODE residuals.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "epiforge/calibration.hpp"
#include "epiforge/dataset.hpp"
#include "epiforge/error.hpp"
#include "epiforge/mlp.hpp"
#include "epiforge/models.hpp"
#include "epiforge/training.hpp"

namespace epiforge {

enum class InputMode { t_only, t_z, x_t_z, x_t };

inline std::string to_string(InputMode m) {
  switch (m) {
    case InputMode::t_only: return "t_only";
    case InputMode::t_z: return "t_z";
    case InputMode::x_t_z: return "x_t_z";
    case InputMode::x_t: return "x_t";
  }
  return "?";
}
inline InputMode input_mode_from_string(const std::string& s) {
  for (auto m : {InputMode::t_only, InputMode::t_z, InputMode::x_t_z, InputMode::x_t})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown input mode '" + s + "'");
}
inline bool has_age_input(InputMode m) { return m == InputMode::x_t_z || m == InputMode::x_t; }
inline bool has_node_input(InputMode m) { return m == InputMode::t_z || m == InputMode::x_t_z; }

struct PinnConfig {
  double omega_d = 1.0;
  double omega_p = 1.0;
  int epochs = 50000;
  double learning_rate = 1e-2;
  int width = 32;
  int hidden = 4;
  Activation activation = Activation::tanh;
  int record_every = 100;
  bool keep_best = true;  // return the lowest-loss iterate rather than the last one

  void validate() const {
    if (omega_d < 0.0 || omega_p < 0.0 || (omega_d == 0.0 && omega_p == 0.0))
      throw std::invalid_argument("PinnConfig: loss weights must be nonnegative and not both zero");
    if (epochs < 0) throw std::invalid_argument("PinnConfig: negative epoch count");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("PinnConfig: learning rate must be positive");
    if (width < 1 || hidden < 0 || record_every < 1) throw std::invalid_argument("PinnConfig: bad architecture");
  }
};

inline void to_json(nlohmann::json& j, const PinnConfig& c) {
  j = {{"omega_d", c.omega_d}, {"omega_p", c.omega_p}, {"epochs", c.epochs},
       {"learning_rate", c.learning_rate}, {"width", c.width}, {"hidden", c.hidden},
       {"activation", to_string(c.activation)}, {"record_every", c.record_every}, {"keep_best", c.keep_best}};
}
inline void from_json(const nlohmann::json& j, PinnConfig& c) {
  const PinnConfig d;
  c.omega_d = j.value("omega_d", d.omega_d);
  c.omega_p = j.value("omega_p", d.omega_p);
  c.epochs = j.value("epochs", d.epochs);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.width = j.value("width", d.width);
  c.hidden = j.value("hidden", d.hidden);
  c.activation = activation_from_string(j.value("activation", to_string(d.activation)));
  c.record_every = j.value("record_every", d.record_every);
  c.keep_best = j.value("keep_best", d.keep_best);
}

/// Affine maps between raw inputs and [-1, 1], and between network outputs and fractions.
struct PinnScaling {
  InputMode mode = InputMode::t_only;
  double t_lo = 0.0, t_hi = 1.0;
  double x_lo = 0.0, x_hi = 1.0;
  double z_lo = 0.0, z_hi = 1.0;
  std::array<double, 4> out_offset{0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> out_scale{1.0, 1.0, 1.0, 1.0};

  static double unit(double v, double lo, double hi) { return hi > lo ? 2.0 * (v - lo) / (hi - lo) - 1.0 : 0.0; }
  double time_factor() const { return t_hi > t_lo ? 2.0 / (t_hi - t_lo) : 1.0; }
  int n_inputs() const { return 1 + (has_age_input(mode) ? 1 : 0) + (has_node_input(mode) ? 1 : 0); }
  int time_index() const { return has_age_input(mode) ? 1 : 0; }

  void fill(Eigen::Ref<Eigen::VectorXd> col, double x, double t, double z) const {
    int r = 0;
    if (has_age_input(mode)) col(r++) = unit(x, x_lo, x_hi);
    col(r++) = unit(t, t_lo, t_hi);
    if (has_node_input(mode)) col(r++) = unit(z, z_lo, z_hi);
  }
};

inline void to_json(nlohmann::json& j, const PinnScaling& s) {
  j = {{"input_mode", to_string(s.mode)}, {"t_range", {s.t_lo, s.t_hi}}, {"x_range", {s.x_lo, s.x_hi}},
       {"z_range", {s.z_lo, s.z_hi}},     {"output_offset", s.out_offset}, {"output_scale", s.out_scale}};
}
inline void from_json(const nlohmann::json& j, PinnScaling& s) {
  s.mode = input_mode_from_string(j.at("input_mode").get<std::string>());
  const auto t = j.at("t_range").get<std::vector<double>>(), x = j.at("x_range").get<std::vector<double>>(),
             z = j.at("z_range").get<std::vector<double>>();
  s.t_lo = t.at(0), s.t_hi = t.at(1), s.x_lo = x.at(0), s.x_hi = x.at(1), s.z_lo = z.at(0), s.z_hi = z.at(1);
  s.out_offset = j.at("output_offset").get<std::array<double, 4>>();
  s.out_scale = j.at("output_scale").get<std::array<double, 4>>();
}

/// Everything the PINN loss needs: collocation grid, data means and model coefficients.
///
/// Collocation columns are ordered (time, node, age): column (n * M + m) * A + a.
struct PinnProblem {
  PinnScaling scaling;
  AgeGrid ages;
  std::vector<double> ages_mid;  // class midpoints (years)
  std::vector<double> node_z;    // z1 of each node
  std::vector<double> weights;   // node weights
  std::vector<double> times;     // collocation times
  std::vector<char> has_data;    // per time: contributes to the data loss
  std::vector<double> data_mean;  // [time][age][compartment], node-averaged
  EpiParams params;               // one entry per node

  std::size_t n_ages() const { return ages.size(); }
  std::size_t n_nodes() const { return weights.size(); }
  std::size_t n_columns() const { return times.size() * n_nodes() * n_ages(); }
  double& data(std::size_t n, std::size_t a, std::size_t i) { return data_mean[(n * n_ages() + a) * 4 + i]; }
  double data(std::size_t n, std::size_t a, std::size_t i) const { return data_mean[(n * n_ages() + a) * 4 + i]; }

  Eigen::MatrixXd inputs() const {
    Eigen::MatrixXd X(scaling.n_inputs(), static_cast<Eigen::Index>(n_columns()));
    Eigen::Index c = 0;
    for (double t : times)
      for (std::size_t m = 0; m < n_nodes(); ++m)
        for (std::size_t a = 0; a < n_ages(); ++a) scaling.fill(X.col(c++), ages_mid[a], t, node_z[m]);
    return X;
  }

  /// Sets output offsets/scales so every compartment's data range maps to [-1, 1].
  void fit_output_scaling() {
    for (std::size_t i = 0; i < 4; ++i) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t n = 0; n < times.size(); ++n)
        if (has_data[n])
          for (std::size_t a = 0; a < n_ages(); ++a) {
            lo = std::min(lo, data(n, a, i));
            hi = std::max(hi, data(n, a, i));
          }
      if (!std::isfinite(lo)) lo = hi = 0.0;
      scaling.out_offset[i] = 0.5 * (lo + hi);
      scaling.out_scale[i] = std::max(0.5 * (hi - lo), 1e-6);
    }
  }

  void fit_input_scaling() {
    scaling.t_lo = *std::min_element(times.begin(), times.end());
    scaling.t_hi = *std::max_element(times.begin(), times.end());
    scaling.x_lo = *std::min_element(ages_mid.begin(), ages_mid.end());
    scaling.x_hi = *std::max_element(ages_mid.begin(), ages_mid.end());
    scaling.z_lo = *std::min_element(node_z.begin(), node_z.end());
    scaling.z_hi = *std::max_element(node_z.begin(), node_z.end());
  }
};

namespace detail {

inline std::vector<double> class_midpoints(const AgeGrid& ages) {
  std::vector<double> mid;
  for (const auto& c : ages.classes()) mid.push_back(0.5 * (c.lo + c.hi));
  return mid;
}

inline void check_windowed(const EpiParams& p) {
  if (p.mode != IncidenceMode::windowed) throw std::invalid_argument("PINN residuals need windowed incidence");
}

}  // namespace detail

/// Problem on synthetic per-node data: data loss on times in [train_begin,
/// train_end], physics loss on every synthetic sample time.
inline PinnProblem make_synthetic_problem(const EpiDataset& syn, const CalibrationResult& calib, double train_begin,
                                          double train_end) {
  detail::check_windowed(calib.params);
  if (syn.kind != DataKind::synthetic) throw DataError("synthetic PINN problem needs a synthetic dataset");
  if (syn.n_nodes() != calib.n_nodes()) throw DataError("synthetic data and calibration disagree on node count");
  PinnProblem pb;
  pb.ages = syn.ages;
  pb.ages_mid = detail::class_midpoints(syn.ages);
  pb.weights = calib.weights();
  for (const auto& n : calib.nodes) pb.node_z.push_back(n.z1);
  pb.params = calib.params;
  pb.scaling.mode = syn.ages.size() > 1 ? InputMode::x_t_z : InputMode::t_z;
  if (calib.n_nodes() == 1) pb.scaling.mode = syn.ages.size() > 1 ? InputMode::x_t : InputMode::t_only;

  std::array<ChannelTable, 4> tab{channel_table(syn, kS), channel_table(syn, kI), channel_table(syn, kA),
                                  channel_table(syn, kR)};
  pb.times = tab[0].times;
  pb.has_data.assign(pb.times.size(), 0);
  pb.data_mean.assign(pb.times.size() * pb.n_ages() * 4, 0.0);
  for (std::size_t n = 0; n < pb.times.size(); ++n) {
    const double t = pb.times[n];
    pb.has_data[n] = t >= train_begin - 1e-9 && t <= train_end + 1e-9;
    for (std::size_t a = 0; a < pb.n_ages(); ++a)
      for (std::size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (std::size_t m = 0; m < pb.n_nodes(); ++m) s += pb.weights[m] * tab[i](n, a, m);
        pb.data(n, a, i) = s;
      }
  }
  pb.fit_input_scaling();
  pb.fit_output_scaling();
  return pb;
}

/// Problem on reported data (I and R only). One node carrying the node-averaged
/// coefficients; A = (1 - xi)/xi I with the averaged xi of the day's window and
/// S = share - I - A - R. Physics is enforced on every reported day in
/// [train_begin, colloc_end].
inline PinnProblem make_real_problem(const EpiDataset& obs, const CalibrationResult& calib, double train_begin,
                                     double train_end, double colloc_end) {
  if (obs.kind != DataKind::observed) throw DataError("real PINN problem needs observed data");
  detail::check_windowed(calib.params);
  const auto w = calib.weights();
  PinnProblem pb;
  pb.ages = obs.ages;
  pb.ages_mid = detail::class_midpoints(obs.ages);
  pb.weights = {1.0};
  pb.node_z = {0.0};
  pb.params = calib.params.node_average(w);
  pb.scaling.mode = obs.ages.size() > 1 ? InputMode::x_t : InputMode::t_only;

  const ObservedSeries series(obs);
  for (auto di : series.days_in(train_begin, colloc_end)) {
    const double t = series.I.times[di];
    pb.times.push_back(t);
    pb.has_data.push_back(t <= train_end + 1e-9);
    const std::size_t win = pb.params.window_at(t);
    for (std::size_t a = 0; a < pb.n_ages(); ++a) {
      const double I = series.I(di, a, 0), R = series.R(di, a, 0);
      const double xi = std::max(pb.params.xi(0, win, a), 1e-6);
      const double A = (1.0 - xi) / xi * I;
      pb.data_mean.insert(pb.data_mean.end(), {obs.ages[a].share - I - A - R, I, A, R});
    }
  }
  if (pb.times.empty()) throw DataError("real PINN problem: no reported days in the requested window");
  pb.fit_input_scaling();
  pb.fit_output_scaling();
  return pb;
}

// ---------------------------------------------------------------------------
// Loss.

struct PinnLoss {
  double data = 0.0;
  double physics = 0.0;
  double total = 0.0;
};

/// Outputs of the network in fraction units at every collocation column, with
/// their time derivatives.
struct CollocationValues {
  Eigen::MatrixXd F;     // 4 x columns
  Eigen::MatrixXd Fdot;  // 4 x columns, d/dt in days
};

/// Per-node residuals of the SIAR equations at every collocation column (4 x columns).
inline Eigen::MatrixXd physics_residuals(const CollocationValues& v, const PinnProblem& pb) {
  const std::size_t A = pb.n_ages(), M = pb.n_nodes();
  const auto& P = pb.params;
  Eigen::MatrixXd R(4, static_cast<Eigen::Index>(pb.n_columns()));
  for (std::size_t n = 0; n < pb.times.size(); ++n) {
    const std::size_t w = P.window_at(pb.times[n]);
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t c0 = (n * M + m) * A;
      double pool = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const auto c = static_cast<Eigen::Index>(c0 + a);
        pool += P.H(m, w, a) * (P.k * v.F(kI, c) + v.F(kA, c));
      }
      for (std::size_t a = 0; a < A; ++a) {
        const auto c = static_cast<Eigen::Index>(c0 + a);
        const double lambda = P.beta(m, a) * v.F(kS, c) * P.H(m, w, a) * pool;
        const double xi = P.xi(m, w, a), gi = P.gamma_I(m, a), ga = P.gamma_A(m, a);
        R(kS, c) = v.Fdot(kS, c) + lambda;
        R(kI, c) = v.Fdot(kI, c) - xi * lambda + gi * v.F(kI, c);
        R(kA, c) = v.Fdot(kA, c) - (1.0 - xi) * lambda + ga * v.F(kA, c);
        R(kR, c) = v.Fdot(kR, c) - gi * v.F(kI, c) - ga * v.F(kA, c);
      }
    }
  }
  return R;
}

/// Loss from compartment values and time derivatives. When the adjoint
/// pointers are given they receive dL/dF and dL/dFdot.
inline PinnLoss pinn_loss_from_values(const CollocationValues& v, const PinnProblem& pb, const PinnConfig& cfg,
                                      Eigen::MatrixXd* F_bar = nullptr, Eigen::MatrixXd* Fdot_bar = nullptr) {
  const std::size_t A = pb.n_ages(), M = pb.n_nodes(), N = pb.times.size();
  const bool adj = F_bar != nullptr;
  if (adj) {
    F_bar->setZero(4, static_cast<Eigen::Index>(pb.n_columns()));
    Fdot_bar->setZero(4, static_cast<Eigen::Index>(pb.n_columns()));
  }
  const auto& P = pb.params;
  const double k = P.k;
  PinnLoss L;

  std::vector<double> lambda(A), pool_h(A), resid(4 * A * M);
  std::vector<double> rbar(4 * A);
  for (std::size_t n = 0; n < N; ++n) {
    const double t = pb.times[n];
    const std::size_t w = P.window_at(t);
    const std::size_t base = n * M * A;

    // Data: node-averaged outputs against node-averaged data.
    if (pb.has_data[n] && cfg.omega_d > 0.0) {
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t i = 0; i < 4; ++i) {
          double mean = 0.0;
          for (std::size_t m = 0; m < M; ++m) mean += pb.weights[m] * v.F(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(base + m * A + a));
          const double d = mean - pb.data(n, a, i);
          L.data += d * d;
          if (adj)
            for (std::size_t m = 0; m < M; ++m)
              (*F_bar)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(base + m * A + a)) +=
                  cfg.omega_d * 2.0 * d * pb.weights[m];
        }
    }

    if (cfg.omega_p == 0.0) continue;
    // Residuals per node, then node-averaged.
    std::fill(rbar.begin(), rbar.end(), 0.0);
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t c0 = base + m * A;
      double pool = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const auto c = static_cast<Eigen::Index>(c0 + a);
        pool_h[a] = P.H(m, w, a);
        pool += pool_h[a] * (k * v.F(kI, c) + v.F(kA, c));
      }
      for (std::size_t a = 0; a < A; ++a) {
        const auto c = static_cast<Eigen::Index>(c0 + a);
        lambda[a] = P.beta(m, a) * v.F(kS, c) * pool_h[a] * pool;
        const double xi = P.xi(m, w, a), gi = P.gamma_I(m, a), ga = P.gamma_A(m, a);
        double* r = &resid[(m * A + a) * 4];
        r[kS] = v.Fdot(kS, c) + lambda[a];
        r[kI] = v.Fdot(kI, c) - xi * lambda[a] + gi * v.F(kI, c);
        r[kA] = v.Fdot(kA, c) - (1.0 - xi) * lambda[a] + ga * v.F(kA, c);
        r[kR] = v.Fdot(kR, c) - gi * v.F(kI, c) - ga * v.F(kA, c);
        for (std::size_t i = 0; i < 4; ++i) rbar[a * 4 + i] += pb.weights[m] * r[i];
      }
    }
    for (double r : rbar) L.physics += r * r;
    if (!adj) continue;

    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t c0 = base + m * A;
      double pool = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const auto c = static_cast<Eigen::Index>(c0 + a);
        pool += P.H(m, w, a) * (k * v.F(kI, c) + v.F(kA, c));
      }
      double q = 0.0;  // adjoint of the pool
      for (std::size_t a = 0; a < A; ++a) {
        const auto c = static_cast<Eigen::Index>(c0 + a);
        const double s = cfg.omega_p * 2.0 * pb.weights[m];
        const double gS = s * rbar[a * 4 + kS], gI = s * rbar[a * 4 + kI], gA = s * rbar[a * 4 + kA],
                     gR = s * rbar[a * 4 + kR];
        const double xi = P.xi(m, w, a), gi = P.gamma_I(m, a), ga = P.gamma_A(m, a), h = P.H(m, w, a),
                     beta = P.beta(m, a);
        (*Fdot_bar)(kS, c) += gS;
        (*Fdot_bar)(kI, c) += gI;
        (*Fdot_bar)(kA, c) += gA;
        (*Fdot_bar)(kR, c) += gR;
        const double lam_bar = gS - xi * gI - (1.0 - xi) * gA;
        (*F_bar)(kS, c) += lam_bar * beta * h * pool;
        q += lam_bar * beta * v.F(kS, c) * h;
        (*F_bar)(kI, c) += gi * gI - gi * gR;
        (*F_bar)(kA, c) += ga * gA - ga * gR;
      }
      for (std::size_t a = 0; a < A; ++a) {
        const auto c = static_cast<Eigen::Index>(c0 + a);
        const double h = P.H(m, w, a);
        (*F_bar)(kI, c) += q * h * k;
        (*F_bar)(kA, c) += q * h;
      }
    }
  }
  L.total = cfg.omega_d * L.data + cfg.omega_p * L.physics;
  return L;
}

inline CollocationValues network_values(const ForwardPass& fp, const PinnScaling& sc) {
  CollocationValues v{fp.output(), fp.tangent()};
  const double ct = sc.time_factor();
  for (Eigen::Index i = 0; i < 4; ++i) {
    v.F.row(i) = (v.F.row(i).array() * sc.out_scale[static_cast<std::size_t>(i)] + sc.out_offset[static_cast<std::size_t>(i)]).matrix();
    v.Fdot.row(i) *= sc.out_scale[static_cast<std::size_t>(i)] * ct;
  }
  return v;
}

/// Loss and, when `grad` is given, its exact gradient with respect to the network parameters.
inline PinnLoss pinn_loss(const Mlp& net, const PinnProblem& pb, const Eigen::MatrixXd& inputs, const PinnConfig& cfg,
                          Eigen::VectorXd* grad = nullptr) {
  const auto fp = net.forward(inputs, pb.scaling.time_index());
  const auto v = network_values(fp, pb.scaling);
  if (!grad) return pinn_loss_from_values(v, pb, cfg);
  Eigen::MatrixXd Fb, Fdb;
  const auto L = pinn_loss_from_values(v, pb, cfg, &Fb, &Fdb);
  const double ct = pb.scaling.time_factor();
  for (Eigen::Index i = 0; i < 4; ++i) {
    Fb.row(i) *= pb.scaling.out_scale[static_cast<std::size_t>(i)];
    Fdb.row(i) *= pb.scaling.out_scale[static_cast<std::size_t>(i)] * ct;
  }
  *grad = net.backward(fp, Fb, &Fdb);
  return L;
}

inline PinnLoss pinn_loss(const Mlp& net, const PinnProblem& pb, const PinnConfig& cfg) {
  return pinn_loss(net, pb, pb.inputs(), cfg);
}

inline double data_loss(const Mlp& net, const PinnProblem& pb) {
  PinnConfig c;
  c.omega_p = 0.0;
  const double L = pinn_loss(net, pb, c).data;
  if (!std::isfinite(L)) throw NumericalError("data loss is not finite", L);
  return L;
}

inline double physics_loss(const Mlp& net, const PinnProblem& pb) {
  PinnConfig c;
  c.omega_d = 0.0;
  const double L = pinn_loss(net, pb, c).physics;
  if (!std::isfinite(L)) throw NumericalError("non-finite physics residual", L);
  return L;
}

// ---------------------------------------------------------------------------
// Training and prediction.

struct PinnModel {
  Mlp net;
  PinnScaling scaling;
  AgeGrid ages;
  std::vector<double> node_z;
  std::vector<double> weights;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const PinnModel& m) {
  j = {{"kind", "pinn"},       {"network", m.net},       {"scaling", m.scaling}, {"ages", m.ages},
       {"node_z", m.node_z}, {"weights", m.weights}, {"seed", m.seed}};
}
inline void from_json(const nlohmann::json& j, PinnModel& m) {
  m.net = j.at("network").get<Mlp>();
  m.scaling = j.at("scaling").get<PinnScaling>();
  m.ages = j.at("ages").get<AgeGrid>();
  m.node_z = j.at("node_z").get<std::vector<double>>();
  m.weights = j.at("weights").get<std::vector<double>>();
  m.seed = j.at("seed").get<std::uint64_t>();
}

inline PinnModel make_pinn(const PinnProblem& pb, const PinnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PinnModel model{Mlp(mlp_layout(pb.scaling.n_inputs(), cfg.width, cfg.hidden, 4), cfg.activation), pb.scaling, pb.ages,
                  pb.node_z, pb.weights, seed};
  model.net.initialize(seed);
  return model;
}

struct PinnTraining {
  PinnModel model;
  TrainingHistory history;
};

/// Full-batch Adam on omega_d L_d + omega_p L_p.
inline PinnTraining train_pinn(const PinnProblem& pb, const PinnConfig& cfg, std::uint64_t seed) {
  PinnTraining out{make_pinn(pb, cfg, seed), {}};
  const auto inputs = pb.inputs();
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  Eigen::VectorXd grad, best = out.model.net.params();
  double best_loss = std::numeric_limits<double>::infinity();
  auto& h = out.history;
  h.epochs = cfg.epochs;
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const bool last = epoch == cfg.epochs;
    const auto L = pinn_loss(out.model.net, pb, inputs, cfg, last ? nullptr : &grad);
    if (!std::isfinite(L.total)) {
      h.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      throw TrainingError("PINN training diverged at epoch " + std::to_string(epoch), epoch, h);
    }
    h.trace.push_back(L.total);
    if (L.total < best_loss) {
      best_loss = L.total;
      h.best_epoch = epoch;
      if (cfg.keep_best) best = out.model.net.params();
    }
    if (epoch % cfg.record_every == 0 || last) h.records.push_back({epoch, L.total, L.data, L.physics});
    if (!last) adam_step(out.model.net.params(), grad, adam);
  }
  h.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (cfg.keep_best) out.model.net.params() = best;
  return out;
}

/// Network evaluations at times x ages x nodes, with the node average.
struct PinnPrediction {
  std::vector<double> times;
  std::size_t n_ages = 0, n_nodes = 0;
  std::vector<double> values;  // [time][node][age][compartment]
  std::vector<double> mean;    // [time][age][compartment]

  double value(std::size_t n, std::size_t m, std::size_t a, std::size_t i) const {
    return values[((n * n_nodes + m) * n_ages + a) * 4 + i];
  }
  double mean_value(std::size_t n, std::size_t a, std::size_t i) const { return mean[(n * n_ages + a) * 4 + i]; }
};

inline PinnPrediction predict(const PinnModel& model, std::span<const double> times) {
  PinnPrediction p;
  p.times.assign(times.begin(), times.end());
  p.n_ages = model.ages.size();
  p.n_nodes = model.weights.size();
  const auto mid = detail::class_midpoints(model.ages);
  Eigen::MatrixXd X(model.scaling.n_inputs(), static_cast<Eigen::Index>(times.size() * p.n_nodes * p.n_ages));
  Eigen::Index c = 0;
  for (double t : times)
    for (std::size_t m = 0; m < p.n_nodes; ++m)
      for (std::size_t a = 0; a < p.n_ages; ++a) model.scaling.fill(X.col(c++), mid[a], t, model.node_z[m]);
  const Eigen::MatrixXd Y = model.net.forward(X).output();
  p.values.resize(static_cast<std::size_t>(Y.size()));
  p.mean.assign(times.size() * p.n_ages * 4, 0.0);
  for (Eigen::Index col = 0; col < Y.cols(); ++col)
    for (std::size_t i = 0; i < 4; ++i) {
      const double f = model.scaling.out_offset[i] + model.scaling.out_scale[i] * Y(static_cast<Eigen::Index>(i), col);
      p.values[static_cast<std::size_t>(col) * 4 + i] = f;
    }
  for (std::size_t n = 0; n < times.size(); ++n)
    for (std::size_t a = 0; a < p.n_ages; ++a)
      for (std::size_t i = 0; i < 4; ++i) {
        std::vector<double> v(p.n_nodes);
        for (std::size_t m = 0; m < p.n_nodes; ++m) v[m] = p.value(n, m, a, i);
        p.mean[(n * p.n_ages + a) * 4 + i] = expect(model.weights, v);
      }
  return p;
}

/// CSV rows t,age_class,node,S,I,A,R with node "mean" for the node average.
inline void write_prediction_csv(std::ostream& os, const PinnPrediction& p, const AgeGrid& ages) {
  os << "t,age_class,node,S,I,A,R\n";
  for (std::size_t n = 0; n < p.times.size(); ++n)
    for (std::size_t a = 0; a < p.n_ages; ++a) {
      for (std::size_t m = 0; m < p.n_nodes; ++m) {
        os << fmt_double(p.times[n]) << ',' << ages[a].label << ',' << m;
        for (std::size_t i = 0; i < 4; ++i) os << ',' << fmt_double(p.value(n, m, a, i));
        os << '\n';
      }
      os << fmt_double(p.times[n]) << ',' << ages[a].label << ",mean";
      for (std::size_t i = 0; i < 4; ++i) os << ',' << fmt_double(p.mean_value(n, a, i));
      os << '\n';
    }
}

}  // namespace epiforge
