#pragma once

// Nonlinear autoregressive forecaster: the previous d infected values of every
// (age class, node) channel predict the next value of every channel.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "epiforge/dataset.hpp"
#include "epiforge/error.hpp"
#include "epiforge/format.hpp"
#include "epiforge/mlp.hpp"
#include "epiforge/quadrature.hpp"
#include "epiforge/training.hpp"

namespace epiforge {

struct NarConfig {
  int delay = 5;
  int epochs = 20000;
  double learning_rate = 1e-2;
  int width = 16;
  int hidden = 2;
  Activation activation = Activation::relu;
  int record_every = 100;
  bool keep_best = true;  // return the lowest-loss iterate rather than the last one

  void validate() const {
    if (delay < 1) throw std::invalid_argument("NarConfig: delay must be at least 1");
    if (epochs < 0) throw std::invalid_argument("NarConfig: negative epoch count");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("NarConfig: learning rate must be positive");
    if (width < 1 || hidden < 0 || record_every < 1) throw std::invalid_argument("NarConfig: bad architecture");
  }
};

inline void to_json(nlohmann::json& j, const NarConfig& c) {
  j = {{"delay", c.delay}, {"epochs", c.epochs}, {"learning_rate", c.learning_rate}, {"width", c.width},
       {"hidden", c.hidden}, {"activation", to_string(c.activation)}, {"record_every", c.record_every}, {"keep_best", c.keep_best}};
}
inline void from_json(const nlohmann::json& j, NarConfig& c) {
  const NarConfig d;
  c.delay = j.value("delay", d.delay);
  c.epochs = j.value("epochs", d.epochs);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.width = j.value("width", d.width);
  c.hidden = j.value("hidden", d.hidden);
  c.activation = activation_from_string(j.value("activation", to_string(d.activation)));
  c.record_every = j.value("record_every", d.record_every);
  c.keep_best = j.value("keep_best", d.keep_best);
}

/// Uniformly sampled multichannel series; channel index is age * n_nodes + node.
struct NarSeries {
  std::vector<double> times;
  std::size_t n_ages = 1, n_nodes = 1;
  Eigen::MatrixXd values;  // channels x times

  std::size_t n_channels() const { return n_ages * n_nodes; }
  std::size_t length() const { return times.size(); }
  static std::size_t channel(std::size_t age, std::size_t node, std::size_t n_nodes) { return age * n_nodes + node; }
};

/// Single-channel series with unit spacing.
inline NarSeries scalar_series(std::span<const double> v, double t0 = 0.0, double dt = 1.0) {
  NarSeries s;
  s.values.resize(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    s.times.push_back(t0 + dt * static_cast<double>(i));
    s.values(0, static_cast<Eigen::Index>(i)) = v[i];
  }
  return s;
}

/// Infected series of `data` over times in [lo, hi].
inline NarSeries infected_series(const EpiDataset& data, double lo, double hi) {
  const auto tab = channel_table(data, kI);
  NarSeries s;
  s.n_ages = tab.n_ages;
  s.n_nodes = tab.n_nodes;
  std::vector<std::size_t> keep;
  for (std::size_t n = 0; n < tab.times.size(); ++n)
    if (tab.times[n] >= lo - 1e-9 && tab.times[n] <= hi + 1e-9) keep.push_back(n);
  s.values.resize(static_cast<Eigen::Index>(s.n_channels()), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    s.times.push_back(tab.times[keep[k]]);
    for (std::size_t a = 0; a < s.n_ages; ++a)
      for (std::size_t m = 0; m < s.n_nodes; ++m)
        s.values(static_cast<Eigen::Index>(NarSeries::channel(a, m, s.n_nodes)), static_cast<Eigen::Index>(k)) =
            tab(keep[k], a, m);
  }
  return s;
}

/// Every `stride`-th sample starting at the first.
inline NarSeries subsample(const NarSeries& s, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("subsample: zero stride");
  NarSeries out;
  out.n_ages = s.n_ages;
  out.n_nodes = s.n_nodes;
  std::vector<Eigen::Index> cols;
  for (std::size_t i = 0; i < s.length(); i += stride) {
    out.times.push_back(s.times[i]);
    cols.push_back(static_cast<Eigen::Index>(i));
  }
  out.values = s.values(Eigen::all, cols);
  return out;
}

inline double sample_step(const NarSeries& s) {
  if (s.length() < 2) return 1.0;
  const double h = s.times[1] - s.times[0];
  for (std::size_t i = 2; i < s.length(); ++i)
    if (std::abs(s.times[i] - s.times[i - 1] - h) > 1e-6 * std::max(1.0, h))
      throw DataError("NAR series is not uniformly sampled near t=" + fmt_double(s.times[i]));
  return h;
}

/// Lag windows as matrix columns. Inputs stack lag 0 (oldest) to lag d-1, each
/// lag holding every channel in (age, node) order.
struct LagWindows {
  int delay = 0;
  std::size_t n_channels = 0;
  Eigen::MatrixXd inputs;   // (d * channels) x K
  Eigen::MatrixXd targets;  // channels x K
  std::vector<double> target_times;

  std::size_t size() const { return static_cast<std::size_t>(targets.cols()); }
};

inline LagWindows make_windows(const NarSeries& s, int d) {
  if (d < 1) throw std::invalid_argument("make_windows: delay must be at least 1");
  const auto len = s.length(), du = static_cast<std::size_t>(d);
  if (len < du + 1)
    throw DataError("series of length " + std::to_string(len) + " is too short for delay " + std::to_string(d));
  sample_step(s);
  const auto C = static_cast<Eigen::Index>(s.n_channels());
  const auto K = static_cast<Eigen::Index>(len - du);
  LagWindows w{d, s.n_channels(), Eigen::MatrixXd(C * d, K), Eigen::MatrixXd(C, K), {}};
  for (Eigen::Index k = 0; k < K; ++k) {
    for (int l = 0; l < d; ++l) w.inputs.block(l * C, k, C, 1) = s.values.col(k + l);
    w.targets.col(k) = s.values.col(k + d);
    w.target_times.push_back(s.times[static_cast<std::size_t>(k) + du]);
  }
  return w;
}

struct NarModel {
  Mlp net;
  int delay = 5;
  std::size_t n_ages = 1, n_nodes = 1;
  double step = 1.0;  // sample spacing the network was trained on
  std::uint64_t seed = 0;

  std::size_t n_channels() const { return n_ages * n_nodes; }
};

inline void to_json(nlohmann::json& j, const NarModel& m) {
  j = {{"kind", "nar"},         {"network", m.net}, {"delay", m.delay}, {"n_ages", m.n_ages},
       {"n_nodes", m.n_nodes}, {"step", m.step},   {"seed", m.seed}};
}
inline void from_json(const nlohmann::json& j, NarModel& m) {
  m.net = j.at("network").get<Mlp>();
  m.delay = j.at("delay").get<int>();
  m.n_ages = j.at("n_ages").get<std::size_t>();
  m.n_nodes = j.at("n_nodes").get<std::size_t>();
  m.step = j.at("step").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
}

inline NarModel make_nar(const NarConfig& cfg, std::size_t n_ages, std::size_t n_nodes, double step,
                         std::uint64_t seed) {
  cfg.validate();
  const int C = static_cast<int>(n_ages * n_nodes);
  NarModel m{Mlp(mlp_layout(cfg.delay * C, cfg.width, cfg.hidden, C), cfg.activation), cfg.delay, n_ages, n_nodes,
             step, seed};
  m.net.initialize(seed);
  return m;
}

/// Mean over windows of the squared target error summed over channels.
inline double nar_loss(const Mlp& net, const LagWindows& w, Eigen::VectorXd* grad = nullptr) {
  const auto fp = net.forward(w.inputs);
  const Eigen::MatrixXd err = fp.output() - w.targets;
  const double K = static_cast<double>(w.size());
  if (grad) *grad = net.backward(fp, (2.0 / K) * err);
  return err.squaredNorm() / K;
}

struct NarTraining {
  NarModel model;
  TrainingHistory history;
};

inline NarTraining train_nar(const NarConfig& cfg, const LagWindows& w, std::size_t n_ages, std::size_t n_nodes,
                             double step, std::uint64_t seed) {
  if (w.size() == 0) throw DataError("NAR training needs at least one window");
  if (w.delay != cfg.delay || w.n_channels != n_ages * n_nodes)
    throw std::invalid_argument("NAR windows do not match the configuration");
  NarTraining out{make_nar(cfg, n_ages, n_nodes, step, seed), {}};
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  Eigen::VectorXd grad, best = out.model.net.params();
  double best_loss = std::numeric_limits<double>::infinity();
  auto& h = out.history;
  h.epochs = cfg.epochs;
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const bool last = epoch == cfg.epochs;
    const double L = nar_loss(out.model.net, w, last ? nullptr : &grad);
    if (!std::isfinite(L)) {
      h.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      throw TrainingError("NAR training diverged at epoch " + std::to_string(epoch), epoch, h);
    }
    h.trace.push_back(L);
    if (L < best_loss) {
      best_loss = L;
      h.best_epoch = epoch;
      if (cfg.keep_best) best = out.model.net.params();
    }
    if (epoch % cfg.record_every == 0 || last) h.records.push_back({epoch, L, L, 0.0});
    if (!last) adam_step(out.model.net.params(), grad, adam);
  }
  h.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (cfg.keep_best) out.model.net.params() = best;
  return out;
}

/// One-step predictions for every window (channels x K).
inline Eigen::MatrixXd predict_open_loop(const NarModel& m, const LagWindows& w) {
  return m.net.forward(w.inputs).output();
}

struct ClosedLoopForecast {
  Eigen::MatrixXd values;  // channels x steps actually produced
  bool truncated = false;  // stopped at a non-finite prediction

  std::size_t steps() const { return static_cast<std::size_t>(values.cols()); }
};

/// Feeds predictions back as inputs. `history` holds the last d samples as
/// columns, oldest first.
inline ClosedLoopForecast forecast_closed_loop(const NarModel& m, const Eigen::MatrixXd& history, int steps) {
  const auto C = static_cast<Eigen::Index>(m.n_channels());
  if (history.rows() != C || history.cols() != m.delay)
    throw std::invalid_argument("closed-loop seed must hold " + std::to_string(m.delay) + " samples of " +
                                std::to_string(C) + " channels");
  if (steps < 0) throw std::invalid_argument("closed-loop forecast: negative step count");
  ClosedLoopForecast out;
  out.values.resize(C, steps);
  Eigen::VectorXd buffer = history.reshaped();
  for (int s = 0; s < steps; ++s) {
    const Eigen::VectorXd next = m.net.evaluate(buffer);
    if (!next.allFinite()) {
      out.values.conservativeResize(C, s);
      out.truncated = true;
      return out;
    }
    out.values.col(s) = next;
    if (m.delay > 1) buffer.head(C * (m.delay - 1)) = buffer.tail(C * (m.delay - 1)).eval();
    buffer.tail(C) = next;
  }
  return out;
}

/// Last d columns of `s` ending at index `end` (exclusive).
inline Eigen::MatrixXd seed_history(const NarSeries& s, std::size_t end, int d) {
  if (end > s.length() || end < static_cast<std::size_t>(d))
    throw DataError("not enough history for a closed-loop seed of length " + std::to_string(d));
  return s.values.middleCols(static_cast<Eigen::Index>(end) - d, d);
}

/// Rows t,age_class,node,I_pred,I_mean where I_mean is the node-weighted mean.
inline void write_forecast_csv(std::ostream& os, std::span<const double> times, const Eigen::MatrixXd& values,
                               const AgeGrid& ages, std::size_t n_nodes, std::span<const double> weights) {
  if (weights.size() != n_nodes) throw std::invalid_argument("write_forecast_csv: weight count mismatch");
  os << "t,age_class,node,I_pred,I_mean\n";
  for (std::size_t k = 0; k < times.size(); ++k)
    for (std::size_t a = 0; a < ages.size(); ++a) {
      std::vector<double> v(n_nodes);
      for (std::size_t m = 0; m < n_nodes; ++m)
        v[m] = values(static_cast<Eigen::Index>(NarSeries::channel(a, m, n_nodes)), static_cast<Eigen::Index>(k));
      const double mean = expect(weights, v);
      for (std::size_t m = 0; m < n_nodes; ++m)
        os << fmt_double(times[k]) << ',' << ages[a].label << ',' << m << ',' << fmt_double(v[m]) << ','
           << fmt_double(mean) << '\n';
    }
}

}  // namespace epiforge
