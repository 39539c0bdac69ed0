#pragma once

// End-to-end experiment: calibrate, augment, train the four networks, forecast
// the test window and score against the reported data. Each stage also has an
// on-disk form that reads its inputs from, and writes its outputs to, the run
// directory so stages can be rerun in isolation.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "epiforge/calibration.hpp"
#include "epiforge/config.hpp"
#include "epiforge/dataset.hpp"
#include "epiforge/evaluation.hpp"
#include "epiforge/nar.hpp"
#include "epiforge/pinn.hpp"

namespace epiforge {

enum class Network { nar, pinn };
enum class TrainingData { synthetic, real };

inline std::string to_string(Network n) { return n == Network::nar ? "NAR" : "PINN"; }
inline std::string to_string(TrainingData d) { return d == TrainingData::synthetic ? "synth" : "real"; }
inline std::string run_name(Network n, TrainingData d) {
  return std::string(n == Network::nar ? "nar" : "pinn") + "_" + to_string(d);
}
inline std::string table2_column(Network n, TrainingData d) { return to_string(n) + "-" + to_string(d); }

inline EpiDataset load_observed(const RunConfig& cfg) {
  auto data = ingest(cfg.data);
  return cfg.variant == ModelVariant::siar ? aggregate_ages(data) : data;
}

inline std::vector<double> test_days(const SplitWindow& w) {
  std::vector<double> d;
  for (int t = static_cast<int>(w.train_end) + 1; t <= static_cast<int>(w.test_end); ++t) d.push_back(t);
  return d;
}

/// Whole days from the start of training to the end of the test window.
inline std::vector<double> horizon_days(const SplitWindow& w) {
  std::vector<double> d;
  for (int t = static_cast<int>(w.train_begin); t <= static_cast<int>(w.test_end); ++t) d.push_back(t);
  return d;
}

/// Reported infected fractions on `days` (all must be present).
inline InfectedCurve observed_curve(const EpiDataset& obs, std::span<const double> days) {
  const ObservedSeries s(obs);
  InfectedCurve all{s.I.times, Eigen::MatrixXd(static_cast<Eigen::Index>(s.I.n_ages),
                                               static_cast<Eigen::Index>(s.I.times.size()))};
  for (std::size_t n = 0; n < s.I.times.size(); ++n)
    for (std::size_t a = 0; a < s.I.n_ages; ++a)
      all.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(n)) = s.I(n, a, 0);
  return all.at_times(days);
}

struct Experiment {
  RunConfig cfg;
  EpiDataset observed;
  CalibrationResult calib;
  EpiDataset synthetic;  // [tL, T] at step augment_h

  SplitWindow window() const { return split_window(cfg.mode); }
};

inline CalibrationResult run_calibration(const RunConfig& cfg, const EpiDataset& observed) {
  return calibrate(observed, cfg.quadrature.nodes(), cfg.calibration);
}

inline EpiDataset run_augmentation(const RunConfig& cfg, const CalibrationResult& calib) {
  return augment(calib, cfg.calibration.tL, cfg.calibration.T, cfg.augment_h);
}

inline Experiment prepare_experiment(const RunConfig& cfg) {
  Experiment e{cfg, load_observed(cfg), {}, {}};
  split(e.observed, cfg.mode);  // coverage check
  e.calib = run_calibration(cfg, e.observed);
  e.synthetic = run_augmentation(cfg, e.calib);
  return e;
}

/// Outcome of training one network and forecasting the test window.
struct NetworkRun {
  Network network = Network::nar;
  TrainingData data = TrainingData::synthetic;
  InfectedCurve forecast;  // node-mean infected per age class at the test days
  TrainingHistory history;
  nlohmann::json checkpoint;
};

namespace detail {

inline InfectedCurve node_mean(const Eigen::MatrixXd& channels, std::span<const double> times, std::size_t n_ages,
                               std::span<const double> weights) {
  const std::size_t M = weights.size();
  InfectedCurve c{{times.begin(), times.end()}, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_ages), channels.cols())};
  for (Eigen::Index k = 0; k < channels.cols(); ++k)
    for (std::size_t a = 0; a < n_ages; ++a) {
      std::vector<double> v(M);
      for (std::size_t m = 0; m < M; ++m) v[m] = channels(static_cast<Eigen::Index>(a * M + m), k);
      c.values(static_cast<Eigen::Index>(a), k) = expect(weights, v);
    }
  return c;
}

inline InfectedCurve pinn_infected(const PinnModel& model, std::span<const double> times) {
  const auto p = predict(model, times);
  InfectedCurve c{{times.begin(), times.end()},
                  Eigen::MatrixXd(static_cast<Eigen::Index>(p.n_ages), static_cast<Eigen::Index>(times.size()))};
  for (std::size_t n = 0; n < times.size(); ++n)
    for (std::size_t a = 0; a < p.n_ages; ++a)
      c.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(n)) = p.mean_value(n, a, kI);
  return c;
}

inline std::size_t closed_loop_steps(double from, double to, double step) {
  return static_cast<std::size_t>(std::llround((to - from) / step));
}

}  // namespace detail

/// Training series for the NAR network: synthetic per-node channels on the
/// augmentation grid, or reported daily data.
inline NarSeries nar_training_series(const Experiment& e, TrainingData d) {
  const auto w = e.window();
  return d == TrainingData::synthetic ? infected_series(e.synthetic, w.train_begin, w.train_end)
                                      : infected_series(e.observed, w.train_begin, w.train_end);
}

/// Closed-loop NAR forecast from the end of the training window. Returns the
/// node-mean curve on the forecast grid.
inline InfectedCurve nar_forecast_curve(const NarModel& model, const NarSeries& train, double train_end, double test_end,
                                        std::span<const double> weights, bool* truncated = nullptr) {
  const auto steps = detail::closed_loop_steps(train_end, test_end, model.step);
  const auto f = forecast_closed_loop(model, seed_history(train, train.length(), model.delay), static_cast<int>(steps));
  if (truncated)
    *truncated = f.truncated;
  else if (f.truncated)
    throw NumericalError("NAR closed-loop forecast became non-finite", train_end + model.step * double(f.steps() + 1));
  std::vector<double> times;
  for (std::size_t s = 0; s < f.steps(); ++s) times.push_back(train_end + model.step * static_cast<double>(s + 1));
  return detail::node_mean(f.values, times, model.n_ages, weights);
}

inline NarTraining train_nar_on(const Experiment& e, TrainingData d, std::uint64_t seed) {
  const auto series = nar_training_series(e, d);
  const auto windows = make_windows(series, e.cfg.nar.delay);
  return train_nar(e.cfg.nar, windows, series.n_ages, series.n_nodes, sample_step(series), seed);
}

inline PinnProblem pinn_problem(const Experiment& e, TrainingData d) {
  const auto w = e.window();
  return d == TrainingData::synthetic
             ? make_synthetic_problem(e.synthetic, e.calib, w.train_begin, w.train_end)
             : make_real_problem(e.observed, e.calib, w.train_begin, w.train_end, e.cfg.calibration.T);
}

inline NetworkRun run_nar(const Experiment& e, TrainingData d, std::uint64_t seed) {
  const auto w = e.window();
  const auto series = nar_training_series(e, d);
  auto tr = train_nar_on(e, d, seed);
  const std::vector<double> weights = d == TrainingData::synthetic ? e.calib.weights() : std::vector<double>{1.0};
  const auto days = test_days(w);
  const auto curve = nar_forecast_curve(tr.model, series, w.train_end, w.test_end, weights);
  return {Network::nar, d, curve.at_times(days), std::move(tr.history), tr.model};
}

inline NetworkRun run_pinn(const Experiment& e, TrainingData d, std::uint64_t seed) {
  const auto pb = pinn_problem(e, d);
  auto tr = train_pinn(pb, e.cfg.pinn, seed);
  const auto days = test_days(e.window());
  return {Network::pinn, d, detail::pinn_infected(tr.model, days), std::move(tr.history), tr.model};
}

inline NetworkRun run_network(const Experiment& e, Network n, TrainingData d, std::uint64_t seed) {
  return n == Network::nar ? run_nar(e, d, seed) : run_pinn(e, d, seed);
}

// ---------------------------------------------------------------------------
// Scoring.

struct Scores {
  ErrorCurve per_class;   // |forecast - data| per age class and test day
  ErrorCurve integrated;  // same for the class-summed series
};

inline Scores score(const InfectedCurve& forecast, const EpiDataset& observed) {
  const auto data = observed_curve(observed, forecast.times);
  return {pointwise_error(forecast, data), pointwise_error(forecast.integrated(), data.integrated())};
}

/// Error-table cells for one network: the class-integrated row for the non-aged
/// model, one row per class for the aged model.
inline std::vector<Table2Cell> table2_cells(ModelVariant v, Network n, TrainingData d, const Scores& s,
                                            const AgeGrid& ages) {
  std::vector<Table2Cell> cells;
  const auto col = table2_column(n, d);
  if (v == ModelVariant::siar) {
    cells.push_back({to_string(v), 0, "Non-aged model", col, s.integrated.max()});
  } else {
    for (std::size_t a = 0; a < ages.size(); ++a)
      cells.push_back({to_string(v), static_cast<int>(a), ages[a].label, col, s.per_class.max(a)});
  }
  return cells;
}

inline PeakMetrics forecast_peak(const InfectedCurve& forecast, const EpiDataset& observed) {
  const auto data = observed_curve(observed, forecast.times).integrated();
  const auto pred = forecast.integrated();
  std::vector<double> p(pred.values.data(), pred.values.data() + pred.values.size()),
      q(data.values.data(), data.values.data() + data.values.size());
  return peak_metrics(forecast.times, p, q);
}

// ---------------------------------------------------------------------------
// On-disk stages.

namespace files {
inline std::filesystem::path calibration(const std::filesystem::path& out) { return out / "calibration.json"; }
inline std::filesystem::path synthetic(const std::filesystem::path& out) { return out / "synthetic.csv"; }
inline std::filesystem::path checkpoint(const std::filesystem::path& out, Network n, TrainingData d) {
  return out / (run_name(n, d) + ".json");
}
inline std::filesystem::path history(const std::filesystem::path& out, Network n, TrainingData d) {
  return out / (run_name(n, d) + "_history.csv");
}
inline std::filesystem::path forecast(const std::filesystem::path& out, Network n, TrainingData d) {
  return out / ("forecast_" + run_name(n, d) + ".csv");
}
inline std::filesystem::path trajectory(const std::filesystem::path& out, TrainingData d) {
  return out / ("trajectory_pinn_" + to_string(d) + ".csv");
}
inline std::filesystem::path timing(const std::filesystem::path& out, Network n, TrainingData d) {
  return out / "timing" / (run_name(n, d) + ".json");
}
}  // namespace files

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw FileError("cannot write " + p.string());
  os.precision(17);
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& p, const std::string& producer) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FileError("missing " + p.string() + " (run '" + producer + "' first)");
  return in;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) { open_out(p) << j.dump(2) << '\n'; }

inline nlohmann::json read_json(const std::filesystem::path& p, const std::string& producer) {
  auto in = open_in(p, producer);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

inline void write_curve_csv(const std::filesystem::path& p, const InfectedCurve& c, const AgeGrid& ages) {
  auto os = open_out(p);
  os << "t,date,age_class,I\n";
  for (std::size_t n = 0; n < c.times.size(); ++n)
    for (std::size_t a = 0; a < c.n_ages(); ++a)
      os << fmt_double(c.times[n]) << ',' << iso_date(static_cast<int>(std::lround(c.times[n]))) << ','
         << ages[a].label << ',' << fmt_double(c.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(n)))
         << '\n';
}

inline InfectedCurve read_curve_csv(const std::filesystem::path& p, const AgeGrid& ages) {
  auto in = open_in(p, "forecast");
  std::string line;
  std::getline(in, line);
  if (line != "t,date,age_class,I") throw DataError(p.string() + ": unexpected header");
  std::vector<double> times;
  std::vector<std::vector<double>> cols;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw DataError(p.string() + ": malformed row '" + line + "'");
    const double t = parse_double(f[0]);
    if (times.empty() || times.back() != t) {
      times.push_back(t);
      cols.emplace_back(ages.size(), std::nan(""));
    }
    cols.back()[ages.index_of(f[2])] = parse_double(f[3]);
  }
  InfectedCurve c{times, Eigen::MatrixXd(static_cast<Eigen::Index>(ages.size()), static_cast<Eigen::Index>(times.size()))};
  for (std::size_t n = 0; n < times.size(); ++n)
    for (std::size_t a = 0; a < ages.size(); ++a) {
      if (std::isnan(cols[n][a])) throw DataError(p.string() + ": missing class " + ages[a].label);
      c.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(n)) = cols[n][a];
    }
  return c;
}

inline void write_history(const std::filesystem::path& p, const TrainingHistory& h) {
  auto os = open_out(p);
  write_history_csv(os, h);
}

}  // namespace detail

/// Observed data plus whatever upstream artifacts exist in the run directory.
inline Experiment load_experiment(const RunConfig& cfg, bool need_calibration, bool need_synthetic) {
  Experiment e{cfg, load_observed(cfg), {}, {}};
  const std::filesystem::path out = cfg.out;
  if (need_calibration) e.calib = detail::read_json(files::calibration(out), "calibrate").get<CalibrationResult>();
  if (need_synthetic) {
    auto in = detail::open_in(files::synthetic(out), "augment");
    e.synthetic = read_synthetic_csv(in, e.observed.ages, cfg.augment_h);
  }
  return e;
}

inline void stage_calibrate(const RunConfig& cfg) {
  const std::filesystem::path out = cfg.out;
  const auto obs = load_observed(cfg);
  const auto r = run_calibration(cfg, obs);
  detail::write_json(files::calibration(out), r);
  auto os = detail::open_out(out / "calibration_fit.csv");
  write_fit_csv(os, r, obs);
}

inline void stage_augment(const RunConfig& cfg) {
  const std::filesystem::path out = cfg.out;
  const auto e = load_experiment(cfg, true, false);
  const auto syn = run_augmentation(cfg, e.calib);
  auto os = detail::open_out(files::synthetic(out));
  write_synthetic_csv(os, syn);
  detail::write_json(out / "split.json", split_manifest(cfg.mode));
}

inline void save_training(const RunConfig& cfg, Network n, TrainingData d, const nlohmann::json& checkpoint,
                          const TrainingHistory& h) {
  const std::filesystem::path out = cfg.out;
  detail::write_json(files::checkpoint(out, n, d), checkpoint);
  detail::write_history(files::history(out, n, d), h);
  detail::write_json(files::timing(out, n, d), {{"epochs", h.epochs}, {"seconds", h.seconds}});
}

inline void stage_train(const RunConfig& cfg, Network n) {
  const auto e = load_experiment(cfg, true, true);
  for (auto d : {TrainingData::synthetic, TrainingData::real}) {
    if (n == Network::pinn) {
      const auto tr = train_pinn(pinn_problem(e, d), cfg.pinn, cfg.seed);
      save_training(cfg, n, d, tr.model, tr.history);
    } else {
      const auto tr = train_nar_on(e, d, cfg.seed);
      save_training(cfg, n, d, tr.model, tr.history);
    }
  }
}

inline void stage_forecast(const RunConfig& cfg) {
  const std::filesystem::path out = cfg.out;
  const auto e = load_experiment(cfg, true, true);
  const auto w = e.window();
  const auto days = test_days(w);
  for (auto d : {TrainingData::synthetic, TrainingData::real}) {
    const auto nar = detail::read_json(files::checkpoint(out, Network::nar, d), "train-nar").get<NarModel>();
    const auto series = nar_training_series(e, d);
    const std::vector<double> weights = d == TrainingData::synthetic ? e.calib.weights() : std::vector<double>{1.0};
    const auto curve = nar_forecast_curve(nar, series, w.train_end, w.test_end, weights);
    detail::write_curve_csv(files::forecast(out, Network::nar, d), curve.at_times(days), e.observed.ages);

    const auto pinn = detail::read_json(files::checkpoint(out, Network::pinn, d), "train-pinn").get<PinnModel>();
    detail::write_curve_csv(files::forecast(out, Network::pinn, d), detail::pinn_infected(pinn, days), e.observed.ages);
    detail::write_curve_csv(files::trajectory(out, d), detail::pinn_infected(pinn, horizon_days(w)), e.observed.ages);
    auto os = detail::open_out(out / ("prediction_" + run_name(Network::pinn, d) + ".csv"));
    write_prediction_csv(os, predict(pinn, days), pinn.ages);
  }
}

struct Evaluation {
  Table2 table;
  std::map<std::string, PeakMetrics> peaks;          // over the test window
  std::map<std::string, PeakMetrics> horizon_peaks;  // PINN curves from the start of training
  std::map<std::string, Scores> scores;
};

inline Evaluation evaluate_forecasts(const RunConfig& cfg, const EpiDataset& observed,
                                     const std::map<std::pair<Network, TrainingData>, InfectedCurve>& forecasts,
                                     const std::map<TrainingData, InfectedCurve>& trajectories = {}) {
  Evaluation ev;
  for (const auto& [d, curve] : trajectories)
    ev.horizon_peaks[table2_column(Network::pinn, d)] = forecast_peak(curve, observed);
  std::vector<Table2Cell> cells;
  for (const auto& [key, curve] : forecasts) {
    const auto& [n, d] = key;
    auto s = score(curve, observed);
    for (auto& c : table2_cells(cfg.variant, n, d, s, observed.ages)) cells.push_back(c);
    ev.peaks[table2_column(n, d)] = forecast_peak(curve, observed);
    ev.scores.emplace(table2_column(n, d), std::move(s));
  }
  ev.table = table2(cells);
  return ev;
}

inline void stage_evaluate(const RunConfig& cfg) {
  const std::filesystem::path out = cfg.out;
  const auto obs = load_observed(cfg);
  std::map<std::pair<Network, TrainingData>, InfectedCurve> forecasts;
  std::map<TrainingData, InfectedCurve> trajectories;
  std::vector<Timing> timings;
  for (auto d : {TrainingData::synthetic, TrainingData::real})
    if (std::filesystem::exists(files::trajectory(out, d)))
      trajectories.emplace(d, detail::read_curve_csv(files::trajectory(out, d), obs.ages));
  for (auto n : {Network::nar, Network::pinn})
    for (auto d : {TrainingData::synthetic, TrainingData::real}) {
      const auto p = files::forecast(out, n, d);
      if (std::filesystem::exists(p)) forecasts.emplace(std::pair{n, d}, detail::read_curve_csv(p, obs.ages));
      const auto t = files::timing(out, n, d);
      if (std::filesystem::exists(t)) {
        const auto j = detail::read_json(t, "train");
        timings.push_back({to_string(cfg.variant), to_string(n), to_string(d), j.at("epochs").get<int>(),
                           j.at("seconds").get<double>()});
      }
    }
  if (forecasts.empty()) throw FileError("no forecasts in " + out.string() + " (run 'forecast' first)");
  const auto ev = evaluate_forecasts(cfg, obs, forecasts, trajectories);
  for (const auto& w : ev.table.warnings) std::cerr << "warning: " << w << '\n';
  {
    auto os = detail::open_out(out / "table2.csv");
    write_table2_csv(os, ev.table);
  }
  nlohmann::json peaks = {{"test_window", nlohmann::json::object()}, {"horizon", nlohmann::json::object()}},
                 errors = nlohmann::json::object();
  for (const auto& [name, pk] : ev.peaks) peaks["test_window"][name] = pk;
  for (const auto& [name, pk] : ev.horizon_peaks) peaks["horizon"][name] = pk;
  {
    auto os = detail::open_out(out / "errors.csv");
    os << "network,t,age_class,error\n";
    for (const auto& [name, s] : ev.scores) {
      for (std::size_t k = 0; k < s.per_class.times.size(); ++k)
        for (std::size_t a = 0; a < obs.ages.size(); ++a)
          os << name << ',' << fmt_double(s.per_class.times[k]) << ',' << obs.ages[a].label << ','
             << fmt_double(s.per_class.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k))) << '\n';
      nlohmann::json per_class = nlohmann::json::object();
      for (std::size_t a = 0; a < obs.ages.size(); ++a) per_class[obs.ages[a].label] = s.per_class.max(a);
      errors[name] = {{"max_integrated", s.integrated.max()}, {"max_per_class", per_class}};
    }
  }
  detail::write_json(out / "peaks.json", peaks);
  detail::write_json(out / "summary.json", {{"variant", to_string(cfg.variant)},
                                            {"mode", to_string(cfg.mode)},
                                            {"seed", cfg.seed},
                                            {"split", split_manifest(cfg.mode)},
                                            {"table2", ev.table},
                                            {"max_errors", errors},
                                            {"peaks", peaks},
                                            {"warnings", ev.table.warnings}});
  if (!timings.empty()) {
    const auto cost = cost_report(timings);
    auto os = detail::open_out(out / "timing" / "table1.csv");
    write_cost_csv(os, cost);
    detail::write_json(out / "timing" / "cost.json", cost);
  }
}

inline void stage_run_all(const RunConfig& cfg) {
  stage_calibrate(cfg);
  stage_augment(cfg);
  stage_train(cfg, Network::pinn);
  stage_train(cfg, Network::nar);
  stage_forecast(cfg);
  stage_evaluate(cfg);
}

}  // namespace epiforge
