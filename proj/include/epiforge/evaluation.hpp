#pragma once

// Error metrics, report tables and training cost.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "epiforge/error.hpp"
#include "epiforge/format.hpp"

namespace epiforge {

/// Infected fractions per age class (rows) and time (columns).
struct InfectedCurve {
  std::vector<double> times;
  Eigen::MatrixXd values;

  std::size_t n_ages() const { return static_cast<std::size_t>(values.rows()); }

  /// Class-integrated series (sum over age classes) as a one-row curve.
  InfectedCurve integrated() const { return {times, values.colwise().sum()}; }

  /// Columns at `at`; every requested time must be present.
  InfectedCurve at_times(std::span<const double> at) const {
    InfectedCurve out{{at.begin(), at.end()}, Eigen::MatrixXd(values.rows(), static_cast<Eigen::Index>(at.size()))};
    std::size_t j = 0;
    for (std::size_t k = 0; k < at.size(); ++k) {
      while (j < times.size() && times[j] < at[k] - 1e-6) ++j;
      if (j == times.size() || std::abs(times[j] - at[k]) > 1e-6)
        throw DataError("prediction has no sample at t=" + fmt_double(at[k]));
      out.values.col(static_cast<Eigen::Index>(k)) = values.col(static_cast<Eigen::Index>(j));
    }
    return out;
  }
};

struct ErrorCurve {
  std::vector<double> times;
  Eigen::MatrixXd values;  // |pred - data| per age class and time

  double max(std::size_t age) const { return values.row(static_cast<Eigen::Index>(age)).maxCoeff(); }
  double max() const { return values.maxCoeff(); }
};

inline ErrorCurve pointwise_error(const InfectedCurve& pred, const InfectedCurve& data) {
  if (pred.times.size() != data.times.size() || pred.values.rows() != data.values.rows())
    throw DataError("prediction and data are not aligned");
  for (std::size_t k = 0; k < pred.times.size(); ++k)
    if (std::abs(pred.times[k] - data.times[k]) > 1e-6)
      throw DataError("prediction and data are misaligned at t=" + fmt_double(data.times[k]));
  if (data.times.empty()) throw DataError("empty error window");
  return {data.times, (pred.values - data.values).cwiseAbs()};
}

// ---------------------------------------------------------------------------
// Error table: maximum test error by row and (network, training data) column.

inline const std::vector<std::string>& table2_columns() {
  static const std::vector<std::string> cols{"NAR-synth", "NAR-real", "PINN-synth", "PINN-real"};
  return cols;
}

struct Table2Cell {
  std::string model;  // e.g. "siar" or "siar_aged"
  int row_order = 0;  // position of the row within its model
  std::string row;    // e.g. "Non-aged model" or an age-class label
  std::string column;
  double value = 0.0;
};

struct Table2 {
  struct Row {
    std::string model;
    std::string label;
    std::vector<std::optional<double>> cells;  // one per column
  };
  std::vector<Row> rows;
  std::vector<std::string> warnings;
};

inline Table2 table2(std::span<const Table2Cell> cells) {
  const auto& cols = table2_columns();
  std::map<std::tuple<std::string, int, std::string>, std::vector<std::optional<double>>> grid;
  for (const auto& c : cells) {
    const auto col = std::find(cols.begin(), cols.end(), c.column);
    if (col == cols.end()) throw std::invalid_argument("unknown error-table column '" + c.column + "'");
    auto& row = grid[{c.model, c.row_order, c.row}];
    row.resize(cols.size());
    auto& slot = row[static_cast<std::size_t>(col - cols.begin())];
    if (slot) throw std::invalid_argument("duplicate error-table cell " + c.model + "/" + c.row + "/" + c.column);
    slot = c.value;
  }
  Table2 t;
  for (auto& [key, row] : grid) {
    const auto& [model, order, label] = key;
    for (std::size_t j = 0; j < cols.size(); ++j)
      if (!row[j]) t.warnings.push_back("missing " + cols[j] + " for " + model + "/" + label);
    t.rows.push_back({model, label, row});
  }
  return t;
}

inline void write_table2_csv(std::ostream& os, const Table2& t) {
  os << "model,row";
  for (const auto& c : table2_columns()) os << ',' << c;
  os << '\n';
  for (const auto& r : t.rows) {
    os << r.model << ',' << r.label;
    for (const auto& c : r.cells) {
      os << ',';
      if (c) os << fmt_double(*c);
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Training cost.

struct Timing {
  std::string model;
  std::string network;  // "NAR" or "PINN"
  std::string data;     // "synth" or "real"
  int epochs = 0;
  double seconds = 0.0;

  double per_epoch() const {
    if (epochs <= 0) throw std::invalid_argument("no timing for " + model + "/" + network + "/" + data);
    return seconds / epochs;
  }
};

struct CostRatio {
  std::string model;
  std::string data;
  double ratio = 0.0;  // PINN per-epoch seconds over NAR per-epoch seconds
};

struct CostReport {
  std::vector<Timing> timings;
  std::vector<CostRatio> ratios;
};

inline CostReport cost_report(std::vector<Timing> timings) {
  for (const auto& t : timings) t.per_epoch();
  std::sort(timings.begin(), timings.end(), [](const Timing& a, const Timing& b) {
    return std::tie(a.model, a.network, a.data) < std::tie(b.model, b.network, b.data);
  });
  CostReport r{timings, {}};
  for (const auto& p : timings) {
    if (p.network != "PINN") continue;
    for (const auto& n : timings)
      if (n.network == "NAR" && n.model == p.model && n.data == p.data)
        r.ratios.push_back({p.model, p.data, p.per_epoch() / n.per_epoch()});
  }
  return r;
}

inline void write_cost_csv(std::ostream& os, const CostReport& r) {
  os << "model,network,data,epochs,seconds,seconds_per_epoch\n";
  for (const auto& t : r.timings)
    os << t.model << ',' << t.network << ',' << t.data << ',' << t.epochs << ',' << fmt_double(t.seconds) << ','
       << fmt_double(t.per_epoch()) << '\n';
  os << "\nmodel,data,pinn_over_nar_per_epoch\n";
  for (const auto& q : r.ratios) os << q.model << ',' << q.data << ',' << fmt_double(q.ratio) << '\n';
}

// ---------------------------------------------------------------------------
// Peak of the infected curve.

struct Peak {
  double time = 0.0;
  double height = 0.0;
  bool flagged = false;  // maximizer is not unique or sits at an end of the window
};

inline Peak find_peak(std::span<const double> times, std::span<const double> values) {
  if (times.size() != values.size() || times.empty()) throw DataError("peak search needs a non-empty aligned series");
  const auto it = std::max_element(values.begin(), values.end());
  const auto i = static_cast<std::size_t>(it - values.begin());
  Peak p{times[i], *it, false};
  const auto ties = std::count(values.begin(), values.end(), *it);
  p.flagged = ties > 1 || i == 0 || i + 1 == values.size();
  return p;
}

struct PeakMetrics {
  Peak pred;
  Peak data;
  double time_delta = 0.0;    // pred - data, days
  double height_delta = 0.0;  // pred - data
  bool flagged = false;
};

inline PeakMetrics peak_metrics(std::span<const double> times, std::span<const double> pred,
                                std::span<const double> data) {
  PeakMetrics m{find_peak(times, pred), find_peak(times, data), 0.0, 0.0, false};
  m.time_delta = m.pred.time - m.data.time;
  m.height_delta = m.pred.height - m.data.height;
  m.flagged = m.pred.flagged || m.data.flagged;
  return m;
}

inline void to_json(nlohmann::json& j, const Peak& p) {
  j = {{"time", p.time}, {"height", p.height}, {"flagged", p.flagged}};
}
inline void to_json(nlohmann::json& j, const PeakMetrics& m) {
  j = {{"pred", m.pred}, {"data", m.data}, {"time_delta", m.time_delta}, {"height_delta", m.height_delta},
       {"flagged", m.flagged}};
}
inline void to_json(nlohmann::json& j, const Table2& t) {
  j = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json cells = nlohmann::json::object();
    for (std::size_t c = 0; c < r.cells.size(); ++c)
      cells[table2_columns()[c]] = r.cells[c] ? nlohmann::json(*r.cells[c]) : nlohmann::json(nullptr);
    j.push_back({{"model", r.model}, {"row", r.label}, {"max_error", cells}});
  }
}
inline void to_json(nlohmann::json& j, const CostReport& r) {
  j = nlohmann::json::object();
  j["timings"] = nlohmann::json::array();
  for (const auto& t : r.timings)
    j["timings"].push_back({{"model", t.model}, {"network", t.network}, {"data", t.data}, {"epochs", t.epochs},
                            {"seconds", t.seconds}, {"seconds_per_epoch", t.per_epoch()}});
  j["ratios"] = nlohmann::json::array();
  for (const auto& q : r.ratios) j["ratios"].push_back({{"model", q.model}, {"data", q.data}, {"ratio", q.ratio}});
}

}  // namespace epiforge
