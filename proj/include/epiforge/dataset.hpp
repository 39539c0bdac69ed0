#pragma once

// Observed and synthetic epidemic series: CSV ingestion and export, calendar
// mapping, train/test splits and dense per-channel views.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epiforge/error.hpp"
#include "epiforge/format.hpp"
#include "epiforge/models.hpp"

namespace epiforge {

// ---------------------------------------------------------------------------
// Calendar: day index t counts days since 2020-10-06, so 2020-10-08 is t=2
// and 2020-10-21 is t=15.

inline constexpr std::chrono::year_month_day kCalendarOrigin{std::chrono::year{2020}, std::chrono::month{10},
                                                             std::chrono::day{6}};

inline int day_index(std::string_view iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  const std::string s(iso);
  if (std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3 || s.size() != 10)
    throw DataError("bad date '" + s + "' (expected YYYY-MM-DD)");
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + s + "'");
  return static_cast<int>((std::chrono::sys_days{ymd} - std::chrono::sys_days{kCalendarOrigin}).count());
}

inline std::string iso_date(int day) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{kCalendarOrigin} + std::chrono::days{day}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

// ---------------------------------------------------------------------------

enum class DataKind { observed, synthetic };
enum class SplitRole { unsplit, train, test };
enum class SplitMode { short_term, long_term };

struct EpiRecord {
  double t = 0.0;
  std::size_t age = 0;
  std::optional<std::size_t> node;  // synthetic only
  double I = 0.0;
  double R = 0.0;
  std::optional<double> S;  // synthetic only
  std::optional<double> A;  // synthetic only
  std::optional<double> population;  // observed only

  bool operator==(const EpiRecord&) const = default;
};

struct EpiDataset {
  AgeGrid ages = AgeGrid::single();
  std::vector<EpiRecord> records;
  DataKind kind = DataKind::observed;
  SplitRole split = SplitRole::unsplit;
  double resolution = 1.0;

  std::size_t n_nodes() const {
    std::size_t n = 1;
    for (const auto& r : records)
      if (r.node) n = std::max(n, *r.node + 1);
    return n;
  }

  std::vector<double> times() const {
    std::vector<double> t;
    for (const auto& r : records)
      if (t.empty() || t.back() != r.t) t.push_back(r.t);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  }

  bool empty() const { return records.empty(); }
};

inline void sort_records(std::vector<EpiRecord>& recs) {
  std::stable_sort(recs.begin(), recs.end(), [](const EpiRecord& a, const EpiRecord& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.age != b.age) return a.age < b.age;
    return a.node.value_or(0) < b.node.value_or(0);
  });
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline long long parse_count(const std::string& field, std::size_t line_no) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(field, &pos);
  } catch (...) {
    throw DataError("line " + std::to_string(line_no) + ": not an integer count '" + field + "'");
  }
  if (pos != field.size()) throw DataError("line " + std::to_string(line_no) + ": not an integer count '" + field + "'");
  if (v < 0) throw DataError("line " + std::to_string(line_no) + ": negative count " + field);
  return v;
}

}  // namespace detail

/// Reads reported data with header date,age_class,infected,recovered,population.
/// Counts are divided by the regional population on each row; the age grid is
/// the single aggregate class when every label is "all", else the regional grid.
inline EpiDataset ingest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("no records");
  const auto header = detail::split_csv_line(line);
  if (header != std::vector<std::string>{"date", "age_class", "infected", "recovered", "population"})
    throw DataError("unexpected header '" + line + "'");

  struct Raw {
    int day;
    std::string label;
    long long infected, recovered, population;
    std::size_t line_no;
  };
  std::vector<Raw> raw;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 5) throw DataError("line " + std::to_string(line_no) + ": expected 5 fields");
    raw.push_back({day_index(f[0]), f[1], detail::parse_count(f[2], line_no), detail::parse_count(f[3], line_no),
                   detail::parse_count(f[4], line_no), line_no});
    if (raw.back().population == 0) throw DataError("line " + std::to_string(line_no) + ": zero population");
  }
  if (raw.empty()) throw DataError("no records");

  EpiDataset data;
  const bool aggregate = std::all_of(raw.begin(), raw.end(), [](const Raw& r) { return r.label == "all"; });
  data.ages = aggregate ? AgeGrid::single() : AgeGrid::regional();

  std::set<std::pair<int, std::size_t>> seen;
  std::map<int, long long> population_by_day;
  for (const auto& r : raw) {
    std::size_t age = 0;
    try {
      age = data.ages.index_of(r.label);
    } catch (const DataError&) {
      throw DataError("line " + std::to_string(r.line_no) + ": unknown age class '" + r.label + "'");
    }
    if (!seen.insert({r.day, age}).second)
      throw DataError("line " + std::to_string(r.line_no) + ": duplicate record for " + iso_date(r.day) + "," + r.label);
    auto [it, fresh] = population_by_day.emplace(r.day, r.population);
    if (!fresh && it->second != r.population)
      throw DataError("line " + std::to_string(r.line_no) + ": population differs within " + iso_date(r.day));
    const double pop = static_cast<double>(r.population);
    data.records.push_back({static_cast<double>(r.day), age, std::nullopt, static_cast<double>(r.infected) / pop,
                            static_cast<double>(r.recovered) / pop, std::nullopt, std::nullopt, pop});
  }

  // Population may drift over time, but only in one direction.
  int direction = 0;
  long long prev = -1;
  for (const auto& [day, pop] : population_by_day) {
    if (prev >= 0 && pop != prev) {
      const int d = pop > prev ? 1 : -1;
      if (direction != 0 && d != direction) throw DataError("population is not monotone (at " + iso_date(day) + ")");
      direction = d;
    }
    prev = pop;
  }

  // Every day between the first and last must carry every age class.
  const int first = population_by_day.begin()->first, last = population_by_day.rbegin()->first;
  for (int day = first; day <= last; ++day)
    for (std::size_t a = 0; a < data.ages.size(); ++a)
      if (!seen.count({day, a})) throw DataError("missing record for " + iso_date(day) + "," + data.ages[a].label);

  sort_records(data.records);
  data.kind = DataKind::observed;
  data.resolution = 1.0;
  return data;
}

inline EpiDataset ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open data file '" + path + "'");
  return ingest(in);
}

/// Writes observed data back in the ingestion schema (counts recovered by rounding).
inline void write_observed_csv(std::ostream& os, const EpiDataset& data) {
  os << "date,age_class,infected,recovered,population\n";
  for (const auto& r : data.records) {
    if (!r.population) throw DataError("write_observed_csv: record without population");
    const double pop = *r.population;
    os << iso_date(static_cast<int>(std::lround(r.t))) << ',' << data.ages[r.age].label << ','
       << std::llround(r.I * pop) << ',' << std::llround(r.R * pop) << ',' << std::llround(pop) << '\n';
  }
}

/// Synthetic CSV: t,age_class,node,S,I,A,R (fractions at full precision).
inline void write_synthetic_csv(std::ostream& os, const EpiDataset& data) {
  os << "t,age_class,node,S,I,A,R\n";
  for (const auto& r : data.records)
    os << fmt_double(r.t) << ',' << data.ages[r.age].label << ',' << r.node.value_or(0) << ','
       << fmt_double(r.S.value_or(0.0)) << ',' << fmt_double(r.I) << ',' << fmt_double(r.A.value_or(0.0)) << ','
       << fmt_double(r.R) << '\n';
}

inline EpiDataset read_synthetic_csv(std::istream& in, const AgeGrid& ages, double resolution) {
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) != std::vector<std::string>{"t", "age_class", "node", "S", "I", "A", "R"})
    throw DataError("synthetic CSV: unexpected header");
  EpiDataset data;
  data.ages = ages;
  data.kind = DataKind::synthetic;
  data.resolution = resolution;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 7) throw DataError("synthetic CSV line " + std::to_string(line_no) + ": expected 7 fields");
    EpiRecord r;
    r.t = parse_double(f[0]);
    r.age = ages.index_of(f[1]);
    r.node = static_cast<std::size_t>(detail::parse_count(f[2], line_no));
    r.S = parse_double(f[3]);
    r.I = parse_double(f[4]);
    r.A = parse_double(f[5]);
    r.R = parse_double(f[6]);
    data.records.push_back(r);
  }
  if (data.records.empty()) throw DataError("no records");
  return data;
}

/// Sums every compartment over age classes into the single aggregate class.
inline EpiDataset aggregate_ages(const EpiDataset& data) {
  if (data.ages.size() == 1) return data;
  EpiDataset out;
  out.ages = AgeGrid::single();
  out.kind = data.kind;
  out.split = data.split;
  out.resolution = data.resolution;
  std::map<std::pair<double, std::size_t>, EpiRecord> acc;
  for (const auto& r : data.records) {
    auto [it, fresh] = acc.try_emplace({r.t, r.node.value_or(0)}, r);
    if (fresh) {
      it->second.age = 0;
      continue;
    }
    auto& a = it->second;
    a.I += r.I;
    a.R += r.R;
    if (a.S && r.S) *a.S += *r.S;
    if (a.A && r.A) *a.A += *r.A;
  }
  for (auto& [key, r] : acc) out.records.push_back(r);
  sort_records(out.records);
  return out;
}

/// Records with lo <= t <= hi (inclusive, with a small tolerance).
inline EpiDataset restrict_time(const EpiDataset& data, double lo, double hi, bool lo_open = false) {
  constexpr double eps = 1e-9;
  EpiDataset out = data;
  out.records.clear();
  for (const auto& r : data.records) {
    const bool above = lo_open ? r.t > lo + eps : r.t >= lo - eps;
    if (above && r.t <= hi + eps) out.records.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Train/test split.

struct SplitWindow {
  double train_begin;
  double train_end;  // inclusive
  double test_end;   // test covers (train_end, test_end]
};

inline SplitWindow split_window(SplitMode mode) {
  return mode == SplitMode::short_term ? SplitWindow{15.0, 94.0, 104.0} : SplitWindow{15.0, 44.0, 89.0};
}

inline std::string to_string(SplitMode m) { return m == SplitMode::short_term ? "short_term" : "long_term"; }

inline std::pair<EpiDataset, EpiDataset> split(const EpiDataset& data, SplitMode mode) {
  const auto w = split_window(mode);
  const auto t = data.times();
  constexpr double eps = 1e-9;
  if (t.empty() || t.front() > w.train_begin + eps || t.back() < w.test_end - eps)
    throw DataError("split: data does not cover days " + fmt_double(w.train_begin) + ".." + fmt_double(w.test_end) +
                    " (" + iso_date(static_cast<int>(w.train_begin)) + " to " + iso_date(static_cast<int>(w.test_end)) +
                    ")");
  auto train = restrict_time(data, w.train_begin, w.train_end);
  auto test = restrict_time(data, w.train_end, w.test_end, /*lo_open=*/true);
  train.split = SplitRole::train;
  test.split = SplitRole::test;
  return {std::move(train), std::move(test)};
}

inline nlohmann::json split_manifest(SplitMode mode) {
  const auto w = split_window(mode);
  const int train_lo = static_cast<int>(w.train_begin), train_hi = static_cast<int>(w.train_end);
  const int test_lo = train_hi + 1, test_hi = static_cast<int>(w.test_end);
  return {{"mode", to_string(mode)},
          {"train", {{"first_day", train_lo}, {"last_day", train_hi}, {"from", iso_date(train_lo)}, {"to", iso_date(train_hi)}}},
          {"test", {{"first_day", test_lo}, {"last_day", test_hi}, {"from", iso_date(test_lo)}, {"to", iso_date(test_hi)}}}};
}

// ---------------------------------------------------------------------------

/// Dense [time][age][node] view of one compartment.
struct ChannelTable {
  std::vector<double> times;
  std::size_t n_ages = 0;
  std::size_t n_nodes = 0;
  std::vector<double> values;

  std::size_t n_channels() const { return n_ages * n_nodes; }
  double operator()(std::size_t ti, std::size_t a, std::size_t m) const {
    return values[(ti * n_ages + a) * n_nodes + m];
  }
  double& operator()(std::size_t ti, std::size_t a, std::size_t m) { return values[(ti * n_ages + a) * n_nodes + m]; }

  std::optional<std::size_t> find_time(double t, double tol = 1e-9) const {
    const auto it = std::lower_bound(times.begin(), times.end(), t - tol);
    if (it == times.end() || std::abs(*it - t) > tol) return std::nullopt;
    return static_cast<std::size_t>(it - times.begin());
  }
};

inline ChannelTable channel_table(const EpiDataset& data, Compartment c) {
  ChannelTable tab;
  tab.times = data.times();
  tab.n_ages = data.ages.size();
  tab.n_nodes = data.n_nodes();
  tab.values.assign(tab.times.size() * tab.n_channels(), std::nan(""));
  for (const auto& r : data.records) {
    const auto ti = *tab.find_time(r.t, 0.0);
    double v = 0.0;
    switch (c) {
      case kI: v = r.I; break;
      case kR: v = r.R; break;
      case kS:
        if (!r.S) throw DataError("dataset has no S series");
        v = *r.S;
        break;
      case kA:
        if (!r.A) throw DataError("dataset has no A series");
        v = *r.A;
        break;
    }
    tab(ti, r.age, r.node.value_or(0)) = v;
  }
  for (double v : tab.values)
    if (std::isnan(v)) throw DataError("dataset is missing some (time, age, node) samples");
  return tab;
}

}  // namespace epiforge
