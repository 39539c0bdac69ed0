#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "epiforge/evaluation.hpp"
#include "epiforge/nar.hpp"

using namespace epiforge;

namespace {

InfectedCurve curve(std::vector<double> t, std::vector<double> v) {
  InfectedCurve c{t, Eigen::MatrixXd(1, static_cast<Eigen::Index>(v.size()))};
  for (std::size_t i = 0; i < v.size(); ++i) c.values(0, static_cast<Eigen::Index>(i)) = v[i];
  return c;
}

}  // namespace

TEST(PointwiseError, Examples) {
  const auto a = curve({1, 2, 3}, {0.1, 0.2, 0.3});
  EXPECT_EQ(pointwise_error(a, a).max(), 0.0);
  EXPECT_NEAR(pointwise_error(curve({1}, {0.5}), curve({1}, {0.3})).max(), 0.2, 1e-15);
  const auto e = pointwise_error(curve({1, 2, 3}, {1e-4, 3e-4, 2e-4}), curve({1, 2, 3}, {0, 0, 0}));
  EXPECT_EQ(e.max(0), 3e-4);
}

TEST(PointwiseError, Misaligned) {
  EXPECT_THROW(pointwise_error(curve({1, 2}, {0, 0}), curve({1, 3}, {0, 0})), DataError);
  EXPECT_THROW(pointwise_error(curve({1}, {0}), curve({1, 2}, {0, 0})), DataError);
}

TEST(PointwiseError, PropertySymmetricAndMaxOfCurve) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    InfectedCurve p{{0, 1, 2, 3, 4}, Eigen::MatrixXd::NullaryExpr(3, 5, [&] { return g(rng); })};
    InfectedCurve d{p.times, Eigen::MatrixXd::NullaryExpr(3, 5, [&] { return g(rng); })};
    const auto e1 = pointwise_error(p, d), e2 = pointwise_error(d, p);
    EXPECT_EQ(e1.values, e2.values);
    for (std::size_t a = 0; a < 3; ++a) {
      double m = 0;
      for (Eigen::Index k = 0; k < 5; ++k) m = std::max(m, e1.values(static_cast<Eigen::Index>(a), k));
      EXPECT_EQ(e1.max(a), m);
    }
  }
}

TEST(InfectedCurve, SubsampleAndIntegrate) {
  InfectedCurve c{{15, 15.2, 15.4, 15.6, 15.8, 16.0}, Eigen::MatrixXd(2, 6)};
  c.values << 1, 2, 3, 4, 5, 6, 10, 20, 30, 40, 50, 60;
  const std::vector<double> days{15, 16};
  const auto d = c.at_times(days);
  EXPECT_EQ(d.values(1, 1), 60);
  EXPECT_EQ(c.integrated().values(0, 2), 33);
  const std::vector<double> bad{15.1};
  EXPECT_THROW(c.at_times(bad), DataError);
}

TEST(Table2, LayoutAndMissingCells) {
  const std::vector<Table2Cell> cells{{"siar", 0, "Non-aged model", "NAR-synth", 2.1e-4},
                                      {"siar", 0, "Non-aged model", "NAR-real", 1.2e-3},
                                      {"siar", 0, "Non-aged model", "PINN-synth", 1.0e-3}};
  const auto t = table2(cells);
  ASSERT_EQ(t.rows.size(), 1u);
  ASSERT_EQ(t.warnings.size(), 1u);
  EXPECT_NE(t.warnings[0].find("PINN-real"), std::string::npos);
  std::ostringstream os;
  write_table2_csv(os, t);
  EXPECT_EQ(os.str(), "model,row,NAR-synth,NAR-real,PINN-synth,PINN-real\nsiar,Non-aged model,0.00021,0.0012,0.001,\n");
}

TEST(Table2, IdenticalPredictionsGiveEqualCells) {
  const auto p = curve({1, 2}, {0.1, 0.4}), d = curve({1, 2}, {0.15, 0.2});
  const double e = pointwise_error(p, d).max();
  const std::vector<Table2Cell> cells{{"siar", 0, "r", "NAR-synth", e}, {"siar", 0, "r", "PINN-synth", e}};
  const auto t = table2(cells);
  EXPECT_EQ(t.rows[0].cells[0], t.rows[0].cells[2]);
}

TEST(Table2, PropertyOrderInvariance) {
  std::vector<Table2Cell> cells;
  const char* labels[] = {"0-18", "19-24", "25-49"};
  for (int r = 0; r < 3; ++r)
    for (const auto& c : table2_columns()) cells.push_back({"siar_aged", r, labels[r], c, 0.001 * r + c.size() * 1e-5});
  cells.push_back({"siar", 0, "Non-aged model", "NAR-real", 0.5});
  std::ostringstream ref;
  write_table2_csv(ref, table2(cells));
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(cells.begin(), cells.end(), rng);
    std::ostringstream os;
    write_table2_csv(os, table2(cells));
    EXPECT_EQ(os.str(), ref.str());
  }
  cells.push_back(cells.front());
  EXPECT_THROW(table2(cells), std::invalid_argument);
}

TEST(CostReport, KnownRatioAndEqualTimings) {
  const auto r = cost_report({{"siar", "NAR", "synth", 50000, 32}, {"siar", "PINN", "synth", 50000, 307}});
  ASSERT_EQ(r.ratios.size(), 1u);
  EXPECT_NEAR(r.ratios[0].ratio, 9.59375, 1e-12);
  const auto eq = cost_report({{"m", "NAR", "real", 10, 2}, {"m", "PINN", "real", 10, 2}});
  EXPECT_EQ(eq.ratios[0].ratio, 1.0);
  try {
    cost_report({{"m", "NAR", "real", 0, 2}});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("no timing"), std::string::npos);
  }
}

TEST(CostReport, PropertyDoublingEpochsDoublesTime) {
  std::vector<double> v;
  for (int k = 0; k < 200; ++k) v.push_back(0.5 + 0.2 * std::sin(0.1 * k));
  const auto w = make_windows(scalar_series(v), 5);
  NarConfig cfg;
  auto run = [&](int epochs) {
    cfg.epochs = epochs;
    return train_nar(cfg, w, 1, 1, 1.0, 1).history.seconds;
  };
  run(200);  // warm-up
  const double one = run(1500), two = run(3000);
  EXPECT_GE(two, 2.0 * one * 0.8) << one << " vs " << two;
}

TEST(PeakMetrics, Examples) {
  std::vector<double> t, data, pred;
  for (int d = 40; d <= 60; ++d) {
    t.push_back(d);
    data.push_back(-std::abs(d - 46.0));
    pred.push_back(-std::abs(d - 50.0));
  }
  const auto same = peak_metrics(t, data, data);
  EXPECT_EQ(same.time_delta, 0.0);
  EXPECT_EQ(same.height_delta, 0.0);
  EXPECT_FALSE(same.flagged);
  const auto m = peak_metrics(t, pred, data);
  EXPECT_EQ(m.time_delta, 4.0);
  std::vector<double> mono;
  for (std::size_t i = 0; i < t.size(); ++i) mono.push_back(double(i));
  EXPECT_TRUE(peak_metrics(t, mono, data).flagged);
  const std::vector<double> flat(t.size(), 1.0);
  const auto f = find_peak(t, flat);
  EXPECT_TRUE(f.flagged);
  EXPECT_EQ(f.time, 40.0);
  EXPECT_EQ(nlohmann::json(m)["time_delta"], 4.0);
}
