#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "epiforge/nar.hpp"

using namespace epiforge;

namespace {

NarSeries iota_series(int n) {
  std::vector<double> v;
  for (int i = 1; i <= n; ++i) v.push_back(i);
  return scalar_series(v);
}

NarConfig small_config(int d, int epochs) {
  NarConfig c;
  c.delay = d;
  c.epochs = epochs;
  return c;
}

// Single affine layer reading the lag-1 (most recent) value of every channel.
NarModel copy_last_model(int d, std::size_t channels) {
  const int C = static_cast<int>(channels);
  NarModel m{Mlp({d * C, C}, Activation::relu), d, channels, 1, 1.0, 0};
  m.net.params().setZero();
  for (int c = 0; c < C; ++c) m.net.W(1)(c, (d - 1) * C + c) = 1.0;
  return m;
}

}  // namespace

TEST(NarConfig, Validation) {
  NarConfig c;
  EXPECT_EQ(c.delay, 5);
  EXPECT_EQ(c.epochs, 20000);
  c.delay = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.delay = 3;
  c.width = 4;
  const auto back = nlohmann::json(c).get<NarConfig>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
}

TEST(MakeWindows, ScalarSeriesOneToTen) {
  const auto w = make_windows(iota_series(10), 5);
  ASSERT_EQ(w.size(), 5u);
  for (int l = 0; l < 5; ++l) EXPECT_EQ(w.inputs(l, 0), l + 1);
  EXPECT_EQ(w.targets(0, 0), 6);
  EXPECT_EQ(w.targets(0, 4), 10);
  EXPECT_EQ(w.target_times.front(), 5.0);
}

TEST(MakeWindows, Boundaries) {
  EXPECT_EQ(make_windows(iota_series(6), 5).size(), 1u);
  EXPECT_THROW(make_windows(iota_series(5), 5), DataError);
  EXPECT_THROW(make_windows(iota_series(5), 0), std::invalid_argument);
}

TEST(MakeWindows, RejectsNonUniformSampling) {
  auto s = iota_series(8);
  s.times[4] += 0.5;
  EXPECT_THROW(make_windows(s, 2), DataError);
}

TEST(MakeWindows, FlattensLagAgeNode) {
  NarSeries s;
  s.n_ages = 2;
  s.n_nodes = 3;
  s.times = {0, 1, 2, 3};
  s.values.resize(6, 4);
  for (int a = 0; a < 2; ++a)
    for (int m = 0; m < 3; ++m)
      for (int t = 0; t < 4; ++t) s.values(a * 3 + m, t) = 100 * t + 10 * a + m;
  const auto w = make_windows(s, 2);
  ASSERT_EQ(w.inputs.rows(), 12);
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l)
      for (int a = 0; a < 2; ++a)
        for (int m = 0; m < 3; ++m) EXPECT_EQ(w.inputs((l * 2 + a) * 3 + m, k), 100 * (k + l) + 10 * a + m);
  for (int a = 0; a < 2; ++a)
    for (int m = 0; m < 3; ++m) EXPECT_EQ(w.targets(a * 3 + m, 1), 300 + 10 * a + m);
}

TEST(MakeWindows, PropertyTargetsReconstructSeries) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> len(6, 40), del(1, 5), ch(1, 4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 25; ++trial) {
    const int n = len(rng), d = del(rng), C = ch(rng);
    NarSeries s;
    s.n_ages = static_cast<std::size_t>(C);
    for (int i = 0; i < n; ++i) s.times.push_back(0.2 * i);
    s.values = Eigen::MatrixXd::NullaryExpr(C, n, [&] { return g(rng); });
    const auto w = make_windows(s, d);
    ASSERT_EQ(w.size(), static_cast<std::size_t>(n - d));
    EXPECT_EQ(w.targets, s.values.rightCols(n - d));
    // Each window's lag block l equals the sample l steps after the window start.
    for (Eigen::Index k = 0; k < w.inputs.cols(); ++k)
      for (int l = 0; l < d; ++l) EXPECT_EQ(w.inputs.block(l * C, k, C, 1), s.values.col(k + l));
  }
}

TEST(NarSeries, FromSyntheticDataset) {
  EpiDataset d;
  d.kind = DataKind::synthetic;
  d.ages = AgeGrid::regional();
  for (int i = 0; i <= 10; ++i)
    for (std::size_t a = 0; a < d.ages.size(); ++a)
      for (std::size_t m = 0; m < 2; ++m)
        d.records.push_back({15 + 0.2 * i, a, m, 0.001 * i + 0.01 * double(a) + 0.1 * double(m), 0, 0.5, 0, std::nullopt});
  const auto s = infected_series(d, 15.2, 16.6);
  EXPECT_EQ(s.length(), 8u);
  EXPECT_EQ(s.n_channels(), 12u);
  EXPECT_DOUBLE_EQ(s.values(NarSeries::channel(3, 1, 2), 0), 0.001 + 0.03 + 0.1);
  const auto daily = subsample(s, 5);
  ASSERT_EQ(daily.length(), 2u);
  EXPECT_DOUBLE_EQ(daily.times[1], 16.2);
  EXPECT_EQ(daily.values.col(1), s.values.col(5));
}

TEST(NarTraining, EpochsZeroReturnsInitialization) {
  const auto w = make_windows(iota_series(10), 3);
  const auto cfg = small_config(3, 0);
  const auto tr = train_nar(cfg, w, 1, 1, 1.0, 4);
  EXPECT_EQ(tr.model.net.params(), make_nar(cfg, 1, 1, 1.0, 4).net.params());
  EXPECT_EQ(tr.history.records.size(), 1u);
}

TEST(NarTraining, ConstantSeriesLearnedWithin2000Epochs) {
  const std::vector<double> v(30, 0.03);
  const auto w = make_windows(scalar_series(v), 5);
  const auto tr = train_nar(small_config(5, 2000), w, 1, 1, 1.0, 1);
  const double L = nar_loss(tr.model.net, w);
  EXPECT_LE(L, 1e-8) << L;
  EXPECT_EQ(L, tr.history.trace[static_cast<std::size_t>(tr.history.best_epoch)]);
}

TEST(NarTraining, LinearSeriesOneStepRelativeError) {
  std::vector<double> v;
  for (int k = 0; k < 40; ++k) v.push_back(0.01 + 0.002 * k);
  const auto w = make_windows(scalar_series(v), 2);
  const auto tr = train_nar(small_config(2, 2000), w, 1, 1, 1.0, 1);
  const Eigen::MatrixXd pred = predict_open_loop(tr.model, w);
  const double rel = ((pred - w.targets).array().abs() / w.targets.array().abs()).maxCoeff();
  EXPECT_LE(rel, 1e-3);
}

TEST(NarTraining, DeterministicAndMonotoneEnd) {
  std::vector<double> v;
  for (int k = 0; k < 25; ++k) v.push_back(0.5 + 0.2 * std::sin(0.3 * k));
  const auto w = make_windows(scalar_series(v), 3);
  const auto a = train_nar(small_config(3, 300), w, 1, 1, 1.0, 9), b = train_nar(small_config(3, 300), w, 1, 1, 1.0, 9);
  EXPECT_EQ(a.model.net.params(), b.model.net.params());
  EXPECT_LE(nar_loss(a.model.net, w), a.history.records.front().total);
  EXPECT_EQ(a.history.trace.size(), 301u);
}

TEST(NarTraining, DivergenceAbortsWithHistory) {
  auto s = iota_series(10);
  s.values(0, 8) = std::nan("");
  const auto w = make_windows(s, 2);
  EXPECT_THROW(train_nar(small_config(2, 5), w, 1, 1, 1.0, 1), TrainingError);
  EXPECT_THROW(train_nar(small_config(3, 5), w, 1, 1, 1.0, 1), std::invalid_argument);
}

TEST(ClosedLoop, CopyLastNetworkIsConstant) {
  const auto m = copy_last_model(3, 2);
  Eigen::MatrixXd seed(2, 3);
  seed << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  const auto f = forecast_closed_loop(m, seed, 7);
  ASSERT_EQ(f.steps(), 7u);
  EXPECT_FALSE(f.truncated);
  for (int s = 0; s < 7; ++s) {
    EXPECT_EQ(f.values(0, s), 0.3);
    EXPECT_EQ(f.values(1, s), 0.6);
  }
}

TEST(ClosedLoop, ZeroStepsAndBadSeed) {
  const auto m = copy_last_model(2, 1);
  EXPECT_EQ(forecast_closed_loop(m, Eigen::MatrixXd::Ones(1, 2), 0).steps(), 0u);
  EXPECT_THROW(forecast_closed_loop(m, Eigen::MatrixXd::Ones(1, 3), 2), std::invalid_argument);
}

TEST(ClosedLoop, TruncatesOnNonFinitePrediction) {
  auto m = copy_last_model(1, 1);
  m.net.W(1)(0, 0) = 1e300;
  const auto f = forecast_closed_loop(m, Eigen::MatrixXd::Constant(1, 1, 10.0), 5);
  EXPECT_TRUE(f.truncated);
  EXPECT_EQ(f.steps(), 1u);
}

// At step s the lag buffer holds the last d values of seed ++ predictions[0..s).
TEST(ClosedLoop, PropertyLagBufferShift) {
  std::mt19937_64 rng(31);
  for (int d = 1; d <= 4; ++d) {
    NarConfig cfg;
    cfg.delay = d;
    cfg.width = 6;
    cfg.hidden = 1;
    cfg.activation = Activation::tanh;
    const auto m = make_nar(cfg, 2, 1, 1.0, 100 + d);
    Eigen::MatrixXd seed = Eigen::MatrixXd::Random(2, d);
    const auto f = forecast_closed_loop(m, seed, 6);
    Eigen::MatrixXd all(2, d + 6);
    all << seed, f.values;
    for (int s = 0; s < 6; ++s) {
      const Eigen::VectorXd buffer = all.middleCols(s, d).reshaped();
      EXPECT_EQ(m.net.evaluate(buffer), f.values.col(s));
    }
  }
}

TEST(ClosedLoop, DampedSeriesClosedLoopNearOpenLoop) {
  std::vector<double> v;
  for (int k = 0; k < 90; ++k) v.push_back(0.5 + 0.3 * std::exp(-0.03 * k) * std::cos(0.25 * k));
  const auto series = scalar_series(v);
  const std::size_t n_train = 70;
  const auto train = make_windows(scalar_series(std::span(v).first(n_train)), 5);
  const auto tr = train_nar(small_config(5, 3000), train, 1, 1, 1.0, 3);

  // Ten steps after the training range, seeded with true history.
  const auto all = make_windows(series, 5);
  const Eigen::MatrixXd open = predict_open_loop(tr.model, all).middleCols(n_train - 5, 10);
  const double open_err = (open - all.targets.middleCols(n_train - 5, 10)).cwiseAbs().maxCoeff();
  const auto closed = forecast_closed_loop(tr.model, seed_history(series, n_train, 5), 10);
  const double closed_err = (closed.values - series.values.middleCols(n_train, 10)).cwiseAbs().maxCoeff();
  EXPECT_LT(closed_err, 10.0 * open_err) << closed_err << " vs " << open_err;
}

TEST(NarModel, JsonRoundTripAndCsv) {
  NarConfig cfg;
  cfg.delay = 2;
  const auto m = make_nar(cfg, 1, 2, 0.2, 5);
  const auto back = nlohmann::json::parse(nlohmann::json(m).dump()).get<NarModel>();
  Eigen::MatrixXd seed(2, 2);
  seed << 0.1, 0.2, 0.3, 0.4;
  EXPECT_EQ(forecast_closed_loop(m, seed, 4).values, forecast_closed_loop(back, seed, 4).values);
  EXPECT_EQ(back.step, 0.2);

  std::ostringstream os;
  const std::vector<double> t{1.0};
  Eigen::MatrixXd vals(2, 1);
  vals << 0.25, 0.75;
  const std::vector<double> w{0.5, 0.5};
  write_forecast_csv(os, t, vals, AgeGrid::single(), 2, w);
  EXPECT_EQ(os.str(), "t,age_class,node,I_pred,I_mean\n1,all,0,0.25,0.5\n1,all,1,0.75,0.5\n");
}
