#include <cmath>
#include <cstring>
#include <vector>

#include <gtest/gtest.h>

#include "epiforge/rk4.hpp"

using namespace epiforge;

namespace {

using Vec = std::vector<double>;

struct DampedSir {
  double beta = 0.5, gamma = 0.1, mu = 1.0, nu = 10.0;
  double operator()(double i) const { return incidence_H(std::max(i, 0.0), mu, nu); }
};

CompartmentState sir_initial() {
  CompartmentState s(1, 1);
  s(0, 0, kS) = 0.99;
  s(0, 0, kI) = 0.01;
  return s;
}

double max_abs_diff(const CompartmentState& a, const CompartmentState& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(Integrate, ExponentialDecay) {
  auto rhs = [](const Vec& y, double) { return Vec{-0.2 * y[0]}; };
  const auto traj = integrate(rhs, Vec{1.0}, 0.0, 10.0, 0.2);
  ASSERT_EQ(traj.times.size(), 51u);
  EXPECT_DOUBLE_EQ(traj.times.back(), 10.0);
  EXPECT_NEAR(traj.back()[0], std::exp(-2.0), 1e-7);
  for (std::size_t i = 1; i < traj.times.size(); ++i) EXPECT_NEAR(traj.times[i] - traj.times[i - 1], 0.2, 1e-12);
}

TEST(Integrate, ZeroFieldIsConstant) {
  auto rhs = [](const Vec& y, double) { return Vec(y.size(), 0.0); };
  const auto traj = integrate(rhs, Vec{0.3, 0.7}, 1.0, 3.0, 0.25);
  for (const auto& s : traj.states) EXPECT_EQ(s, (Vec{0.3, 0.7}));
}

TEST(Integrate, LastStepShortenedOntoEnd) {
  auto rhs = [](const Vec& y, double) { return Vec{-y[0]}; };
  const auto traj = integrate(rhs, Vec{1.0}, 0.0, 1.0, 0.3);
  ASSERT_EQ(traj.times.size(), 5u);
  EXPECT_DOUBLE_EQ(traj.times.back(), 1.0);
  EXPECT_NEAR(traj.times[3], 0.9, 1e-15);
}

TEST(Integrate, RejectsBadArguments) {
  auto rhs = [](const Vec& y, double) { return y; };
  EXPECT_THROW(integrate(rhs, Vec{1.0}, 0.0, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(integrate(rhs, Vec{1.0}, 1.0, 1.0, 0.1), std::invalid_argument);
  EXPECT_THROW(integrate(rhs, Vec{1.0}, 0.0, 1.0, 2.0), std::invalid_argument);
}

TEST(Integrate, BlowUpReportsTime) {
  auto rhs = [](const Vec& y, double) { return Vec{y[0] * y[0]}; };
  try {
    integrate(rhs, Vec{1.0}, 0.0, 5.0, 0.1);
    FAIL() << "expected blow-up";
  } catch (const NumericalError& e) {
    EXPECT_GT(e.at(), 0.9);
    EXPECT_LT(e.at(), 5.0);
  }
}

TEST(Integrate, SiarConservesEveryStoredState) {
  EpiParams p(2, 2, {0.0, 5.0, 10.0});
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t a = 0; a < 2; ++a) {
      p.beta(m, a) = 0.4 + 0.1 * a;
      p.gamma_I(m, a) = 0.07 + 0.01 * m;
      p.gamma_A(m, a) = 2 * p.gamma_I(m, a);
      p.xi(m, 0, a) = 0.3;
      p.xi(m, 1, a) = 0.6;
      p.H(m, 1, a) = 0.5;
    }
  CompartmentState s(2, 2);
  for (std::size_t m = 0; m < 2; ++m) {
    s(m, 0, kS) = 0.4;
    s(m, 0, kI) = 0.01;
    s(m, 1, kS) = 0.57;
    s(m, 1, kA) = 0.02;
  }
  auto rhs = [&](const CompartmentState& y, double t) { return rhs_siar(y, p, t); };
  const auto traj = integrate(rhs, s, 0.0, 10.0, 0.2);
  for (const auto& st : traj.states)
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(st.total(m, a), s.total(m, a), 1e-12);
}

// Convergence order on the damped SIR: log-log slope of the error at t=30.
TEST(Integrate, FourthOrderConvergence) {
  const DampedSir h;
  const SirParams<DampedSir> p{h.beta, h.gamma, h};
  auto rhs = [&](const CompartmentState& y, double t) { return rhs_sir(y, p, t); };
  const auto reference = integrate(rhs, sir_initial(), 0.0, 30.0, 0.001).back();

  std::vector<double> lx, ly;
  for (double step : {0.4, 0.2, 0.1, 0.05}) {
    const auto end = integrate(rhs, sir_initial(), 0.0, 30.0, step).back();
    lx.push_back(std::log(step));
    ly.push_back(std::log(max_abs_diff(end, reference)));
  }
  const double mx = (lx[0] + lx[1] + lx[2] + lx[3]) / 4, my = (ly[0] + ly[1] + ly[2] + ly[3]) / 4;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 4; ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  EXPECT_NEAR(num / den, 4.0, 0.3);
}

TEST(Integrate, Deterministic) {
  const DampedSir h;
  const SirParams<DampedSir> p{h.beta, h.gamma, h};
  auto rhs = [&](const CompartmentState& y, double t) { return rhs_sir(y, p, t); };
  const auto a = integrate(rhs, sir_initial(), 0.0, 20.0, 0.2);
  const auto b = integrate(rhs, sir_initial(), 0.0, 20.0, 0.2);
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i)
    EXPECT_EQ(std::memcmp(a.states[i].data(), b.states[i].data(), a.states[i].size() * sizeof(double)), 0);
}

TEST(Trajectory, InterpolationAndCsv) {
  auto rhs = [](const Vec& y, double) { return Vec{1.0 + 0.0 * y[0]}; };
  const auto traj = integrate(rhs, Vec{0.0}, 0.0, 1.0, 0.5);
  EXPECT_NEAR(traj.at(0.25)[0], 0.25, 1e-15);
  EXPECT_EQ(traj.at(-1.0)[0], 0.0);

  CompartmentState s(1, 2);
  s(1, 0, kS) = 1.0;
  Trajectory<CompartmentState> t{{0.0}, {s}, 0.2};
  std::ostringstream os;
  write_trajectory_csv(os, t);
  EXPECT_EQ(os.str(), "t,age_class,node_index,S,I,A,R\n0,0,0,0,0,0,0\n0,0,1,1,0,0,0\n");
}
