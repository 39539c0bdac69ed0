// Writes the bundled sample dataset: daily reported counts for six age classes
// produced by the age-structured SIAR model with weekly contact reduction and
// multiplicative reporting noise.

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <vector>

#include <CLI11.hpp>

#include "epiforge/calibration.hpp"
#include "epiforge/dataset.hpp"

using namespace epiforge;

int main(int argc, char** argv) {
  CLI::App app{"Generate the sample epidemic dataset"};
  std::string out = "data/sample/cases.csv";
  std::uint64_t seed = 20201006;
  double noise = 0.03;
  double population = 10027602;
  app.add_option("--out", out, "output CSV path");
  app.add_option("--seed", seed, "noise seed");
  app.add_option("--noise", noise, "relative standard deviation of the reporting noise");
  CLI11_PARSE(app, argc, argv);

  const AgeGrid ages = AgeGrid::regional();
  const FitConfig cfg;
  EpiParams p(ages.size(), 1, cfg.window_edges());
  p.k = cfg.k;
  const std::vector<UncertaintyNode> node{{0.29, 0.32, 1.0}};
  sample_gammas(node, ages, p);

  const double beta[] = {0.2772, 0.33, 0.3432, 0.3036, 0.264, 0.2508};
  const double xi[] = {0.15, 0.22, 0.30, 0.40, 0.55, 0.70};
  // Contact reduction per week after the unrestricted phase.
  const double H[] = {1.0, 0.96, 0.92, 0.88, 0.84, 0.80, 0.77, 0.74, 0.72, 0.70, 0.69, 0.68, 0.67, 0.66};
  for (std::size_t a = 0; a < ages.size(); ++a) {
    p.beta(0, a) = beta[a];
    for (std::size_t w = 0; w < p.n_windows(); ++w) {
      p.xi(0, w, a) = xi[a];
      p.H(0, w, a) = H[w];
    }
  }

  CompartmentState s(ages.size(), 1);
  for (std::size_t a = 0; a < ages.size(); ++a) {
    const double share = ages[a].share;
    s(0, a, kI) = 1.2e-3 * share;
    s(0, a, kA) = (1.0 - xi[a]) / xi[a] * s(0, a, kI);
    s(0, a, kR) = 4e-3 * share;
    s(0, a, kS) = share - s(0, a, kI) - s(0, a, kA) - s(0, a, kR);
  }
  const auto traj = simulate(p, s, cfg.h);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, noise);
  EpiDataset data;
  data.ages = ages;
  double peak = 0.0, peak_t = 0.0;
  for (int day = static_cast<int>(cfg.t0); day <= static_cast<int>(cfg.T); ++day) {
    const auto st = traj.at(day);
    double total = 0.0;
    for (std::size_t a = 0; a < ages.size(); ++a) {
      const double I = st(0, a, kI) * std::exp(eps(rng)), R = st(0, a, kR) * std::exp(0.3 * eps(rng));
      data.records.push_back({double(day), a, std::nullopt, I, R, std::nullopt, std::nullopt, population});
      total += st(0, a, kI);
    }
    if (total > peak) peak = total, peak_t = day;
  }

  std::ofstream os(out);
  if (!os) {
    std::cerr << "cannot write " << out << "\n";
    return 2;
  }
  write_observed_csv(os, data);
  std::cerr << "wrote " << out << ": infected peak " << peak << " at day " << peak_t << " (" << iso_date(int(peak_t))
            << ")\n";
  return 0;
}
