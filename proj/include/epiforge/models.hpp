#pragma once

// Compartmental models: SIR (with optional incidence damping) and the social
// SIAR family over an age-class grid and a set of uncertainty nodes.
//
// Fractions are relative to the whole regional population, so the four
// compartments of one age class sum to that class's population share.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "epiforge/error.hpp"
#include "epiforge/quadrature.hpp"

namespace epiforge {

struct AgeClass {
  double lo = 0.0;  // exclusive, except for the first class
  double hi = 100.0;
  std::string label;
  double share = 1.0;  // fraction of the total population
};

class AgeGrid {
 public:
  AgeGrid() : AgeGrid(single()) {}
  explicit AgeGrid(std::vector<AgeClass> classes) : classes_(std::move(classes)) { validate(); }

  /// Six classes used for the regional reports, with approximate population shares.
  static AgeGrid regional() {
    return AgeGrid({{0, 18, "0-18", 0.16},
                    {18, 24, "19-24", 0.06},
                    {24, 49, "25-49", 0.33},
                    {49, 64, "50-64", 0.22},
                    {64, 74, "65-74", 0.11},
                    {74, 100, "75+", 0.12}});
  }
  static AgeGrid single() { return AgeGrid(std::vector<AgeClass>{{0, 100, "all", 1.0}}); }

  std::size_t size() const { return classes_.size(); }
  const AgeClass& operator[](std::size_t i) const { return classes_[i]; }
  const std::vector<AgeClass>& classes() const { return classes_; }

  std::size_t index_of(const std::string& label) const {
    for (std::size_t i = 0; i < classes_.size(); ++i)
      if (classes_[i].label == label) return i;
    throw DataError("unknown age class label '" + label + "'");
  }

  bool operator==(const AgeGrid& o) const {
    if (size() != o.size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (classes_[i].label != o.classes_[i].label || classes_[i].lo != o.classes_[i].lo ||
          classes_[i].hi != o.classes_[i].hi)
        return false;
    return true;
  }

 private:
  void validate() const {
    if (classes_.empty()) throw std::invalid_argument("AgeGrid: no classes");
    if (classes_.front().lo != 0.0 || classes_.back().hi != 100.0)
      throw std::invalid_argument("AgeGrid: classes must cover (0,100]");
    double share = 0.0;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      if (!(classes_[i].hi > classes_[i].lo)) throw std::invalid_argument("AgeGrid: empty class");
      if (i > 0 && classes_[i].lo != classes_[i - 1].hi)
        throw std::invalid_argument("AgeGrid: classes must be contiguous and ordered");
      if (!(classes_[i].share > 0.0)) throw std::invalid_argument("AgeGrid: shares must be positive");
      share += classes_[i].share;
    }
    if (std::abs(share - 1.0) > 1e-9) throw std::invalid_argument("AgeGrid: shares must sum to 1");
  }

  std::vector<AgeClass> classes_;
};

enum Compartment : std::size_t { kS = 0, kI = 1, kA = 2, kR = 3 };
inline constexpr std::size_t kCompartments = 4;
inline constexpr std::array<const char*, 4> kCompartmentNames{"S", "I", "A", "R"};

/// S, I, A, R for every (node, age class); flat storage laid out [node][age][compartment].
class CompartmentState {
 public:
  CompartmentState() = default;
  CompartmentState(std::size_t n_ages, std::size_t n_nodes)
      : n_ages_(n_ages), n_nodes_(n_nodes), v_(n_ages * n_nodes * kCompartments, 0.0) {}

  std::size_t n_ages() const { return n_ages_; }
  std::size_t n_nodes() const { return n_nodes_; }

  double& operator()(std::size_t node, std::size_t age, Compartment c) {
    return v_[(node * n_ages_ + age) * kCompartments + c];
  }
  double operator()(std::size_t node, std::size_t age, Compartment c) const {
    return v_[(node * n_ages_ + age) * kCompartments + c];
  }
  double total(std::size_t node, std::size_t age) const {
    const double* p = &v_[(node * n_ages_ + age) * kCompartments];
    return ((p[0] + p[1]) + p[2]) + p[3];
  }

  /// The (1-node) state of a single node.
  CompartmentState node_slice(std::size_t node) const {
    CompartmentState s(n_ages_, 1);
    std::copy_n(v_.begin() + node * n_ages_ * kCompartments, n_ages_ * kCompartments, s.v_.begin());
    return s;
  }
  void set_node(std::size_t node, const CompartmentState& slice) {
    std::copy_n(slice.v_.begin(), n_ages_ * kCompartments, v_.begin() + node * n_ages_ * kCompartments);
  }

  // Contiguous-range interface used by the integrator.
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::size_t size() const { return v_.size(); }
  auto begin() { return v_.begin(); }
  auto end() { return v_.end(); }
  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  bool operator==(const CompartmentState&) const = default;

 private:
  std::size_t n_ages_ = 0;
  std::size_t n_nodes_ = 0;
  std::vector<double> v_;
};

enum class IncidenceMode {
  windowed,         // calibrated piecewise-constant H(x, t_j, z)
  state_dependent,  // H_S(I) = mu / sqrt(1 + nu I), H_I = k H_S, H_A = H_S
};

/// All model coefficients, indexed by uncertainty node, time window and age class.
///
/// Window j covers [edges[j], edges[j+1]); the last window is closed on the right.
class EpiParams {
 public:
  EpiParams() = default;
  EpiParams(std::size_t n_ages, std::size_t n_nodes, std::vector<double> window_edges)
      : n_ages_(n_ages), n_nodes_(n_nodes), edges_(std::move(window_edges)) {
    if (edges_.size() < 2) throw std::invalid_argument("EpiParams: need at least one window");
    for (std::size_t j = 1; j < edges_.size(); ++j)
      if (!(edges_[j] > edges_[j - 1])) throw std::invalid_argument("EpiParams: window edges must increase");
    const std::size_t na = n_ages * n_nodes;
    beta_.assign(na, 0.0);
    gamma_I_.assign(na, 0.1);
    gamma_A_.assign(na, 0.2);
    mu_.assign(na, 1.0);
    nu_.assign(na, 1.0);
    xi_.assign(na * n_windows(), 0.5);
    H_.assign(na * n_windows(), 1.0);
  }

  std::size_t n_ages() const { return n_ages_; }
  std::size_t n_nodes() const { return n_nodes_; }
  std::size_t n_windows() const { return edges_.size() - 1; }
  const std::vector<double>& window_edges() const { return edges_; }

  double k = 0.1;
  IncidenceMode mode = IncidenceMode::windowed;

  double& beta(std::size_t m, std::size_t a) { return beta_[m * n_ages_ + a]; }
  double beta(std::size_t m, std::size_t a) const { return beta_[m * n_ages_ + a]; }
  double& gamma_I(std::size_t m, std::size_t a) { return gamma_I_[m * n_ages_ + a]; }
  double gamma_I(std::size_t m, std::size_t a) const { return gamma_I_[m * n_ages_ + a]; }
  double& gamma_A(std::size_t m, std::size_t a) { return gamma_A_[m * n_ages_ + a]; }
  double gamma_A(std::size_t m, std::size_t a) const { return gamma_A_[m * n_ages_ + a]; }
  double& mu(std::size_t m, std::size_t a) { return mu_[m * n_ages_ + a]; }
  double mu(std::size_t m, std::size_t a) const { return mu_[m * n_ages_ + a]; }
  double& nu(std::size_t m, std::size_t a) { return nu_[m * n_ages_ + a]; }
  double nu(std::size_t m, std::size_t a) const { return nu_[m * n_ages_ + a]; }
  double& xi(std::size_t m, std::size_t w, std::size_t a) { return xi_[(m * n_windows() + w) * n_ages_ + a]; }
  double xi(std::size_t m, std::size_t w, std::size_t a) const { return xi_[(m * n_windows() + w) * n_ages_ + a]; }
  double& H(std::size_t m, std::size_t w, std::size_t a) { return H_[(m * n_windows() + w) * n_ages_ + a]; }
  double H(std::size_t m, std::size_t w, std::size_t a) const { return H_[(m * n_windows() + w) * n_ages_ + a]; }

  /// Window index containing t; throws when t lies outside every window.
  std::size_t window_at(double t) const {
    constexpr double slack = 1e-9;
    if (t < edges_.front() - slack || t > edges_.back() + slack)
      throw Error("no calibrated window covers t=" + std::to_string(t));
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), t);
    const auto j = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - edges_.begin() - 1, 0));
    return std::min(j, n_windows() - 1);
  }

  EpiParams node_slice(std::size_t m) const {
    EpiParams p(n_ages_, 1, edges_);
    p.k = k;
    p.mode = mode;
    for (std::size_t a = 0; a < n_ages_; ++a) {
      p.beta(0, a) = beta(m, a);
      p.gamma_I(0, a) = gamma_I(m, a);
      p.gamma_A(0, a) = gamma_A(m, a);
      p.mu(0, a) = mu(m, a);
      p.nu(0, a) = nu(m, a);
      for (std::size_t w = 0; w < n_windows(); ++w) {
        p.xi(0, w, a) = xi(m, w, a);
        p.H(0, w, a) = H(m, w, a);
      }
    }
    return p;
  }

  void set_node(std::size_t m, const EpiParams& slice) {
    for (std::size_t a = 0; a < n_ages_; ++a) {
      beta(m, a) = slice.beta(0, a);
      gamma_I(m, a) = slice.gamma_I(0, a);
      gamma_A(m, a) = slice.gamma_A(0, a);
      mu(m, a) = slice.mu(0, a);
      nu(m, a) = slice.nu(0, a);
      for (std::size_t w = 0; w < n_windows(); ++w) {
        xi(m, w, a) = slice.xi(0, w, a);
        H(m, w, a) = slice.H(0, w, a);
      }
    }
  }

  /// Single-node parameters holding the weighted node average of every coefficient.
  EpiParams node_average(std::span<const double> weights) const {
    if (weights.size() != n_nodes_) throw std::invalid_argument("node_average: weight count mismatch");
    EpiParams p(n_ages_, 1, edges_);
    p.k = k;
    p.mode = mode;
    for (std::size_t a = 0; a < n_ages_; ++a) {
      p.beta(0, a) = p.gamma_I(0, a) = p.gamma_A(0, a) = p.mu(0, a) = p.nu(0, a) = 0.0;
      for (std::size_t w = 0; w < n_windows(); ++w) p.xi(0, w, a) = p.H(0, w, a) = 0.0;
      for (std::size_t m = 0; m < n_nodes_; ++m) {
        const double wm = weights[m];
        p.beta(0, a) += wm * beta(m, a);
        p.gamma_I(0, a) += wm * gamma_I(m, a);
        p.gamma_A(0, a) += wm * gamma_A(m, a);
        p.mu(0, a) += wm * mu(m, a);
        p.nu(0, a) += wm * nu(m, a);
        for (std::size_t w = 0; w < n_windows(); ++w) {
          p.xi(0, w, a) += wm * xi(m, w, a);
          p.H(0, w, a) += wm * H(m, w, a);
        }
      }
    }
    return p;
  }

  friend void to_json(nlohmann::json& j, const EpiParams& p);
  friend void from_json(const nlohmann::json& j, EpiParams& p);

 private:
  std::size_t n_ages_ = 0;
  std::size_t n_nodes_ = 0;
  std::vector<double> edges_;
  std::vector<double> beta_, gamma_I_, gamma_A_, mu_, nu_;
  std::vector<double> xi_, H_;
};

inline void to_json(nlohmann::json& j, const EpiParams& p) {
  j = nlohmann::json::object();
  j["incidence"] = p.mode == IncidenceMode::windowed ? "windowed" : "state_dependent";
  j["k"] = p.k;
  j["window_edges"] = p.edges_;
  auto nodes = nlohmann::json::array();
  for (std::size_t m = 0; m < p.n_nodes_; ++m) {
    auto ages = nlohmann::json::array();
    for (std::size_t a = 0; a < p.n_ages_; ++a) {
      std::vector<double> xi_w, h_w;
      for (std::size_t w = 0; w < p.n_windows(); ++w) {
        xi_w.push_back(p.xi(m, w, a));
        h_w.push_back(p.H(m, w, a));
      }
      ages.push_back({{"beta", p.beta(m, a)},
                      {"gamma_I", p.gamma_I(m, a)},
                      {"gamma_A", p.gamma_A(m, a)},
                      {"mu", p.mu(m, a)},
                      {"nu", p.nu(m, a)},
                      {"xi_windows", xi_w},
                      {"H_windows", h_w}});
    }
    nodes.push_back({{"ages", ages}});
  }
  j["nodes"] = nodes;
}

inline void from_json(const nlohmann::json& j, EpiParams& p) {
  const auto& nodes = j.at("nodes");
  if (nodes.empty()) throw DataError("EpiParams JSON: no nodes");
  const std::size_t n_ages = nodes.at(0).at("ages").size();
  p = EpiParams(n_ages, nodes.size(), j.at("window_edges").get<std::vector<double>>());
  p.k = j.at("k").get<double>();
  p.mode = j.value("incidence", "windowed") == "windowed" ? IncidenceMode::windowed : IncidenceMode::state_dependent;
  for (std::size_t m = 0; m < nodes.size(); ++m) {
    const auto& ages = nodes[m].at("ages");
    if (ages.size() != n_ages) throw DataError("EpiParams JSON: ragged age classes");
    for (std::size_t a = 0; a < n_ages; ++a) {
      const auto& e = ages[a];
      p.beta(m, a) = e.at("beta").get<double>();
      p.gamma_I(m, a) = e.at("gamma_I").get<double>();
      p.gamma_A(m, a) = e.at("gamma_A").get<double>();
      p.mu(m, a) = e.at("mu").get<double>();
      p.nu(m, a) = e.at("nu").get<double>();
      const auto xi_w = e.at("xi_windows").get<std::vector<double>>();
      const auto h_w = e.at("H_windows").get<std::vector<double>>();
      if (xi_w.size() != p.n_windows() || h_w.size() != p.n_windows())
        throw DataError("EpiParams JSON: window count mismatch");
      for (std::size_t w = 0; w < p.n_windows(); ++w) {
        p.xi(m, w, a) = xi_w[w];
        p.H(m, w, a) = h_w[w];
      }
    }
  }
}

/// Contact-damped incidence H_S(r) = mu / sqrt(1 + nu r).
inline double incidence_H(double r, double mu, double nu) {
  if (r < 0.0) throw std::invalid_argument("incidence_H: negative argument");
  return mu / std::sqrt(1.0 + nu * r);
}

/// Recovery-time law 1/gamma_I = h1 + h2 z, with separate coefficients and
/// Beta variables below and above the age cutoff.
struct RecoveryLaw {
  double young_base = 5.0;
  double young_slope = 32.0;
  double old_base = 5.0;
  double old_slope = 40.0;
  double age_cutoff = 49.0;   // classes with hi <= cutoff are young, lo >= cutoff old
  double young_share = 0.55;  // blend used for the single aggregated class
};

/// Fills gamma_I and gamma_A (= 2 gamma_I) for every (node, age class).
inline void sample_gammas(std::span<const UncertaintyNode> nodes, const AgeGrid& ages, EpiParams& params,
                          const RecoveryLaw& law = {}) {
  if (params.n_nodes() != nodes.size() || params.n_ages() != ages.size())
    throw std::invalid_argument("sample_gammas: parameter shape does not match nodes/ages");
  for (std::size_t a = 0; a < ages.size(); ++a) {
    const auto& c = ages[a];
    const bool young = c.hi <= law.age_cutoff;
    const bool old = c.lo >= law.age_cutoff;
    const bool aggregated = ages.size() == 1;
    if (!young && !old && !aggregated)
      throw std::invalid_argument("sample_gammas: age class '" + c.label + "' straddles the recovery cutoff");
    for (std::size_t m = 0; m < nodes.size(); ++m) {
      const double t_young = law.young_base + law.young_slope * nodes[m].z1;
      const double t_old = law.old_base + law.old_slope * nodes[m].z2;
      double period = young ? t_young : old ? t_old : law.young_share * t_young + (1.0 - law.young_share) * t_old;
      params.gamma_I(m, a) = 1.0 / period;
      params.gamma_A(m, a) = 2.0 * params.gamma_I(m, a);
    }
  }
}

/// Force of infection Lambda for every (node, age), laid out [node][age].
///
/// Lambda(x) = beta(x) S(x) H(x) sum_y H(y) (k I(y) + A(y)) in windowed mode; the
/// state-dependent mode uses H_S(I(x)) outside and H_S(I(y)) inside the sum.
inline std::vector<double> lambda_force_in_window(const CompartmentState& s, const EpiParams& p, std::size_t w) {
  const std::size_t na = s.n_ages(), nm = s.n_nodes();
  if (p.n_ages() != na || p.n_nodes() != nm) throw std::invalid_argument("lambda_force: shape mismatch");
  std::vector<double> out(na * nm);
  std::vector<double> h(na);
  for (std::size_t m = 0; m < nm; ++m) {
    double pool = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
      h[a] = p.mode == IncidenceMode::windowed ? p.H(m, w, a)
                                               : incidence_H(std::max(s(m, a, kI), 0.0), p.mu(m, a), p.nu(m, a));
      pool += h[a] * (p.k * s(m, a, kI) + s(m, a, kA));
    }
    for (std::size_t a = 0; a < na; ++a) out[m * na + a] = p.beta(m, a) * s(m, a, kS) * h[a] * pool;
  }
  return out;
}

inline std::vector<double> lambda_force(const CompartmentState& s, const EpiParams& p, double t) {
  return lambda_force_in_window(s, p, p.window_at(t));
}

/// Social SIAR right-hand side with the coefficients of window w.
inline CompartmentState rhs_siar_in_window(const CompartmentState& s, const EpiParams& p, std::size_t w) {
  const auto lambda = lambda_force_in_window(s, p, w);
  CompartmentState d(s.n_ages(), s.n_nodes());
  for (std::size_t m = 0; m < s.n_nodes(); ++m) {
    for (std::size_t a = 0; a < s.n_ages(); ++a) {
      const double l = lambda[m * s.n_ages() + a];
      const double in_i = p.xi(m, w, a) * l;
      const double in_a = l - in_i;
      const double out_i = p.gamma_I(m, a) * s(m, a, kI);
      const double out_a = p.gamma_A(m, a) * s(m, a, kA);
      d(m, a, kS) = -l;
      d(m, a, kI) = in_i - out_i;
      d(m, a, kA) = in_a - out_a;
      d(m, a, kR) = out_i + out_a;
    }
  }
  return d;
}

/// Social SIAR right-hand side (age-structured when n_ages > 1).
inline CompartmentState rhs_siar(const CompartmentState& s, const EpiParams& p, double t) {
  return rhs_siar_in_window(s, p, p.window_at(t));
}

struct UnitIncidence {
  double operator()(double) const { return 1.0; }
};

template <class Incidence = UnitIncidence>
struct SirParams {
  double beta = 0.0;
  double gamma = 0.0;
  Incidence H{};
};

/// SIR with incidence damping H(I); H == 1 is the classical model. Uses the
/// S, I, R slots of a single-class state; A is left untouched at zero rate.
template <class Incidence>
CompartmentState rhs_sir(const CompartmentState& s, const SirParams<Incidence>& p, double /*t*/) {
  CompartmentState d(s.n_ages(), s.n_nodes());
  for (std::size_t m = 0; m < s.n_nodes(); ++m) {
    for (std::size_t a = 0; a < s.n_ages(); ++a) {
      const double i = s(m, a, kI);
      const double inflow = p.beta * s(m, a, kS) * i * p.H(i);
      const double outflow = p.gamma * i;
      d(m, a, kS) = -inflow;
      d(m, a, kI) = inflow - outflow;
      d(m, a, kR) = outflow;
    }
  }
  return d;
}

}  // namespace epiforge
