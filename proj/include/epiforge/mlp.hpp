#pragma once

// Fully connected network with batched forward, tangent (directional input
// derivative) and reverse passes, plus Adam.
//
// Layer l maps x^{l-1} to W^l x^{l-1} + b^l. The first layer is affine, the
// last layer is affine, and every layer in between applies the activation.
// Batches are column-wise: an input batch is n_in x B.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "epiforge/error.hpp"

namespace epiforge {

enum class Activation { tanh, relu };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

/// Layer sizes for `hidden` activated layers of `width` units, preceded by an
/// affine embedding of the same width.
inline std::vector<int> mlp_layout(int n_in, int width, int hidden, int n_out) {
  std::vector<int> s{n_in, width};
  for (int i = 0; i < hidden; ++i) s.push_back(width);
  s.push_back(n_out);
  return s;
}

/// Cached intermediate values of a batched forward pass.
struct ForwardPass {
  std::vector<Eigen::MatrixXd> x;     // x[0] input, x[l] output of layer l
  std::vector<Eigen::MatrixXd> z;     // pre-activations, z[l-1] for layer l
  std::vector<Eigen::MatrixXd> xdot;  // tangents, empty when not requested
  std::vector<Eigen::MatrixXd> zdot;

  bool has_tangent() const { return !xdot.empty(); }
  const Eigen::MatrixXd& output() const { return x.back(); }
  const Eigen::MatrixXd& tangent() const { return xdot.back(); }
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> layer_sizes, Activation act, bool activate_first = false)
      : sizes_(std::move(layer_sizes)), act_(act), activate_first_(activate_first) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least one layer");
    std::size_t n = 0;
    for (std::size_t l = 1; l < sizes_.size(); ++l) {
      if (sizes_[l - 1] < 1 || sizes_[l] < 1) throw std::invalid_argument("Mlp: layer sizes must be positive");
      w_off_.push_back(n);
      n += static_cast<std::size_t>(sizes_[l] * sizes_[l - 1]);
      b_off_.push_back(n);
      n += static_cast<std::size_t>(sizes_[l]);
    }
    theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  bool activate_first() const { return activate_first_; }
  std::size_t n_layers() const { return sizes_.size() - 1; }
  int n_inputs() const { return sizes_.front(); }
  int n_outputs() const { return sizes_.back(); }
  std::size_t n_params() const { return static_cast<std::size_t>(theta_.size()); }

  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }

  // Weights of layer l (1-based), sizes[l] x sizes[l-1], column-major in the flat vector.
  Eigen::Map<Eigen::MatrixXd> W(std::size_t l) {
    return {theta_.data() + w_off_[l - 1], sizes_[l], sizes_[l - 1]};
  }
  Eigen::Map<const Eigen::MatrixXd> W(std::size_t l) const {
    return {theta_.data() + w_off_[l - 1], sizes_[l], sizes_[l - 1]};
  }
  Eigen::Map<Eigen::VectorXd> b(std::size_t l) { return {theta_.data() + b_off_[l - 1], sizes_[l]}; }
  Eigen::Map<const Eigen::VectorXd> b(std::size_t l) const { return {theta_.data() + b_off_[l - 1], sizes_[l]}; }

  bool activated(std::size_t l) const { return l < n_layers() && (l > 1 || activate_first_); }

  /// Xavier-uniform weights, zero biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    theta_.setZero();
    for (std::size_t l = 1; l <= n_layers(); ++l) {
      const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l - 1]));
      std::uniform_real_distribution<double> u(-limit, limit);
      auto w = W(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    }
  }

  /// Batched forward pass; with `tangent_input` set, also propagates the
  /// derivative of every output with respect to that input coordinate.
  ForwardPass forward(const Eigen::MatrixXd& input, std::optional<int> tangent_input = std::nullopt) const {
    if (input.rows() != n_inputs()) throw std::invalid_argument("Mlp::forward: input has wrong length");
    ForwardPass fp;
    fp.x.reserve(n_layers() + 1);
    fp.x.push_back(input);
    if (tangent_input) {
      if (*tangent_input < 0 || *tangent_input >= n_inputs())
        throw std::out_of_range("Mlp::forward: tangent input index out of range");
      Eigen::MatrixXd e = Eigen::MatrixXd::Zero(input.rows(), input.cols());
      e.row(*tangent_input).setOnes();
      fp.xdot.push_back(std::move(e));
    }
    for (std::size_t l = 1; l <= n_layers(); ++l) {
      Eigen::MatrixXd z = W(l) * fp.x.back();
      z.colwise() += b(l);
      std::optional<Eigen::MatrixXd> zdot;
      if (tangent_input) zdot = W(l) * fp.xdot.back();
      if (activated(l)) {
        Eigen::MatrixXd y = z;
        Eigen::MatrixXd dy(z.rows(), z.cols());
        apply(z, y, dy);
        if (zdot) fp.xdot.push_back(dy.cwiseProduct(*zdot));
        fp.x.push_back(std::move(y));
      } else {
        fp.x.push_back(z);
        if (zdot) fp.xdot.push_back(*zdot);
      }
      fp.z.push_back(std::move(z));
      if (zdot) fp.zdot.push_back(std::move(*zdot));
    }
    return fp;
  }

  /// Single-sample forward pass.
  Eigen::VectorXd evaluate(const Eigen::VectorXd& input) const {
    return forward(Eigen::MatrixXd(input)).output().col(0);
  }

  /// d(outputs)/d(input[which]) at a single input.
  Eigen::VectorXd input_derivative(const Eigen::VectorXd& input, int which) const {
    return forward(Eigen::MatrixXd(input), which).tangent().col(0);
  }

  /// Gradient of a scalar loss given its adjoints with respect to the outputs
  /// (y_bar) and, when the pass carried a tangent, the output tangents (ydot_bar).
  Eigen::VectorXd backward(const ForwardPass& fp, const Eigen::MatrixXd& y_bar,
                           const Eigen::MatrixXd* ydot_bar = nullptr) const {
    if (ydot_bar && !fp.has_tangent()) throw std::invalid_argument("Mlp::backward: pass has no tangent");
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta_.size());
    Eigen::MatrixXd xb = y_bar;
    Eigen::MatrixXd xdb;
    const bool tan = ydot_bar != nullptr;
    if (tan) xdb = *ydot_bar;
    for (std::size_t l = n_layers(); l >= 1; --l) {
      const Eigen::MatrixXd& z = fp.z[l - 1];
      Eigen::MatrixXd zb, zdb;
      if (activated(l)) {
        Eigen::MatrixXd y(z.rows(), z.cols()), d1(z.rows(), z.cols()), d2(z.rows(), z.cols());
        apply(z, y, d1, &d2);
        zb = d1.cwiseProduct(xb);
        if (tan) {
          zb += d2.cwiseProduct(fp.zdot[l - 1]).cwiseProduct(xdb);
          zdb = d1.cwiseProduct(xdb);
        }
      } else {
        zb = std::move(xb);
        if (tan) zdb = std::move(xdb);
      }
      Eigen::Map<Eigen::MatrixXd> gw(grad.data() + w_off_[l - 1], sizes_[l], sizes_[l - 1]);
      Eigen::Map<Eigen::VectorXd> gb(grad.data() + b_off_[l - 1], sizes_[l]);
      gw.noalias() += zb * fp.x[l - 1].transpose();
      gb += zb.rowwise().sum();
      if (tan) gw.noalias() += zdb * fp.xdot[l - 1].transpose();
      if (l > 1) {
        xb = W(l).transpose() * zb;
        if (tan) xdb = W(l).transpose() * zdb;
      }
    }
    return grad;
  }

 private:
  // y = sigma(z), d1 = sigma'(z), d2 = sigma''(z). relu'(0) = 0.
  void apply(const Eigen::MatrixXd& z, Eigen::MatrixXd& y, Eigen::MatrixXd& d1, Eigen::MatrixXd* d2 = nullptr) const {
    if (act_ == Activation::tanh) {
      y = z.array().tanh().matrix();
      d1 = (1.0 - y.array().square()).matrix();
      if (d2) *d2 = (-2.0 * y.array() * d1.array()).matrix();
    } else {
      y = z.cwiseMax(0.0);
      d1 = (z.array() > 0.0).cast<double>().matrix();
      if (d2) d2->setZero(z.rows(), z.cols());
    }
  }

  std::vector<int> sizes_;
  Activation act_ = Activation::tanh;
  bool activate_first_ = false;
  std::vector<std::size_t> w_off_, b_off_;
  Eigen::VectorXd theta_;
};

/// Weights are stored row-major per layer.
inline void to_json(nlohmann::json& j, const Mlp& net) {
  auto weights = nlohmann::json::array(), biases = nlohmann::json::array();
  for (std::size_t l = 1; l <= net.n_layers(); ++l) {
    std::vector<double> w, b;
    const auto W = net.W(l);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index k = 0; k < W.cols(); ++k) w.push_back(W(i, k));
    for (Eigen::Index i = 0; i < net.b(l).size(); ++i) b.push_back(net.b(l)(i));
    weights.push_back(w);
    biases.push_back(b);
  }
  j = {{"layer_sizes", net.layer_sizes()},
       {"activation", to_string(net.activation())},
       {"activate_first", net.activate_first()},
       {"weights", weights},
       {"biases", biases}};
}

inline void from_json(const nlohmann::json& j, Mlp& net) {
  net = Mlp(j.at("layer_sizes").get<std::vector<int>>(), activation_from_string(j.at("activation").get<std::string>()),
            j.value("activate_first", false));
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() != net.n_layers() || biases.size() != net.n_layers())
    throw DataError("network JSON: layer count mismatch");
  for (std::size_t l = 1; l <= net.n_layers(); ++l) {
    const auto w = weights[l - 1].get<std::vector<double>>();
    const auto b = biases[l - 1].get<std::vector<double>>();
    auto W = net.W(l);
    if (w.size() != static_cast<std::size_t>(W.size()) || b.size() != static_cast<std::size_t>(net.b(l).size()))
      throw DataError("network JSON: layer " + std::to_string(l) + " has the wrong shape");
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index k = 0; k < W.cols(); ++k) W(i, k) = w[n++];
    for (std::size_t i = 0; i < b.size(); ++i) net.b(l)(static_cast<Eigen::Index>(i)) = b[i];
  }
}

// ---------------------------------------------------------------------------

struct AdamState {
  long step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update of theta in place.
inline void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& s) {
  if (grad.size() != theta.size()) throw std::invalid_argument("adam_step: gradient shape mismatch");
  if (s.m.size() == 0) {
    s.m = Eigen::VectorXd::Zero(theta.size());
    s.v = Eigen::VectorXd::Zero(theta.size());
  }
  if (s.m.size() != theta.size()) throw std::invalid_argument("adam_step: moment shape mismatch");
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  theta.array() -= s.learning_rate * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

}  // namespace epiforge
