#pragma once

// Run configuration shared by the command-line stages.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "epiforge/calibration.hpp"
#include "epiforge/dataset.hpp"
#include "epiforge/error.hpp"
#include "epiforge/nar.hpp"
#include "epiforge/pinn.hpp"
#include "epiforge/quadrature.hpp"

namespace epiforge {

enum class ModelVariant { siar, siar_aged };

inline std::string to_string(ModelVariant v) { return v == ModelVariant::siar ? "siar" : "siar_aged"; }
inline ModelVariant variant_from_string(const std::string& s) {
  if (s == "siar") return ModelVariant::siar;
  if (s == "siar_aged") return ModelVariant::siar_aged;
  throw std::invalid_argument("unknown model variant '" + s + "' (expected siar or siar_aged)");
}

inline SplitMode split_mode_from_string(const std::string& s) {
  if (s == "short" || s == "short_term") return SplitMode::short_term;
  if (s == "long" || s == "long_term") return SplitMode::long_term;
  throw std::invalid_argument("unknown split mode '" + s + "' (expected short or long)");
}

struct QuadratureConfig {
  int M = 5;
  BetaSpec z1{2.1, 5.1};
  BetaSpec z2{1.8, 3.9};
  NodePairing pairing = NodePairing::comonotone;

  std::vector<UncertaintyNode> nodes() const { return pair_grids(build_grid(z1, M), build_grid(z2, M), pairing); }
};

struct RunConfig {
  std::string data = "data/sample/cases.csv";
  std::string out = "out";
  ModelVariant variant = ModelVariant::siar;
  SplitMode mode = SplitMode::short_term;
  std::uint64_t seed = 1;
  QuadratureConfig quadrature;
  FitConfig calibration;
  double augment_h = 0.2;
  PinnConfig pinn;
  NarConfig nar;

  void validate() const {
    if (quadrature.M < 1) throw std::invalid_argument("config: quadrature.M must be positive");
    quadrature.z1.validate();
    quadrature.z2.validate();
    calibration.validate();
    if (!(augment_h > 0.0)) throw std::invalid_argument("config: augment_h must be positive");
    pinn.validate();
    nar.validate();
  }
};

inline void to_json(nlohmann::json& j, const QuadratureConfig& q) {
  j = {{"M", q.M},
       {"z1", {q.z1.alpha, q.z1.beta}},
       {"z2", {q.z2.alpha, q.z2.beta}},
       {"pairing", q.pairing == NodePairing::comonotone ? "comonotone" : "tensor"}};
}
inline void from_json(const nlohmann::json& j, QuadratureConfig& q) {
  const QuadratureConfig d;
  q.M = j.value("M", d.M);
  const auto z1 = j.value("z1", std::vector<double>{d.z1.alpha, d.z1.beta});
  const auto z2 = j.value("z2", std::vector<double>{d.z2.alpha, d.z2.beta});
  if (z1.size() != 2 || z2.size() != 2) throw std::invalid_argument("config: z1/z2 must be [alpha, beta]");
  q.z1 = {z1[0], z1[1]};
  q.z2 = {z2[0], z2[1]};
  const auto pairing = j.value("pairing", std::string("comonotone"));
  if (pairing != "comonotone" && pairing != "tensor") throw std::invalid_argument("config: unknown pairing " + pairing);
  q.pairing = pairing == "comonotone" ? NodePairing::comonotone : NodePairing::tensor;
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"data", c.data},
       {"out", c.out},
       {"variant", to_string(c.variant)},
       {"mode", c.mode == SplitMode::short_term ? "short" : "long"},
       {"seed", c.seed},
       {"quadrature", c.quadrature},
       {"calibration", c.calibration},
       {"augment_h", c.augment_h},
       {"pinn", c.pinn},
       {"nar", c.nar}};
}

/// Missing keys keep their defaults; unknown top-level keys are rejected.
inline void from_json(const nlohmann::json& j, RunConfig& c) {
  static const std::vector<std::string> known{"data", "out",       "variant", "mode", "seed", "quadrature",
                                              "calibration", "augment_h", "pinn", "nar", "comment"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
  const RunConfig d;
  c.data = j.value("data", d.data);
  c.out = j.value("out", d.out);
  c.variant = variant_from_string(j.value("variant", to_string(d.variant)));
  c.mode = split_mode_from_string(j.value("mode", std::string("short")));
  c.seed = j.value("seed", d.seed);
  c.quadrature = j.value("quadrature", nlohmann::json::object()).get<QuadratureConfig>();
  c.calibration = j.value("calibration", nlohmann::json::object()).get<FitConfig>();
  c.augment_h = j.value("augment_h", d.augment_h);
  c.pinn = j.value("pinn", nlohmann::json::object()).get<PinnConfig>();
  c.nar = j.value("nar", nlohmann::json::object()).get<NarConfig>();
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  auto cfg = read_json_file(path).get<RunConfig>();
  cfg.validate();
  return cfg;
}

}  // namespace epiforge
