// Command-line entry point: runs the pipeline as a whole or one stage at a time.

#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epiforge/config.hpp"
#include "epiforge/pipeline.hpp"

using namespace epiforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInput = 2;
constexpr int kExitUsage = 64;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, mode, data, variant;
};

RunConfig resolve(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out = *o.out;
  if (o.mode) cfg.mode = split_mode_from_string(*o.mode);
  if (o.data) cfg.data = *o.data;
  if (o.variant) cfg.variant = variant_from_string(*o.variant);
  cfg.validate();
  return cfg;
}

int run_stage(const std::string& name, const Overrides& o, const std::function<void(const RunConfig&)>& stage) {
  try {
    const auto cfg = resolve(o);
    stage(cfg);
    std::cout << name << ": done (" << cfg.out << ")\n";
    return kExitOk;
  } catch (const DataError& e) {
    std::cerr << "epiforge " << name << ": " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "epiforge " << name << ": " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "epiforge " << name << ": " << e.what() << " (at " << e.at() << ")\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "epiforge " << name << ": " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Epidemic forecasting with calibrated compartmental models and neural networks"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "JSON run configuration (defaults when omitted)");
  app.add_option("--seed", o.seed, "seed for network initialization");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--mode", o.mode, "train/test split: short or long");
  app.add_option("--data", o.data, "observed data CSV");
  app.add_option("--variant", o.variant, "siar or siar_aged");

  using Stage = std::function<void(const RunConfig&)>;
  const std::vector<std::tuple<std::string, std::string, Stage>> stages{
      {"calibrate", "fit the uncertain model to the observed data", stage_calibrate},
      {"augment", "write the synthetic training set from the calibrated model", stage_augment},
      {"train-pinn", "train the physics-informed networks", [](const RunConfig& c) { stage_train(c, Network::pinn); }},
      {"train-nar", "train the autoregressive networks", [](const RunConfig& c) { stage_train(c, Network::nar); }},
      {"forecast", "forecast the test window with every trained network", stage_forecast},
      {"evaluate", "score the forecasts and write the report tables", stage_evaluate},
      {"run-all", "run every stage in order", stage_run_all},
  };
  std::string chosen;
  Stage stage;
  for (const auto& [name, help, fn] : stages) {
    app.add_subcommand(name, help)->callback([&chosen, &stage, name = name, fn = fn] {
      chosen = name;
      stage = fn;
    });
  }

  // First positional argument that is not an option value names the subcommand.
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg.starts_with("-")) {
      if (arg != "-h" && arg != "--help" && arg.find('=') == std::string::npos) ++i;
      continue;
    }
    if (!app.get_subcommand_no_throw(arg)) {
      std::cerr << "epiforge: unknown subcommand '" << arg << "'\n\n" << app.help();
      return kExitUsage;
    }
    break;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "epiforge: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }
  return run_stage(chosen, o, stage);
}
