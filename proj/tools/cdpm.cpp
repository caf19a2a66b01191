// Command-line front end: one scenario per invocation.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cdpm/config.hpp"
#include "cdpm/experiments.hpp"
#include "cdpm/report.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRunError = 3;

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

cdpm::ExperimentConfig load(cdpm::Scenario s, const Options& o) {
  cdpm::ExperimentConfig cfg = cdpm::default_config(s);
  if (!o.config.empty()) cdpm::apply_config(cdpm::load_config_file(o.config), cfg);
  if (o.seed) {
    cfg.run.seed = *o.seed;
    cfg.finalize();
  }
  return cfg;
}

int run(cdpm::Scenario s, const Options& o) {
  cdpm::ExperimentConfig cfg;
  try {
    cfg = load(s, o);
  } catch (const cdpm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    cdpm::ExperimentResult r;
    switch (s) {
      case cdpm::Scenario::ForceSense: r = cdpm::run_experiment_A(cfg); break;
      case cdpm::Scenario::Scan1D: r = cdpm::run_experiment_B(cfg); break;
      case cdpm::Scenario::Scan2D: r = cdpm::run_experiment_C(cfg); break;
      case cdpm::Scenario::ForceSweep: r = cdpm::run_force_sweep(cfg); break;
      case cdpm::Scenario::Calibrate: r = cdpm::run_calibration(cfg); break;
    }
    cdpm::write_outputs(o.out, r);
    if (s == cdpm::Scenario::Calibrate) {
      std::ofstream(std::filesystem::path(o.out) / "calibrated.toml")
          << cdpm::calibration_fragment(r.summary);
    }
    for (const auto& w : r.summary.warnings) std::cerr << "warning: " << w << "\n";
    if (!o.quiet) {
      for (const auto& [k, v] : r.summary.values) std::cout << k << " = " << v << "\n";
      std::cout << "wrote " << o.out << "/trace.csv (" << r.trace.size() << " rows)\n";
    }
    if (r.aborted) {
      std::cerr << "run aborted: " << r.abort_reason << "\n";
      return kRunError;
    }
    return kOk;
  } catch (const cdpm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRunError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cable-driven probe scanning simulator"};
  app.require_subcommand(1);
  Options o;
  const std::pair<const char*, const char*> cmds[] = {
      {"sense", "stage-driven force sensing run"},
      {"scan1d", "single-point approach, detection and back-step"},
      {"scan2d", "six-point raster scan"},
      {"sweep", "imaging-quality force sweep"},
      {"calibrate", "detector thresholds and back-step count"},
  };
  for (const auto& [name, help] : cmds) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "TOML-style config file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "sensor noise seed");
    sub->add_flag("--quiet", o.quiet, "no summary on stdout");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  cdpm::Scenario s = cdpm::Scenario::ForceSense;
  if (name == "scan1d") s = cdpm::Scenario::Scan1D;
  if (name == "scan2d") s = cdpm::Scenario::Scan2D;
  if (name == "sweep") s = cdpm::Scenario::ForceSweep;
  if (name == "calibrate") s = cdpm::Scenario::Calibrate;
  return run(s, o);
}
