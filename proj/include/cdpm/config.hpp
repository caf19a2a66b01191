#pragma once

// Sectioned key = value configuration (a small TOML subset): [section]
// headers, numbers, booleans, quoted strings, flat numeric arrays and
// '#' comments. Unknown sections or keys are errors.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "cdpm/calibration.hpp"
#include "cdpm/controller.hpp"
#include "cdpm/detection.hpp"
#include "cdpm/errors.hpp"
#include "cdpm/imaging.hpp"
#include "cdpm/plant.hpp"

namespace cdpm {

using ConfigValue = std::variant<double, bool, std::string, std::vector<double>>;

struct ConfigEntry {
  ConfigValue value;
  int line = 0;
};

using ConfigTable = std::map<std::string, std::map<std::string, ConfigEntry>>;

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline double parse_number(const std::string& text, int line) {
  std::string t = trim(text);
  t.erase(std::remove(t.begin(), t.end(), '_'), t.end());
  if (!t.empty() && t.front() == '+') t.erase(0, 1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || end != t.data() + t.size() || !std::isfinite(v)) {
    throw ConfigError("line " + std::to_string(line) + ": not a number: '" + trim(text) + "'");
  }
  return v;
}

inline ConfigValue parse_value(const std::string& raw, int line) {
  const std::string v = trim(raw);
  if (v.empty()) throw ConfigError("line " + std::to_string(line) + ": missing value");
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') {
      throw ConfigError("line " + std::to_string(line) + ": unterminated string");
    }
    return v.substr(1, v.size() - 2);
  }
  if (v.front() == '[') {
    if (v.back() != ']') throw ConfigError("line " + std::to_string(line) + ": unterminated array");
    std::vector<double> out;
    std::stringstream ss(v.substr(1, v.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (trim(item).empty()) continue;
      out.push_back(parse_number(item, line));
    }
    return out;
  }
  return parse_number(v, line);
}

}  // namespace detail

inline ConfigTable parse_config(std::istream& in) {
  ConfigTable table;
  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = detail::trim(detail::strip_comment(raw));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3) {
        throw ConfigError("line " + std::to_string(line) + ": bad section header");
      }
      section = detail::trim(text.substr(1, text.size() - 2));
      table[section];
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line) + ": key outside any section");
    }
    const std::string key = detail::trim(text.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line) + ": empty key");
    if (table[section].count(key)) {
      throw ConfigError("line " + std::to_string(line) + ": duplicate key " + section + "." + key);
    }
    table[section][key] = {detail::parse_value(text.substr(eq + 1), line), line};
  }
  return table;
}

inline ConfigTable parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ConfigTable load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

// ---------------------------------------------------------------------------

/// Run-level settings shared by the experiments.
struct RunConfig {
  std::uint64_t seed = 1;
  int baseline_samples = 100;
  int calibration_seeds = 10;
  std::uint64_t calibration_seed_base = 1000;
  double calibration_k = 1.5;
  StageProfile stage;
  double sweep_step_mm = 0.005;
  double sweep_depth_mm = 0.5;
};

struct ExperimentConfig {
  ScaffoldConfig scaffold;
  double workspace_margin = 0.5;
  PlantConfig plant;
  DetectorConfig detector;
  bool thresholds_given = false;  ///< any threshold set in the file
  bool backstep_count_given = false;  ///< otherwise fixed-count runs calibrate it first
  ControllerConfig controller;
  bool compensation_from_friction = true;
  QualityModel quality;
  RunConfig run;

  /// Rebuilds derived fields and validates every section.
  void finalize() {
    plant.geometry = default_geometry(scaffold);
    plant.geometry.workspace_margin = workspace_margin;
    plant.sensor.seed = run.seed;
    detector.dt = plant.dt;
    if (compensation_from_friction) controller.compensation = plant.friction.attenuation();
    plant.validate();
    controller.validate();
    quality.validate();
    if (run.baseline_samples < 1) throw ConfigError("run.baseline_samples must be >= 1");
    if (run.calibration_seeds < 1) throw ConfigError("run.calibration_seeds must be >= 1");
    if (!(run.calibration_k >= 1.0)) throw ConfigError("run.calibration_k must be >= 1");
    if (!(run.sweep_step_mm > 0.0) || !(run.sweep_depth_mm > 0.0)) {
      throw ConfigError("run sweep step and depth must be > 0");
    }
  }
};

namespace detail {

class SectionReader {
 public:
  SectionReader(const std::string& name, std::map<std::string, ConfigEntry> entries)
      : name_(name), entries_(std::move(entries)) {}

  template <typename T>
  bool number(const std::string& key, T& out) {
    if (auto* e = take(key)) {
      const double* v = std::get_if<double>(&e->value);
      if (!v) fail(*e, key, "a number");
      if constexpr (std::is_integral_v<T>) {
        if (std::floor(*v) != *v) fail(*e, key, "an integer");
        out = static_cast<T>(*v);
      } else {
        out = static_cast<T>(*v);
      }
      return true;
    }
    return false;
  }

  void boolean(const std::string& key, bool& out) {
    if (auto* e = take(key)) {
      const bool* v = std::get_if<bool>(&e->value);
      if (!v) fail(*e, key, "true or false");
      out = *v;
    }
  }

  bool string(const std::string& key, std::string& out) {
    if (auto* e = take(key)) {
      const std::string* v = std::get_if<std::string>(&e->value);
      if (!v) fail(*e, key, "a quoted string");
      out = *v;
      last_line_ = e->line;
      return true;
    }
    return false;
  }

  bool array(const std::string& key, std::vector<double>& out) {
    if (auto* e = take(key)) {
      const auto* v = std::get_if<std::vector<double>>(&e->value);
      if (!v) fail(*e, key, "an array of numbers");
      out = *v;
      last_line_ = e->line;
      return true;
    }
    return false;
  }

  [[noreturn]] void bad_choice(const std::string& key, const std::string& value) const {
    throw ConfigError("line " + std::to_string(last_line_) + ": " + name_ + "." + key +
                      ": unknown option '" + value + "'");
  }

  int last_line() const { return last_line_; }

  void finish() const {
    for (const auto& [key, e] : entries_) {
      if (!used_.count(key)) {
        throw ConfigError("line " + std::to_string(e.line) + ": unknown key " + name_ + "." + key);
      }
    }
  }

 private:
  ConfigEntry* take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    used_[key] = true;
    last_line_ = it->second.line;
    return &it->second;
  }

  [[noreturn]] void fail(const ConfigEntry& e, const std::string& key, const char* what) const {
    throw ConfigError("line " + std::to_string(e.line) + ": " + name_ + "." + key + " must be " +
                      what);
  }

  std::string name_;
  std::map<std::string, ConfigEntry> entries_;
  std::map<std::string, bool> used_;
  int last_line_ = 0;
};

}  // namespace detail

/// Overlays a parsed table on `cfg` (which carries the scenario defaults).
inline void apply_config(const ConfigTable& table, ExperimentConfig& cfg) {
  static const std::vector<std::string> known{"scaffold", "cable",      "friction", "tissue", "sensor",
                                              "detector", "controller", "quality",  "run"};
  for (const auto& [name, _] : table) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ConfigError("unknown section [" + name + "]");
    }
  }
  auto section = [&](const std::string& name) {
    auto it = table.find(name);
    return detail::SectionReader(name, it == table.end() ? std::map<std::string, ConfigEntry>{}
                                                         : it->second);
  };

  {
    auto s = section("scaffold");
    s.number("half_width_mm", cfg.scaffold.half_width);
    s.number("front_anchor_height_mm", cfg.scaffold.front_anchor_height);
    s.number("rear_anchor_depth_mm", cfg.scaffold.rear_anchor_depth);
    s.number("collar_spacing_mm", cfg.scaffold.collar_spacing);
    s.number("tube_outer_diameter_mm", cfg.scaffold.tube_outer_diameter);
    s.number("workspace_margin_mm", cfg.workspace_margin);
    s.finish();
  }
  {
    auto s = section("cable");
    s.number("stiffness_N_per_mm", cfg.plant.cable_stiffness);
    s.number("preset_tension_N", cfg.plant.statics.preset_tension);
    s.number("min_tension_N", cfg.plant.statics.min_tension);
    s.number("loadcell_wrap_rad", cfg.plant.statics.loadcell_wrap);
    s.number("counts_per_rev", cfg.plant.motor.counts_per_rev);
    s.number("gear_ratio", cfg.plant.motor.gear_ratio);
    s.number("spool_diameter_mm", cfg.plant.motor.spool_diameter);
    s.boolean("quantize", cfg.plant.quantize);
    s.finish();
  }
  {
    auto s = section("friction");
    s.number("mu", cfg.plant.friction.mu);
    s.number("wrap_angle_rad", cfg.plant.friction.wrap_angle);
    s.number("stiction_band_N", cfg.plant.friction.stiction_band);
    s.number("kinetic_band_N", cfg.plant.friction.kinetic_band);
    s.finish();
  }
  {
    auto s = section("tissue");
    s.boolean("present", cfg.plant.tissue.present);
    std::string kind;
    if (s.string("kind", kind)) {
      if (kind == "soft") {
        cfg.plant.tissue.kind = TissueKind::SoftTissue;
      } else if (kind == "rigid") {
        cfg.plant.tissue.kind = TissueKind::Rigid;
      } else {
        s.bad_choice("kind", kind);
      }
    }
    s.number("surface_mm", cfg.plant.tissue.surface_z);
    s.number("stiffness_N_per_mm", cfg.plant.tissue.stiffness);
    s.finish();
  }
  {
    auto s = section("sensor");
    s.number("noise_sigma_N", cfg.plant.sensor.noise_sigma);
    std::vector<double> gains;
    if (s.array("gain_error", gains)) {
      if (gains.size() != kTendons) {
        throw ConfigError("line " + std::to_string(s.last_line()) +
                          ": sensor.gain_error needs 4 entries");
      }
      for (int i = 0; i < kTendons; ++i) cfg.plant.sensor.gain_error[i] = gains[i];
    }
    s.finish();
  }
  {
    auto s = section("detector");
    DetectorConfig& d = cfg.detector;
    s.number("ma_window", d.ma_window);
    s.number("grad_window", d.grad_window);
    s.number("lag_t0", d.lag_t0);
    s.number("lag_t1", d.lag_t1);
    s.number("persistence", d.persistence);
    s.number("q_epsilon", d.q_epsilon);
    std::string mode;
    if (s.string("mode", mode)) {
      if (mode == "first-derivative") {
        d.mode = DetectorMode::FirstDerivative;
      } else if (mode == "second-derivative") {
        d.mode = DetectorMode::SecondDerivative;
      } else {
        s.bad_choice("mode", mode);
      }
    }
    std::string rule;
    if (s.string("group_rule", rule)) {
      if (rule == "all") {
        d.group_rule = GroupRule::All;
      } else if (rule == "any") {
        d.group_rule = GroupRule::Any;
      } else {
        s.bad_choice("group_rule", rule);
      }
    }
    std::vector<double> group;
    if (s.array("loaded_group", group)) {
      d.loaded_group.clear();
      for (double g : group) {
        if (g < 1 || g > kTendons || std::floor(g) != g) {
          throw ConfigError("line " + std::to_string(s.last_line()) +
                            ": loaded_group entries are tendon numbers 1..4");
        }
        d.loaded_group.push_back(static_cast<int>(g) - 1);
      }
    }
    // Bitwise or: every key has to be consumed.
    cfg.thresholds_given |= s.number("P_th", d.thresholds.P) | s.number("Q_th", d.thresholds.Q) |
                            s.number("R_th", d.thresholds.R) | s.number("dT_th", d.thresholds.dT);
    s.finish();
  }
  {
    auto s = section("controller");
    ControllerConfig& c = cfg.controller;
    s.number("step_mm", c.step_mm);
    s.number("backstep_mm", c.backstep_mm);
    s.number("target_force_N", c.target_force);
    s.number("tolerance_N", c.force_tolerance);
    s.number("max_force_N", c.max_force);
    s.number("guard_margin_N", c.guard_margin);
    s.array("scan_points", c.scan_points);
    s.number("settle_samples", c.settle_samples);
    s.number("hold_samples", c.hold_samples);
    s.number("arrival_settle_samples", c.arrival_settle_samples);
    std::string mode;
    if (s.string("backstep_mode", mode)) {
      if (mode == "compensated-force") {
        c.backstep_mode = BackstepMode::CompensatedForce;
      } else if (mode == "fixed-count") {
        c.backstep_mode = BackstepMode::FixedCount;
      } else if (mode == "zero-force") {
        c.backstep_mode = BackstepMode::ZeroForce;
      } else {
        s.bad_choice("backstep_mode", mode);
      }
    }
    cfg.backstep_count_given |= s.number("backstep_count", c.backstep_count);
    s.boolean("compensation", cfg.compensation_from_friction);
    if (!cfg.compensation_from_friction) c.compensation = 1.0;
    s.number("zero_force_floor_N", c.zero_force_floor);
    s.number("traverse_retract_mm", c.traverse_retract);
    s.number("stuck_steps", c.stuck_steps);
    s.number("approach_start_mm", c.approach_start_z);
    s.number("max_approach_steps", c.max_approach_steps);
    s.finish();
  }
  {
    auto s = section("quality");
    s.number("f_opt_N", cfg.quality.f_opt);
    s.number("width_N", cfg.quality.width);
    s.boolean("contact_required", cfg.quality.contact_required);
    s.finish();
  }
  {
    auto s = section("run");
    RunConfig& r = cfg.run;
    s.number("seed", r.seed);
    s.number("dt_s", cfg.plant.dt);
    s.number("baseline_samples", r.baseline_samples);
    s.number("calibration_seeds", r.calibration_seeds);
    s.number("calibration_seed_base", r.calibration_seed_base);
    s.number("calibration_k", r.calibration_k);
    s.number("stage_amplitude_mm", r.stage.amplitude);
    s.number("stage_cycles", r.stage.cycles);
    s.number("stage_ramp_s", r.stage.ramp_s);
    s.number("stage_hold_s", r.stage.hold_s);
    s.number("sweep_step_mm", r.sweep_step_mm);
    s.number("sweep_depth_mm", r.sweep_depth_mm);
    s.finish();
  }
  cfg.finalize();
}

}  // namespace cdpm
