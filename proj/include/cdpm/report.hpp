#pragma once

// Writes one run's outputs: trace.csv and summary.json in the output directory.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cdpm/errors.hpp"
#include "cdpm/experiments.hpp"
#include "cdpm/trace.hpp"

namespace cdpm {

inline nlohmann::ordered_json summary_json(const Summary& s) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.values) j[k] = v;
  j["warnings"] = static_cast<double>(s.warnings.size());
  if (!s.points.empty()) {
    auto pts = nlohmann::ordered_json::array();
    for (const auto& row : s.points) {
      nlohmann::ordered_json p = nlohmann::ordered_json::object();
      for (const auto& [k, v] : row) p[k] = v;
      pts.push_back(std::move(p));
    }
    j["points"] = std::move(pts);
  }
  return j;
}

inline void write_outputs(const std::filesystem::path& dir, const ExperimentResult& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::ofstream csv(dir / "trace.csv", std::ios::binary);
  std::ofstream js(dir / "summary.json", std::ios::binary);
  if (!csv || !js) throw ConfigError("output directory " + dir.string() + " is not writable");
  write_csv(csv, r.trace);
  js << summary_json(r.summary).dump(2) << "\n";
}

}  // namespace cdpm
