#pragma once

// Scalar stand-in for endomicroscope image quality as a function of the true
// probe-tissue contact force.

#include <cmath>
#include <span>
#include <vector>

#include "cdpm/errors.hpp"

namespace cdpm {

struct QualityModel {
  double f_opt = 0.05;  ///< N, sharpest image
  double width = 0.10;  ///< N
  bool contact_required = true;

  void validate() const {
    if (!(f_opt > 0.0)) throw ConfigError("quality f_opt_N must be > 0");
    if (!(width > 0.0)) throw ConfigError("quality width_N must be > 0");
  }
};

/// Gaussian in force, peaking at 1 for f_opt; 0 without contact when contact
/// is required.
inline double image_quality(double cf_true, const QualityModel& qm) {
  if (cf_true <= 0.0 && qm.contact_required) return 0.0;
  const double u = (cf_true - qm.f_opt) / qm.width;
  return std::exp(-u * u);
}

struct QualitySample {
  double cf_true = 0.0;
  int point = -1;          ///< scan point index, -1 outside any point
  bool acquisition = false;  ///< sample at which the point's image is taken
};

struct QualityTrace {
  std::vector<double> per_sample;
  std::vector<double> per_point;  ///< quality at each point's acquisition sample
};

inline QualityTrace quality_trace(std::span<const QualitySample> samples, const QualityModel& qm) {
  QualityTrace out;
  out.per_sample.reserve(samples.size());
  for (const auto& s : samples) {
    const double q = image_quality(s.cf_true, qm);
    out.per_sample.push_back(q);
    if (s.acquisition && s.point >= 0) {
      if (out.per_point.size() <= static_cast<std::size_t>(s.point)) {
        out.per_point.resize(s.point + 1, 0.0);
      }
      out.per_point[s.point] = q;
    }
  }
  return out;
}

}  // namespace cdpm
