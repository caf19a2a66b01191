#pragma once

// Tension sensing and redundant tension distribution.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>

#include "cdpm/errors.hpp"
#include "cdpm/geometry.hpp"

namespace cdpm {

struct TensionFrame {
  double t = 0.0;
  Vec4 T_true = Vec4::Zero();  ///< tube side, N
  Vec4 T_meas = Vec4::Zero();  ///< sensor side, N
};

struct Baseline {
  Vec4 T0 = Vec4::Constant(2.0);
};

struct ForceEstimate {
  double cf_cal = 0.0;
  Vec4 per_tendon_contribution = Vec4::Zero();
};

struct StaticsConfig {
  double preset_tension = 2.0;  ///< N
  double min_tension = 0.5;     ///< N
  int baseline_samples = 100;
  /// Tendon wrap over each instrument load cell. The cell reads 2 sin(wrap/2) T.
  double loadcell_wrap = std::numbers::pi / 2.0;

  void validate() const {
    if (!(min_tension > 0.0)) throw ConfigError("min_tension_N must be > 0");
    if (!(preset_tension >= min_tension)) {
      throw ConfigError("preset_tension_N must be >= min_tension_N");
    }
    if (baseline_samples < 1) throw ConfigError("baseline_samples must be >= 1");
    if (!(loadcell_wrap > 0.0 && loadcell_wrap <= std::numbers::pi)) {
      throw ConfigError("loadcell wrap angle must lie in (0, pi]");
    }
  }
};

inline double loadcell_factor(double wrap = std::numbers::pi / 2.0) {
  return 2.0 * std::sin(wrap / 2.0);
}

/// Load-cell reading to cable tension for a symmetric wrap over the cell.
inline double tension_from_loadcell(double force, double wrap = std::numbers::pi / 2.0) {
  if (force < 0.0 || std::isnan(force)) {
    throw SensorFaultError("negative load-cell reading " + std::to_string(force) + " N");
  }
  return force / loadcell_factor(wrap);
}

inline double loadcell_from_tension(double tension, double wrap = std::numbers::pi / 2.0) {
  if (tension < 0.0 || std::isnan(tension)) {
    throw Error("internal: negative tension " + std::to_string(tension) + " N");
  }
  return tension * loadcell_factor(wrap);
}

/// Tensions closest to `baseline.T0` (Euclidean) that balance `external_wrench`
/// with every entry >= `min_tension`:
///
///     min |T - T0|^2   s.t.   W T + w_ext = 0,   T >= T_min
///
/// Solved exactly by enumerating which tendons sit on the lower bound. For a
/// fixed active set the problem is an equality-constrained least-distance
/// projection; the convex optimum is the best feasible candidate.
inline Vec4 distribute_tensions(const StructureMatrix& w, const Wrench& external_wrench,
                                const Baseline& baseline, double min_tension) {
  const Wrench rhs = -external_wrench;
  std::optional<Vec4> best;
  double best_cost = std::numeric_limits<double>::infinity();

  for (unsigned mask = 0; mask < (1u << kTendons); ++mask) {
    // Bit i set: tendon i is clamped at min_tension.
    Vec4 T = baseline.T0;
    Eigen::Vector3d b = rhs;
    int n_free = 0;
    int free_idx[kTendons];
    for (int i = 0; i < kTendons; ++i) {
      if (mask & (1u << i)) {
        T[i] = min_tension;
        b -= w.col(i) * min_tension;
      } else {
        free_idx[n_free++] = i;
      }
    }
    if (n_free == 0) {
      if ((b).lpNorm<Eigen::Infinity>() > 1e-10) continue;
    } else {
      Eigen::MatrixXd wf(3, n_free);
      Eigen::VectorXd t0f(n_free);
      for (int k = 0; k < n_free; ++k) {
        wf.col(k) = w.col(free_idx[k]);
        t0f[k] = baseline.T0[free_idx[k]];
      }
      // Minimum-norm correction onto {W_f T_f = b}.
      const Eigen::VectorXd corr =
          wf.completeOrthogonalDecomposition().solve(b - wf * t0f);
      const Eigen::VectorXd tf = t0f + corr;
      if ((wf * tf - b).lpNorm<Eigen::Infinity>() > 1e-10) continue;
      for (int k = 0; k < n_free; ++k) T[free_idx[k]] = tf[k];
    }
    if ((T.array() < min_tension - 1e-12).any()) continue;
    const double cost = (T - baseline.T0).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = T;
    }
  }
  if (!best) {
    throw WrenchInfeasibleError("no tension set >= " + std::to_string(min_tension) +
                                " N balances the requested wrench");
  }
  return *best;
}

inline Vec4 distribute_tensions(const TubePose& pose, const Wrench& external_wrench,
                                const Baseline& baseline, double min_tension,
                                const ScaffoldGeometry& geom) {
  return distribute_tensions(structure_matrix(pose, geom), external_wrench, baseline,
                             min_tension);
}

/// Contact-force estimate from measured tension changes projected on the
/// contact axis. Positive when the tissue pushes back against the probe.
inline ForceEstimate estimate_contact_force(const Vec4& T_meas, const Baseline& baseline,
                                            const Vec4& cos_theta) {
  ForceEstimate est;
  est.per_tendon_contribution = (T_meas - baseline.T0).cwiseProduct(cos_theta);
  est.cf_cal = 0.0;
  for (int i = 0; i < kTendons; ++i) est.cf_cal += est.per_tendon_contribution[i];
  return est;
}

inline ForceEstimate estimate_contact_force(const Vec4& T_meas, const Baseline& baseline,
                                            const TendonAngles& angles) {
  return estimate_contact_force(T_meas, baseline, angles.cos_theta);
}

/// Per-tendon mean of the measured tensions over the trailing `required`
/// frames.
inline Baseline capture_baseline(std::span<const TensionFrame> frames, int required) {
  if (required < 1 || static_cast<int>(frames.size()) < required) {
    throw InsufficientDataError("baseline needs " + std::to_string(required) + " frames, got " +
                                std::to_string(frames.size()));
  }
  Vec4 sum = Vec4::Zero();
  for (std::size_t k = frames.size() - required; k < frames.size(); ++k) sum += frames[k].T_meas;
  return {sum / static_cast<double>(required)};
}

}  // namespace cdpm
