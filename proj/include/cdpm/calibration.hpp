#pragma once

// Detector threshold calibration from contact-free runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cdpm/controller.hpp"
#include "cdpm/detection.hpp"
#include "cdpm/errors.hpp"
#include "cdpm/plant.hpp"

namespace cdpm {

/// Largest value of each detector statistic seen while the detector would
/// have been armed.
struct NoContactStatistics {
  double dT = 0.0;  ///< loaded-group slope sum
  double P = 0.0;   ///< |P|
  double Q = 0.0;   ///< loaded-group max of Q
  double R = 0.0;   ///< loaded-group max of R
  long samples = 0;

  struct Sample {
    double P;
    Vec4 R;
    Vec4 dT;
    Vec4 dT_ref;
  };
  std::vector<Sample> armed;  ///< every armed sample, for the joint Q calibration

  void merge(const NoContactStatistics& o) {
    dT = std::max(dT, o.dT);
    P = std::max(P, o.P);
    Q = std::max(Q, o.Q);
    R = std::max(R, o.R);
    samples += o.samples;
    armed.insert(armed.end(), o.armed.begin(), o.armed.end());
  }

  /// Largest per-tendon slope magnitude in the loaded group, per sample.
  std::vector<double> loaded_slopes(const std::vector<int>& group) const {
    std::vector<double> v;
    v.reserve(armed.size());
    for (const auto& s : armed) {
      double m = 0.0;
      for (int i : group) m = std::max(m, std::abs(s.dT[i]));
      v.push_back(m);
    }
    return v;
  }

  /// Per-sample loaded-group Q as the detector rule sees it: the weakest
  /// tendon for GroupRule::All, the strongest for Any.
  std::vector<double> group_Q(const DetectorConfig& det, double epsilon) const {
    std::vector<double> v;
    v.reserve(armed.size());
    for (const auto& s : armed) v.push_back(aggregate(compute_Q(s.dT, s.dT_ref, epsilon), det));
    return v;
  }

  std::vector<double> group_R(const DetectorConfig& det) const {
    std::vector<double> v;
    v.reserve(armed.size());
    for (const auto& s : armed) v.push_back(aggregate(s.R, det));
    return v;
  }

  static double aggregate(const Vec4& v, const DetectorConfig& det) {
    return det.group_rule == GroupRule::All ? group_min(v, det.loaded_group)
                                            : group_max(v, det.loaded_group);
  }
};

/// Empirical quantile, 0 for an empty sample.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

struct CalibrationOptions {
  double k = 1.5;
  int approach_steps = 60;   ///< per approach leg
  int baseline_samples = 100;
  double floor_dT = 1e-9;    ///< lower bounds keep thresholds > 0 on a noise-free plant
  double floor_P = 1e-9;
  double floor_Q = 1.0;      ///< the current slope must at least exceed the reference
  double confirm_quantile = 0.999;  ///< for Q, R and the Q floor, see calibrate_thresholds
  bool calibrate_epsilon = true;
  double floor_R = 1e-9;
};

/// Replays the scan pattern (approach legs at every point joined by retracted
/// traverses) with the tissue removed and records the armed-phase maxima.
inline NoContactStatistics no_contact_statistics(PlantConfig pc, const DetectorConfig& det,
                                                 const ControllerConfig& ctl,
                                                 const CalibrationOptions& opt) {
  pc.tissue.present = false;
  Plant plant(pc);
  FeaturePipeline features(det);
  NoContactStatistics st;

  std::vector<double> points = ctl.scan_points.empty() ? std::vector<double>{0.0} : ctl.scan_points;
  TubePose target{points.front(), ctl.approach_start_z, 0.0};
  PlantState state = plant.initial_state(target);
  const Vec2 axis = pc.geometry.contact_axis;

  auto run = [&](int samples, bool armed) {
    const CableLengths cmd = plant.command_for_pose(target);
    for (int i = 0; i < samples; ++i) {
      StepResult sr = plant.step(state, cmd, pc.dt);
      state = std::move(sr.state);
      const DetectionFeatures f = features.push(sr.frame.t, sr.frame.T_meas);
      if (!armed || !f.warm) continue;
      st.dT = std::max(st.dT, group_slope(f, det.loaded_group));
      st.P = std::max(st.P, std::abs(f.P));
      st.Q = std::max(st.Q, group_max(f.Q, det.loaded_group));
      st.R = std::max(st.R, group_max(f.R, det.loaded_group));
      st.armed.push_back({f.P, f.R, f.dT, f.dT_ref});
      ++st.samples;
    }
  };

  run(opt.baseline_samples, false);
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (int s = 0; s < opt.approach_steps; ++s) {
      target.x += ctl.step_mm * axis.x();
      target.z += ctl.step_mm * axis.y();
      run(ctl.settle_samples, true);
    }
    if (p + 1 == points.size()) break;
    for (int s = 0; s < opt.approach_steps / 2; ++s) {
      target.z -= ctl.backstep_mm * axis.y();
      target.x -= ctl.backstep_mm * axis.x();
      run(ctl.settle_samples, false);
    }
    target.z -= ctl.traverse_retract * axis.y();
    target.x -= ctl.traverse_retract * axis.x();
    run(1, false);
    while (target.x != points[p + 1]) {
      const double dx = std::clamp(points[p + 1] - target.x, -ctl.step_mm, ctl.step_mm);
      target.x = std::abs(points[p + 1] - target.x - dx) < 1e-12 ? points[p + 1] : target.x + dx;
      run(1, false);
    }
    run(ctl.arrival_settle_samples, false);
  }
  return st;
}

/// Thresholds at k times the worst contact-free statistic over all seeds.
///
/// The slope sum uses its plain maximum, which keeps the first-derivative mode
/// silent on every calibration run. For the second-derivative mode, Q and R
/// are set first. Both are ratios or differences of noise-level
/// derivatives with very long tails, so they are set from a high quantile
/// instead of the maximum. The Q floor is raised to the same quantile of the
/// contact-free slope magnitude, so Q compares against the noise level rather
/// than against an arbitrarily small number. P is then set to k times the
/// largest |P| among samples that pass both the Q and R tests (and no lower than
/// the same quantile of |P|), so the combined rule never fires on the
/// calibration runs.
inline DetectorConfig calibrate_thresholds(const PlantConfig& pc, DetectorConfig det,
                                           const ControllerConfig& ctl,
                                           std::span<const std::uint64_t> seeds,
                                           const CalibrationOptions& opt = {}) {
  if (seeds.empty()) throw CalibrationError("calibration needs at least one seed");
  if (!(opt.k >= 1.0)) throw CalibrationError("calibration factor k must be >= 1");
  NoContactStatistics all;
  for (std::uint64_t seed : seeds) {
    PlantConfig run = pc;
    run.sensor.seed = seed;
    all.merge(no_contact_statistics(run, det, ctl, opt));
  }
  det.thresholds.dT = std::max(opt.k * all.dT, opt.floor_dT);
  if (opt.calibrate_epsilon) {
    det.q_epsilon = std::max(det.q_epsilon,
                             quantile(all.loaded_slopes(det.loaded_group), opt.confirm_quantile));
  }
  det.thresholds.Q = std::max(
      opt.k * quantile(all.group_Q(det, det.q_epsilon), opt.confirm_quantile),
      opt.floor_Q);
  det.thresholds.R =
      std::max(opt.k * quantile(all.group_R(det), opt.confirm_quantile), opt.floor_R);

  // P last: it only has to reject samples the Q and R tests let through.
  double p_joint = 0.0;
  std::vector<double> p_abs;
  for (const auto& s : all.armed) {
    const double p = std::abs(s.P);
    p_abs.push_back(p);
    if (group_passes(compute_Q(s.dT, s.dT_ref, det.q_epsilon), s.R, det)) {
      p_joint = std::max(p_joint, p);
    }
  }
  det.thresholds.P = std::max({opt.k * p_joint, opt.k * quantile(p_abs, opt.confirm_quantile),
                               opt.floor_P});
  return det;
}

}  // namespace cdpm
