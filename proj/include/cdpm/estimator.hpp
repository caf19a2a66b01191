#pragma once

#include <span>

#include "cdpm/geometry.hpp"
#include "cdpm/statics.hpp"

namespace cdpm {

/// What the instrument itself can compute from motor commands and load cells.
///
/// The over-tube pose is recovered by forward kinematics on the commanded
/// (unstretched) lengths plus the elastic stretch implied by the measured
/// tensions. The captured baseline is re-projected onto the equilibrium set
/// of the current pose, so that free-space motion does not read as force.
class ContactForceEstimator {
 public:
  ContactForceEstimator(ScaffoldGeometry geom, double cable_stiffness, double min_tension)
      : geom_(std::move(geom)), stiffness_(cable_stiffness), min_tension_(min_tension) {}

  void set_baseline(const Baseline& b) { baseline_ = b; }
  const Baseline& baseline() const { return baseline_; }

  void capture(std::span<const TensionFrame> frames, int required) {
    baseline_ = capture_baseline(frames, required);
  }

  TubePose estimate_pose(const CableLengths& commanded, const Vec4& T_meas,
                         const TubePose& guess) const {
    const CableLengths stretched{commanded.mm + T_meas / stiffness_};
    return fit_pose(stretched, geom_, guess);
  }

  /// Baseline tensions re-balanced for zero external wrench at `pose`.
  Baseline baseline_at(const TubePose& pose) const {
    return {distribute_tensions(pose, Wrench::Zero(), baseline_, min_tension_, geom_)};
  }

  struct Result {
    TubePose pose;
    ForceEstimate force;
  };

  Result estimate(const CableLengths& commanded, const Vec4& T_meas, const TubePose& guess) const {
    Result r;
    r.pose = estimate_pose(commanded, T_meas, guess);
    r.force = estimate_contact_force(T_meas, baseline_at(r.pose), tendon_angles(r.pose, geom_));
    return r;
  }

 private:
  ScaffoldGeometry geom_;
  double stiffness_;
  double min_tension_;
  Baseline baseline_;
};

}  // namespace cdpm
