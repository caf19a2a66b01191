#pragma once

// Quasi-static simulated instrument: elastic tendons driven by quantized
// motors, a lumped friction corner in front of each load cell, a linear
// tissue spring at the probe tip and noisy load cells.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "cdpm/errors.hpp"
#include "cdpm/geometry.hpp"
#include "cdpm/statics.hpp"

namespace cdpm {

struct MotorModel {
  int counts_per_rev = 3000;
  double gear_ratio = 25.0;
  double spool_diameter = 10.0;  ///< mm

  /// Tendon length per encoder count, mm.
  double resolution() const {
    return std::numbers::pi * spool_diameter / (counts_per_rev * gear_ratio);
  }

  void validate() const {
    if (counts_per_rev <= 0 || !(gear_ratio > 0.0) || !(spool_diameter > 0.0)) {
      throw ConfigError("motor constants must be positive");
    }
  }
};

inline double quantize_motor(double target_length, const MotorModel& model) {
  const double res = model.resolution();
  return std::round(target_length / res) * res;
}

/// Lumped friction between the tube side of a tendon and its load cell.
///
/// While slipping the sensor side follows the tube tension attenuated by the
/// capstan factor exp(-mu * wrap), lagging it by `kinetic_band` in the slip
/// direction. Slip continues while the tube tension keeps moving the same way.
/// Once the tension stops or reverses the corner sticks and the sensor value is
/// frozen until the attenuated tension departs from it by more than
/// `stiction_band`. With mu = 0 the corner is ideal and passes tension through.
struct FrictionModel {
  double mu = 0.0688;
  double wrap_angle = std::numbers::pi / 2.0;
  double stiction_band = 0.10;  ///< N, static breakaway
  double kinetic_band = 0.014;  ///< N, slip lag

  double attenuation() const { return std::exp(-mu * wrap_angle); }
  bool ideal() const { return mu == 0.0; }

  void validate() const {
    if (!(mu >= 0.0) || !(wrap_angle >= 0.0) || !(stiction_band >= 0.0) ||
        !(kinetic_band >= 0.0)) {
      throw ConfigError("friction parameters must be non-negative");
    }
    if (kinetic_band > stiction_band) {
      throw ConfigError("kinetic band must not exceed the stiction band");
    }
  }
};

struct FrictionMemory {
  double sensor = 0.0;       ///< last sensor-side tension, N
  double last_target = 0.0;  ///< attenuated tube tension at the previous sample
  int slip = 0;              ///< +1 slipping with rising tension, -1 falling, 0 stuck

  /// State after the tendon has been pulled up to `tension` and held.
  static FrictionMemory pretensioned(double tension, const FrictionModel& fm) {
    if (fm.ideal()) return {tension, tension, 0};
    const double target = fm.attenuation() * tension;
    return {target - fm.kinetic_band, target, 0};
  }
};

/// One friction update. Returns the sensor-side tension; `memory` is advanced.
inline double apply_capstan_friction(double tube_tension, const FrictionModel& fm,
                                     FrictionMemory& memory) {
  if (fm.ideal()) {
    memory = {tube_tension, tube_tension, 0};
    return tube_tension;
  }
  const double target = fm.attenuation() * tube_tension;
  const double change = target - memory.last_target;
  const int moving = (change > 0.0) - (change < 0.0);
  if (memory.slip != 0 && moving == memory.slip) {
    memory.sensor = target - memory.slip * fm.kinetic_band;
  } else {
    const double excess = target - memory.sensor;
    if (std::abs(excess) > fm.stiction_band) {
      memory.slip = (excess > 0.0) - (excess < 0.0);
      memory.sensor = target - memory.slip * fm.kinetic_band;
    } else {
      memory.slip = 0;
    }
  }
  memory.last_target = target;
  return memory.sensor;
}

enum class TissueKind { SoftTissue, Rigid };

struct TissueModel {
  bool present = true;
  double surface_z = 0.5;           ///< mm, along the contact axis
  double stiffness = 0.5;           ///< N/mm
  TissueKind kind = TissueKind::SoftTissue;

  void validate() const {
    if (!(stiffness > 0.0)) throw ConfigError("tissue stiffness must be > 0");
    if (kind == TissueKind::Rigid && stiffness < 100.0) {
      throw ConfigError("rigid tissue needs stiffness >= 100 N/mm");
    }
  }
};

/// Reaction magnitude, pushing the tip back along -contact_axis.
inline double tissue_reaction(double tip_z, const TissueModel& tm) {
  if (!tm.present || tip_z <= tm.surface_z) return 0.0;
  return tm.stiffness * (tip_z - tm.surface_z);
}

struct SensorModel {
  double noise_sigma = 0.005;  ///< N, per load cell
  std::uint64_t seed = 1;
  Vec4 gain_error = Vec4::Zero();  ///< fractional per-channel gain error

  void validate() const {
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma_N must be >= 0");
  }
};

struct PlantConfig {
  ScaffoldGeometry geometry = default_geometry();
  StaticsConfig statics;
  double cable_stiffness = 20.0;  ///< N/mm
  FrictionModel friction;
  TissueModel tissue;
  SensorModel sensor;
  MotorModel motor;
  bool quantize = true;
  double dt = 0.01;  ///< s

  void validate() const {
    geometry.validate();
    statics.validate();
    if (!(cable_stiffness > 0.0)) throw ConfigError("cable stiffness must be > 0");
    friction.validate();
    tissue.validate();
    sensor.validate();
    motor.validate();
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  }
};

struct PlantState {
  TubePose pose;
  CableLengths commanded;  ///< unstretched tendon lengths realised by the motors
  std::array<FrictionMemory, kTendons> friction{};
  double indentation = 0.0;     ///< mm
  double surface_offset = 0.0;  ///< mm, moves the tissue/stage surface along the axis
  std::mt19937_64 rng;
  double time = 0.0;
};

struct SensorFrame {
  double t = 0.0;
  Vec4 loadcell_F = Vec4::Zero();
  double ground_truth_CF = 0.0;
  Vec4 T_meas = Vec4::Zero();
  Vec4 T_true = Vec4::Zero();
  Vec4 T_sensor = Vec4::Zero();  ///< noise-free sensor-side tension
  TubePose pose;
  CableLengths commanded;
  bool slack_warning = false;
};

struct StepResult {
  PlantState state;
  SensorFrame frame;
};

class Plant {
 public:
  explicit Plant(PlantConfig config) : cfg_(std::move(config)) { cfg_.validate(); }

  const PlantConfig& config() const { return cfg_; }
  const ScaffoldGeometry& geometry() const { return cfg_.geometry; }

  Baseline preset() const { return {Vec4::Constant(cfg_.statics.preset_tension)}; }

  /// Unstretched lengths that hold `pose` with the preset tension distribution
  /// and no external load.
  CableLengths command_for_pose(const TubePose& pose) const {
    const Vec4 tension = distribute_tensions(pose, Wrench::Zero(), preset(),
                                             cfg_.statics.min_tension, cfg_.geometry);
    return {inverse_kinematics(pose, cfg_.geometry).mm - tension / cfg_.cable_stiffness};
  }

  /// Plant at rest at `pose`, tendons pretensioned, no surface offset.
  PlantState initial_state(const TubePose& pose) const {
    PlantState s;
    s.pose = pose;
    s.commanded = realise(command_for_pose(pose));
    s.rng.seed(cfg_.sensor.seed);
    s.pose = solve_equilibrium(s.commanded, s.surface_offset, pose);
    const Vec4 T = tube_tensions(s.pose, s.commanded);
    for (int i = 0; i < kTendons; ++i) {
      s.friction[i] = FrictionMemory::pretensioned(T[i], cfg_.friction);
    }
    s.indentation = penetration(s.pose, s.surface_offset);
    return s;
  }

  /// Advance one tick with new motor commands.
  StepResult step(const PlantState& state, const CableLengths& commanded, double dt) const {
    if ((commanded.mm.array() <= 0.0).any()) {
      throw ConfigError("commanded cable lengths must be positive");
    }
    StepResult out{state, {}};
    PlantState& s = out.state;
    s.commanded = realise(commanded);
    s.pose = solve_equilibrium(s.commanded, s.surface_offset, state.pose);
    s.time = state.time + dt;
    s.indentation = penetration(s.pose, s.surface_offset);

    SensorFrame& f = out.frame;
    f.t = s.time;
    f.pose = s.pose;
    f.commanded = s.commanded;
    f.T_true = tube_tensions(s.pose, s.commanded);
    f.ground_truth_CF = cfg_.tissue.stiffness * s.indentation;
    std::normal_distribution<double> noise(0.0, 1.0);
    const double wrap = cfg_.statics.loadcell_wrap;
    for (int i = 0; i < kTendons; ++i) {
      f.slack_warning |= f.T_true[i] < cfg_.statics.min_tension;
      f.T_sensor[i] = apply_capstan_friction(f.T_true[i], cfg_.friction, s.friction[i]);
      const double reading = loadcell_from_tension(std::max(0.0, f.T_sensor[i]), wrap) *
                                 (1.0 + cfg_.sensor.gain_error[i]) +
                             cfg_.sensor.noise_sigma * noise(s.rng);
      f.loadcell_F[i] = std::max(0.0, reading);
      f.T_meas[i] = tension_from_loadcell(f.loadcell_F[i], wrap);
    }
    return out;
  }

  Vec4 tube_tensions(const TubePose& pose, const CableLengths& commanded) const {
    const Vec4 stretch = raw_cable_lengths(pose, cfg_.geometry) - commanded.mm;
    return cfg_.cable_stiffness * stretch.cwiseMax(0.0);
  }

  /// Net generalized wrench on the tube (cables + tissue).
  Wrench net_wrench(const TubePose& pose, const CableLengths& commanded,
                    double surface_offset) const {
    Wrench w = structure_matrix_unchecked(pose, cfg_.geometry) * tube_tensions(pose, commanded);
    const double f = cfg_.tissue.stiffness * penetration(pose, surface_offset);
    if (f > 0.0) {
      const Vec2 force = -f * cfg_.geometry.contact_axis;
      const Vec2 r = detail::rotation(pose.phi) * cfg_.geometry.tip_offset;
      w[0] += force.x();
      w[1] += force.y();
      w[2] += detail::cross2(r, force);
    }
    return w;
  }

  double penetration(const TubePose& pose, double surface_offset) const {
    if (!cfg_.tissue.present) return 0.0;
    const double along = body_point(pose, cfg_.geometry.tip_offset).dot(cfg_.geometry.contact_axis);
    return std::max(0.0, along - (cfg_.tissue.surface_z + surface_offset));
  }

  /// Newton iteration on the net wrench with a central-difference Jacobian and
  /// backtracking.
  TubePose solve_equilibrium(const CableLengths& commanded, double surface_offset,
                             const TubePose& guess) const {
    constexpr int kMaxIterations = 200;
    constexpr double kTolerance = 1e-9;
    constexpr double kFd = 1e-6;
    auto residual = [&](const Eigen::Vector3d& q) {
      return net_wrench({q[0], q[1], q[2]}, commanded, surface_offset);
    };
    Eigen::Vector3d q(guess.x, guess.z, guess.phi);
    Wrench r = residual(q);
    for (int it = 0; it < kMaxIterations; ++it) {
      if (r.lpNorm<Eigen::Infinity>() < kTolerance) {
        const TubePose pose{q[0], q[1], q[2]};
        require_workspace(pose, cfg_.geometry);
        return pose;
      }
      Eigen::Matrix3d jac;
      for (int j = 0; j < 3; ++j) {
        Eigen::Vector3d dq = Eigen::Vector3d::Zero();
        dq[j] = kFd;
        jac.col(j) = (residual(q + dq) - residual(q - dq)) / (2.0 * kFd);
      }
      Eigen::Vector3d step = jac.partialPivLu().solve(-r);
      if (!step.allFinite()) {
        // Slack tendons drop out of the Jacobian after a large command jump;
        // take a damped least-squares step instead.
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const double lambda = 1e-6 * std::max(jtj.trace(), 1e-12);
        step = (jtj + lambda * Eigen::Matrix3d::Identity()).ldlt().solve(-jac.transpose() * r);
      }
      double alpha = 1.0;
      Wrench r_new = residual(q + step);
      while (r_new.norm() >= r.norm() && alpha > 1e-6) {
        alpha *= 0.5;
        r_new = residual(q + alpha * step);
      }
      q += alpha * step;
      r = r_new;
    }
    throw SolverError("quasi-static equilibrium not reached in 200 iterations (|wrench| = " +
                      std::to_string(r.lpNorm<Eigen::Infinity>()) + ")");
  }

 private:
  CableLengths realise(const CableLengths& commanded) const {
    if (!cfg_.quantize) return commanded;
    CableLengths q;
    for (int i = 0; i < kTendons; ++i) q.mm[i] = quantize_motor(commanded.mm[i], cfg_.motor);
    return q;
  }

  PlantConfig cfg_;
};

/// Trapezoidal push profile of the axial test stage.
struct StageProfile {
  double amplitude = 2.0;  ///< mm
  int cycles = 10;
  double ramp_s = 2.0;
  double hold_s = 2.0;

  double cycle_s() const { return 2.0 * (ramp_s + hold_s); }
  double duration_s() const { return cycles * cycle_s(); }
};

inline double linear_stage_profile(double t, const StageProfile& p) {
  if (t <= 0.0 || t >= p.duration_s()) return 0.0;
  const double u = std::fmod(t, p.cycle_s());
  if (u < p.ramp_s) return p.amplitude * u / p.ramp_s;
  if (u < p.ramp_s + p.hold_s) return p.amplitude;
  if (u < 2.0 * p.ramp_s + p.hold_s) return p.amplitude * (1.0 - (u - p.ramp_s - p.hold_s) / p.ramp_s);
  return 0.0;
}

}  // namespace cdpm
