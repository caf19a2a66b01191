#pragma once

// Autonomous scanning state machine. The controller only sees what the
// instrument sees: the force estimate, detector events and its own commands.

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdpm/detection.hpp"
#include "cdpm/errors.hpp"
#include "cdpm/geometry.hpp"
#include "cdpm/plant.hpp"

namespace cdpm {

enum class Phase { Idle, Approach, Hold, BackStep, Traverse, Done, Aborted };

inline std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Idle: return "Idle";
    case Phase::Approach: return "Approach";
    case Phase::Hold: return "Hold";
    case Phase::BackStep: return "BackStep";
    case Phase::Traverse: return "Traverse";
    case Phase::Done: return "Done";
    case Phase::Aborted: return "Aborted";
  }
  return "?";
}

/// Idle is the pre-scan state while the baseline is recorded.
inline bool legal_transition(Phase from, Phase to) {
  if (to == Phase::Aborted) return from != Phase::Done && from != Phase::Aborted;
  switch (from) {
    case Phase::Idle: return to == Phase::Approach || to == Phase::Done;
    case Phase::Approach: return to == Phase::Hold;
    case Phase::Hold: return to == Phase::BackStep;
    case Phase::BackStep: return to == Phase::Traverse || to == Phase::Done;
    case Phase::Traverse: return to == Phase::Approach;
    default: return false;
  }
}

enum class BackstepMode {
  CompensatedForce,  ///< stop when the friction-compensated estimate reaches the target
  FixedCount,        ///< stop after a pre-recorded number of back-steps
  ZeroForce          ///< sweep back until the estimate reaches the noise floor
};

struct ControllerConfig {
  double step_mm = 0.01;
  double backstep_mm = 0.01;
  double target_force = 0.05;     ///< N
  double force_tolerance = 0.01;  ///< N
  double max_force = 1.0;         ///< N, must never be exceeded
  double guard_margin = 0.25;     ///< N, the guard trips at max_force - guard_margin
  std::vector<double> scan_points{0.0};  ///< mm along x
  int settle_samples = 20;
  int hold_samples = 20;
  int arrival_settle_samples = 80;  ///< after a traverse, before re-arming
  BackstepMode backstep_mode = BackstepMode::CompensatedForce;
  double compensation = std::exp(-0.0688 * std::numbers::pi / 2.0);  ///< 1 disables
  int backstep_count = 30;           ///< fixed-count mode
  double zero_force_floor = 0.015;   ///< N
  double traverse_retract = 0.05;    ///< mm
  int stuck_steps = 50;
  double stuck_decrease = 0.005;     ///< N, smallest decrease that counts as progress
  double approach_start_z = 0.0;     ///< mm
  int max_approach_steps = 3000;

  void validate() const {
    if (!(step_mm > 0.0) || !(backstep_mm > 0.0)) throw ConfigError("steps must be > 0");
    if (!(target_force > 0.0) || !(target_force < max_force)) {
      throw ConfigError("need 0 < target_force_N < max_force_N");
    }
    if (!(force_tolerance > 0.0)) throw ConfigError("force tolerance must be > 0");
    if (!(guard_margin >= 0.0) || !(guard_margin < max_force - target_force)) {
      throw ConfigError("guard margin must lie in [0, max_force - target_force)");
    }
    if (settle_samples < 1 || hold_samples < 0 || arrival_settle_samples < 1) {
      throw ConfigError("settle/hold sample counts out of range");
    }
    if (!(compensation > 0.0 && compensation <= 1.0)) {
      throw ConfigError("compensation factor must lie in (0, 1]");
    }
    if (backstep_count < 0) throw ConfigError("backstep_count must be >= 0");
    if (!(traverse_retract >= 0.0)) throw ConfigError("traverse retract must be >= 0");
    if (stuck_steps < 1 || max_approach_steps < 1) throw ConfigError("step limits must be >= 1");
  }
};

struct ControllerState {
  Phase phase = Phase::Idle;
  int point = 0;
  int backstep_count = 0;
  std::vector<Phase> history{Phase::Idle};
  std::string abort_reason;
};

/// What the controller decided during one tick.
struct ControllerEvent {
  bool detected = false;
  bool acquired = false;  ///< back-step terminated; image taken at this sample
};

class ScanController {
 public:
  ScanController(ControllerConfig cfg, const Plant& plant) : cfg_(std::move(cfg)), plant_(&plant) {
    cfg_.validate();
  }

  const ControllerConfig& config() const { return cfg_; }
  const ControllerState& state() const { return st_; }
  Phase phase() const { return st_.phase; }
  const TubePose& target() const { return target_; }
  const CableLengths& command() const { return command_; }

  /// Commands the hold-still pose used while the baseline is captured.
  void prepare() {
    target_ = {first_x(), cfg_.approach_start_z, 0.0};
    issue(target_);
  }

  void start() {
    if (cfg_.scan_points.empty()) {
      transition(Phase::Done);
      return;
    }
    approach_steps_ = 0;
    transition(Phase::Approach);
  }

  /// One sample under the current command. `cf` is the raw estimate.
  ControllerEvent tick(double cf, const std::optional<DetectionEvent>& event) {
    ControllerEvent out;
    if (st_.phase == Phase::Done || st_.phase == Phase::Aborted || st_.phase == Phase::Idle) {
      return out;
    }
    const double cf_comp = cf / cfg_.compensation;
    ++since_move_;
    ++in_phase_;
    window_.push_back(cf_comp);
    if (static_cast<int>(window_.size()) > std::max(1, cfg_.settle_samples / 2)) window_.pop_front();

    // The estimate trails the truth by up to a stiction band, hence the margin.
    if (cf_comp > cfg_.max_force - cfg_.guard_margin) {
      abort("force guard: estimate " + std::to_string(cf_comp) + " N exceeds the guard level");
      return out;
    }
    switch (st_.phase) {
      case Phase::Approach:
        if (event) {
          on_detection(*event);
          out.detected = true;
        } else if (since_move_ >= cfg_.settle_samples) {
          approach_step();
        }
        break;
      case Phase::Hold:
        if (in_phase_ >= cfg_.hold_samples) {
          transition(Phase::BackStep);
          st_.backstep_count = 0;
          best_ = settled_force();
          since_improve_ = 0;
        }
        break;
      case Phase::BackStep:
        if (since_move_ >= cfg_.settle_samples) out.acquired = back_step(settled_force());
        break;
      case Phase::Traverse:
        traverse();
        break;
      default:
        break;
    }
    return out;
  }

  /// Advances the commanded pose one step along the contact axis.
  void approach_step() {
    require_phase(Phase::Approach, "approach_step");
    if (++approach_steps_ > cfg_.max_approach_steps) {
      abort("no contact within " + std::to_string(cfg_.max_approach_steps) + " approach steps");
      return;
    }
    const Vec2 axis = plant_->geometry().contact_axis;
    move({target_.x + cfg_.step_mm * axis.x(), target_.z + cfg_.step_mm * axis.y(), target_.phi});
  }

  void on_detection(const DetectionEvent& ev) {
    if (st_.phase != Phase::Approach) {
      warnings_.push_back("detection ignored in phase " + std::string(phase_name(st_.phase)));
      return;
    }
    detected_cf_ = ev.cf_at_detect;
    transition(Phase::Hold);
  }

  /// Evaluates the termination rule on a settled estimate, then either retreats
  /// one step or ends the point. Returns true when the point's image is taken.
  bool back_step(double cf_settled) {
    require_phase(Phase::BackStep, "back_step");
    if (finished(cf_settled)) {
      final_cf_ = cf_settled;
      if (st_.point + 1 < static_cast<int>(cfg_.scan_points.size())) {
        begin_traverse();
      } else {
        transition(Phase::Done);
      }
      return true;
    }
    if (cfg_.backstep_mode != BackstepMode::FixedCount) {
      if (cf_settled < best_ - cfg_.stuck_decrease) {
        best_ = cf_settled;
        since_improve_ = 0;
      } else if (++since_improve_ >= cfg_.stuck_steps) {
        abort("back-step stuck: estimate failed to decrease over " +
              std::to_string(cfg_.stuck_steps) + " steps");
        return false;
      }
    }
    const Vec2 axis = plant_->geometry().contact_axis;
    ++st_.backstep_count;
    move({target_.x - cfg_.backstep_mm * axis.x(), target_.z - cfg_.backstep_mm * axis.y(),
          target_.phi});
    return false;
  }

  /// One horizontal sub-step toward the next scan point at retracted height.
  void traverse() {
    require_phase(Phase::Traverse, "traverse");
    const double goal = cfg_.scan_points[st_.point];
    if (target_.x != goal) {
      const double dx = std::clamp(goal - target_.x, -cfg_.step_mm, cfg_.step_mm);
      TubePose next = target_;
      next.x = std::abs(goal - (target_.x + dx)) < 1e-12 ? goal : target_.x + dx;
      move(next);
      return;
    }
    if (since_move_ >= cfg_.arrival_settle_samples) {
      approach_steps_ = 0;
      transition(Phase::Approach);
    }
  }

  double detected_cf() const { return detected_cf_; }
  double final_cf() const { return final_cf_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  double first_x() const { return cfg_.scan_points.empty() ? 0.0 : cfg_.scan_points.front(); }

  bool finished(double cf) const {
    switch (cfg_.backstep_mode) {
      case BackstepMode::CompensatedForce:
        return cf <= cfg_.target_force + cfg_.force_tolerance;
      case BackstepMode::FixedCount:
        return st_.backstep_count >= cfg_.backstep_count;
      case BackstepMode::ZeroForce:
        return cf <= cfg_.zero_force_floor;
    }
    return true;
  }

  void begin_traverse() {
    transition(Phase::Traverse);
    ++st_.point;
    const Vec2 axis = plant_->geometry().contact_axis;
    const double goal = cfg_.scan_points[st_.point];
    TubePose lifted{target_.x - cfg_.traverse_retract * axis.x(),
                    target_.z - cfg_.traverse_retract * axis.y(), target_.phi};
    if (!in_workspace({goal, lifted.z, lifted.phi}, plant_->geometry())) {
      abort("scan point x = " + std::to_string(goal) + " mm is outside the workspace");
      return;
    }
    move(lifted);
  }

  double settled_force() const {
    double s = 0.0;
    for (double v : window_) s += v;
    return window_.empty() ? 0.0 : s / static_cast<double>(window_.size());
  }

  void move(const TubePose& pose) {
    if (!in_workspace(pose, plant_->geometry())) {
      abort("commanded pose leaves the workspace");
      return;
    }
    target_ = pose;
    issue(pose);
  }

  void issue(const TubePose& pose) {
    command_ = plant_->command_for_pose(pose);
    since_move_ = 0;
    window_.clear();
  }

  void transition(Phase to) {
    if (!legal_transition(st_.phase, to)) {
      throw Error("illegal phase transition " + std::string(phase_name(st_.phase)) + " -> " +
                  std::string(phase_name(to)));
    }
    st_.phase = to;
    st_.history.push_back(to);
    in_phase_ = 0;
  }

  void abort(std::string reason) {
    st_.abort_reason = std::move(reason);
    transition(Phase::Aborted);
  }

  void require_phase(Phase p, const char* op) const {
    if (st_.phase != p) {
      throw Error(std::string(op) + " called in phase " + std::string(phase_name(st_.phase)));
    }
  }

  ControllerConfig cfg_;
  const Plant* plant_;
  ControllerState st_;
  TubePose target_;
  CableLengths command_;
  int since_move_ = 0;
  int in_phase_ = 0;
  int approach_steps_ = 0;
  std::deque<double> window_;
  double best_ = 0.0;
  int since_improve_ = 0;
  double detected_cf_ = 0.0;
  double final_cf_ = 0.0;
  std::vector<std::string> warnings_;
};

}  // namespace cdpm
