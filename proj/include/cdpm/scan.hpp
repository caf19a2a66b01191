#pragma once

// Closed-loop simulation: plant step -> features -> estimate -> detector ->
// controller, one sample at a time.

#include <optional>
#include <string>
#include <vector>

#include "cdpm/controller.hpp"
#include "cdpm/detection.hpp"
#include "cdpm/estimator.hpp"
#include "cdpm/imaging.hpp"
#include "cdpm/plant.hpp"
#include "cdpm/trace.hpp"

namespace cdpm {

struct PointRecord {
  double x = 0.0;
  double detected_cf_est = 0.0;
  double detected_cf_true = 0.0;
  double t_detect = 0.0;
  int backstep_count = 0;
  double final_cf_est = 0.0;
  double final_cf_true = 0.0;
  double quality = 0.0;  ///< at acquisition
  long samples = 0;      ///< samples spent on this point, traverse included
  double traverse_quality_mean = 0.0;  ///< over the traverse that follows, 0 if none
  double traverse_quality_max = 0.0;
};

struct ScanReport {
  std::vector<PointRecord> points;
  bool aborted = false;
  std::string abort_reason;
  std::vector<Phase> history;
  double max_cf_true = 0.0;
  long samples = 0;

  double mean_detected_cf_true() const { return mean(&PointRecord::detected_cf_true); }
  double mean_final_cf_true() const { return mean(&PointRecord::final_cf_true); }
  double mean_backstep_count() const {
    double s = 0.0;
    for (const auto& p : points) s += p.backstep_count;
    return points.empty() ? 0.0 : s / static_cast<double>(points.size());
  }

 private:
  double mean(double PointRecord::*field) const {
    double s = 0.0;
    for (const auto& p : points) s += p.*field;
    return points.empty() ? 0.0 : s / static_cast<double>(points.size());
  }
};

struct ScanOptions {
  int baseline_samples = 100;
  long max_samples = 2'000'000;
  QualityModel quality;
  bool record_trace = true;
};

struct ScanRun {
  ScanReport report;
  std::vector<TraceRecord> trace;
  PlantState final_state;
  TubePose final_target;
  TubePose estimated_pose;
  Baseline baseline;
  std::optional<FeaturePipeline> features;  ///< continues the trace's feature columns
};

inline TraceRecord make_trace_record(const SensorFrame& f, double cf_est, Phase phase,
                                     double quality, const DetectionFeatures& feat) {
  TraceRecord r;
  r.t_s = f.t;
  r.commanded_L_mm = f.commanded.mm;
  r.T_true_N = f.T_true;
  r.T_meas_N = f.T_meas;
  r.loadcell_F_N = f.loadcell_F;
  r.cf_cal_N = cf_est;
  r.cf_true_N = f.ground_truth_CF;
  r.pose = f.pose;
  r.phase = std::string(phase_name(phase));
  r.quality = quality;
  r.dT = feat.dT;
  r.P = feat.P;
  r.Q = feat.Q;
  r.R = feat.R;
  return r;
}

/// Runs the full state machine over all configured points. Aborts come back
/// as a flagged partial report; solver failures propagate as exceptions.
inline ScanRun run_scan(const Plant& plant, const DetectorConfig& detector_cfg,
                        const ControllerConfig& controller_cfg, const ScanOptions& opt = {}) {
  ScanRun run;
  ScanReport& rep = run.report;
  ScanController ctl(controller_cfg, plant);
  ContactDetector detector(detector_cfg);
  FeaturePipeline features(detector_cfg);
  const PlantConfig& pc = plant.config();
  ContactForceEstimator estimator(pc.geometry, pc.cable_stiffness, pc.statics.min_tension);
  const double dt = pc.dt;

  ctl.prepare();
  PlantState state = plant.initial_state(ctl.target());
  TubePose guess = state.pose;

  std::vector<TensionFrame> baseline_frames;
  for (int i = 0; i < opt.baseline_samples; ++i) {
    StepResult sr = plant.step(state, ctl.command(), dt);
    state = std::move(sr.state);
    const DetectionFeatures feat = features.push(sr.frame.t, sr.frame.T_meas);
    baseline_frames.push_back({sr.frame.t, sr.frame.T_true, sr.frame.T_meas});
    rep.max_cf_true = std::max(rep.max_cf_true, sr.frame.ground_truth_CF);
    if (opt.record_trace) {
      run.trace.push_back(make_trace_record(sr.frame, 0.0, Phase::Idle,
                                            image_quality(sr.frame.ground_truth_CF, opt.quality),
                                            feat));
    }
  }
  estimator.capture(baseline_frames, std::max(1, opt.baseline_samples));

  ctl.start();
  if (ctl.phase() == Phase::Approach) detector.arm();
  PointRecord current;
  double traverse_q_sum = 0.0;
  long traverse_n = 0;
  long point_samples = 0;

  for (long n = 0; n < opt.max_samples; ++n) {
    const Phase phase = ctl.phase();
    if (phase == Phase::Done || phase == Phase::Aborted) break;
    StepResult sr = plant.step(state, ctl.command(), dt);
    state = std::move(sr.state);
    const SensorFrame& f = sr.frame;
    const DetectionFeatures feat = features.push(f.t, f.T_meas);
    const auto est = estimator.estimate(f.commanded, f.T_meas, guess);
    guess = est.pose;
    const double cf = est.force.cf_cal;
    std::optional<DetectionEvent> ev = detector.update(feat, f.T_meas);
    if (ev) ev->cf_at_detect = cf;
    const double q = image_quality(f.ground_truth_CF, opt.quality);
    rep.max_cf_true = std::max(rep.max_cf_true, f.ground_truth_CF);
    ++point_samples;
    if (phase == Phase::Traverse) {
      traverse_q_sum += q;
      ++traverse_n;
      auto& last = rep.points.back();
      last.traverse_quality_max = std::max(last.traverse_quality_max, q);
    }

    const ControllerEvent ce = ctl.tick(cf, ev);
    if (ce.detected) {
      current = {};
      current.x = ctl.target().x;
      current.detected_cf_est = cf;
      current.detected_cf_true = f.ground_truth_CF;
      current.t_detect = f.t;
    }
    if (ce.acquired) {
      current.backstep_count = ctl.state().backstep_count;
      current.final_cf_est = ctl.final_cf();
      current.final_cf_true = f.ground_truth_CF;
      current.quality = q;
      if (!rep.points.empty() && traverse_n > 0) {
        rep.points.back().traverse_quality_mean = traverse_q_sum / static_cast<double>(traverse_n);
      }
      traverse_q_sum = 0.0;
      traverse_n = 0;
      current.samples = point_samples;
      point_samples = 0;
      rep.points.push_back(current);
    }
    if (ctl.phase() == Phase::Approach && phase != Phase::Approach) detector.arm();
    if (ctl.phase() != Phase::Approach) detector.disarm();

    if (opt.record_trace) run.trace.push_back(make_trace_record(f, cf, phase, q, feat));
    ++rep.samples;
  }
  if (ctl.phase() != Phase::Done && ctl.phase() != Phase::Aborted) {
    rep.aborted = true;
    rep.abort_reason = "sample budget exhausted";
  }
  if (ctl.phase() == Phase::Aborted) {
    rep.aborted = true;
    rep.abort_reason = ctl.state().abort_reason;
  }
  rep.history = ctl.state().history;
  run.final_state = std::move(state);
  run.final_target = ctl.target();
  run.estimated_pose = guess;
  run.baseline = estimator.baseline();
  run.features = std::move(features);
  return run;
}

}  // namespace cdpm
