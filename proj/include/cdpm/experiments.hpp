#pragma once

// The three bench experiments, the quality sweep and the calibration run.
// Each returns a trace plus a flat summary; summaries are built only from
// quantities that also appear in the trace.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cdpm/calibration.hpp"
#include "cdpm/config.hpp"
#include "cdpm/estimator.hpp"
#include "cdpm/imaging.hpp"
#include "cdpm/plant.hpp"
#include "cdpm/scan.hpp"
#include "cdpm/trace.hpp"

namespace cdpm {

enum class Scenario { ForceSense, Scan1D, Scan2D, ForceSweep, Calibrate };

/// Ordered key -> number map, plus an optional per-point table.
struct Summary {
  using Row = std::vector<std::pair<std::string, double>>;
  Row values;
  std::vector<Row> points;
  std::vector<std::string> warnings;

  void set(const std::string& key, double v) {
    for (auto& [k, x] : values) {
      if (k == key) {
        x = v;
        return;
      }
    }
    values.emplace_back(key, v);
  }

  double get(const std::string& key) const {
    for (const auto& [k, x] : values) {
      if (k == key) return x;
    }
    throw Error("summary has no key " + key);
  }

  bool has(const std::string& key) const {
    return std::any_of(values.begin(), values.end(),
                       [&](const auto& kv) { return kv.first == key; });
  }
};

struct ExperimentResult {
  Summary summary;
  std::vector<TraceRecord> trace;
  bool aborted = false;
  std::string abort_reason;
};

/// Scenario defaults; a config file is overlaid on top of these.
inline ExperimentConfig default_config(Scenario s) {
  ExperimentConfig cfg;
  cfg.controller.backstep_mode = BackstepMode::FixedCount;
  switch (s) {
    case Scenario::ForceSense:
      // Stage pushing axially on the probe through a compliant interface.
      cfg.plant.tissue.surface_z = 0.0;
      cfg.plant.tissue.stiffness = 0.45;
      break;
    case Scenario::Scan1D:
    case Scenario::ForceSweep:
      cfg.plant.tissue.surface_z = 0.3;
      cfg.controller.scan_points = {0.0};
      cfg.detector.mode = DetectorMode::FirstDerivative;
      break;
    case Scenario::Scan2D:
      cfg.plant.tissue.surface_z = 0.3;
      cfg.controller.scan_points = {-1.25, -0.75, -0.25, 0.25, 0.75, 1.25};
      cfg.detector.mode = DetectorMode::SecondDerivative;
      break;
    case Scenario::Calibrate:
      cfg.plant.tissue.surface_z = 0.3;
      cfg.controller.scan_points = {-1.25, -0.75, -0.25, 0.25, 0.75, 1.25};
      break;
  }
  cfg.finalize();
  return cfg;
}

/// Rigid test surface: stiff enough that one 0.01 mm step is a large force
/// increment, placed so the first loaded step lands near the stiction release.
inline void make_rigid(ExperimentConfig& cfg) {
  cfg.plant.tissue.kind = TissueKind::Rigid;
  cfg.plant.tissue.stiffness = 100.0;
  cfg.plant.tissue.surface_z = 0.301;
  cfg.finalize();
}

inline std::vector<std::uint64_t> calibration_seeds(const RunConfig& run) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < run.calibration_seeds; ++i) seeds.push_back(run.calibration_seed_base + i);
  return seeds;
}

/// Detector for `mode`: the configured thresholds if the file gave any,
/// otherwise calibrated on contact-free runs of the same scan pattern.
inline DetectorConfig prepared_detector(const ExperimentConfig& cfg, DetectorMode mode) {
  DetectorConfig det = cfg.detector;
  det.mode = mode;
  if (cfg.thresholds_given) return det;
  CalibrationOptions opt;
  opt.k = cfg.run.calibration_k;
  opt.baseline_samples = cfg.run.baseline_samples;
  const auto seeds = calibration_seeds(cfg.run);
  return calibrate_thresholds(cfg.plant, det, cfg.controller, seeds, opt);
}

// ---------------------------------------------------------------------------
// Experiment A: probe held at the centre, stage cycles against it.

inline ExperimentResult run_experiment_A(const ExperimentConfig& cfg) {
  ExperimentResult out;
  Plant plant(cfg.plant);
  const StageProfile& prof = cfg.run.stage;
  const int nb = cfg.run.baseline_samples;
  const double dt = cfg.plant.dt;
  const int pre = 2 * nb;  // settle, then baseline
  const int stage_n = static_cast<int>(std::llround(prof.duration_s() / dt));
  const int post = 3 * nb;

  PlantState state = plant.initial_state({0.0, 0.0, 0.0});
  const CableLengths cmd = state.commanded;
  ContactForceEstimator est(cfg.plant.geometry, cfg.plant.cable_stiffness,
                            cfg.plant.statics.min_tension);
  FeaturePipeline features(cfg.detector);
  std::vector<TensionFrame> frames;
  TubePose guess = state.pose;

  double sum_cal = 0.0, sum_true = 0.0, max_err = 0.0, max_true = 0.0;
  long plateau = 0;
  Vec4 post_sum = Vec4::Zero();
  int post_n = 0;
  const int cycles = prof.cycles;
  std::vector<double> cyc_cal(cycles, 0.0), cyc_true(cycles, 0.0);

  for (int k = 0; k < pre + stage_n + post; ++k) {
    const double ts = (k - pre) * dt;
    state.surface_offset = k >= pre ? -linear_stage_profile(ts, prof) : 0.0;
    StepResult sr = plant.step(state, cmd, dt);
    state = std::move(sr.state);
    const SensorFrame& f = sr.frame;
    const DetectionFeatures feat = features.push(f.t, f.T_meas);
    max_true = std::max(max_true, f.ground_truth_CF);

    std::string phase = "Settle";
    double cf = 0.0;
    if (k >= nb && k < pre) {
      phase = "Baseline";
      frames.push_back({f.t, f.T_true, f.T_meas});
      if (k == pre - 1) est.capture(frames, nb);
    } else if (k >= pre) {
      const auto e = est.estimate(f.commanded, f.T_meas, guess);
      guess = e.pose;
      cf = e.force.cf_cal;
      max_err = std::max(max_err, std::abs(cf - f.ground_truth_CF));
      phase = k < pre + stage_n ? "Stage" : "Post";
      const double u = std::fmod(ts, prof.cycle_s());
      if (phase == "Stage" && u > prof.ramp_s + 0.5 && u < prof.ramp_s + prof.hold_s) {
        phase = "Plateau";
        sum_cal += cf;
        sum_true += f.ground_truth_CF;
        ++plateau;
        const int c = std::min(cycles - 1, static_cast<int>(ts / prof.cycle_s()));
        cyc_cal[c] += cf;
        cyc_true[c] += f.ground_truth_CF;
      }
      if (k >= pre + stage_n + post - nb) {
        phase = "Residual";
        post_sum += f.T_meas;
        ++post_n;
      }
    }
    TraceRecord r = make_trace_record(f, cf, Phase::Idle, 0.0, feat);
    r.phase = phase;
    out.trace.push_back(std::move(r));
  }

  Summary& s = out.summary;
  s.set("underestimate_ratio", sum_true > 0.0 ? 1.0 - sum_cal / sum_true : 0.0);
  s.set("plateau_samples", static_cast<double>(plateau));
  s.set("max_abs_cf_error_N", max_err);
  const Vec4 T0 = est.baseline().T0;
  const Vec4 resid = post_sum / std::max(1, post_n) - T0;
  for (int i = 0; i < kTendons; ++i) {
    s.set("baseline_T" + std::to_string(i + 1) + "_N", T0[i]);
  }
  for (int i = 0; i < kTendons; ++i) {
    s.set("residual_T" + std::to_string(i + 1) + "_N", resid[i]);
  }
  s.set("max_abs_residual_N", resid.cwiseAbs().maxCoeff());
  s.set("noise_sigma_N", cfg.plant.sensor.noise_sigma);
  s.set("max_cf_true_N", max_true);
  for (int c = 0; c < cycles; ++c) {
    s.points.push_back({{"cycle", c + 1.0},
                        {"underestimate_ratio",
                         cyc_true[c] > 0.0 ? 1.0 - cyc_cal[c] / cyc_true[c] : 0.0}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Back-step bookkeeping shared by experiment B and the count calibration.

struct StepRecord {
  int step = 0;  ///< back-steps since detection
  double cf_true = 0.0;
  double cf_est = 0.0;
  double quality = 0.0;
  bool retreat = false;  ///< taken after acquisition
};

/// Continues from the end of a single-point scan, stepping back one
/// back-step at a time until the tissue force is gone.
inline std::vector<StepRecord> retreat_sweep(const Plant& plant, ScanRun& run,
                                             const ControllerConfig& cc, const QualityModel& qm,
                                             int first_step, std::vector<TraceRecord>* trace,
                                             int max_steps = 400) {
  std::vector<StepRecord> out;
  const PlantConfig& pc = plant.config();
  ContactForceEstimator est(pc.geometry, pc.cable_stiffness, pc.statics.min_tension);
  est.set_baseline(run.baseline);
  TubePose target = run.final_target;
  TubePose guess = run.estimated_pose;
  const Vec2 axis = pc.geometry.contact_axis;
  for (int n = 1; n <= max_steps; ++n) {
    target.x -= cc.backstep_mm * axis.x();
    target.z -= cc.backstep_mm * axis.y();
    const CableLengths cmd = plant.command_for_pose(target);
    StepRecord rec;
    for (int i = 0; i < cc.settle_samples; ++i) {
      StepResult sr = plant.step(run.final_state, cmd, pc.dt);
      run.final_state = std::move(sr.state);
      const SensorFrame& f = sr.frame;
      const auto e = est.estimate(f.commanded, f.T_meas, guess);
      guess = e.pose;
      rec = {first_step + n, f.ground_truth_CF, e.force.cf_cal,
             image_quality(f.ground_truth_CF, qm), true};
      if (trace) {
        DetectionFeatures feat;
        if (run.features) feat = run.features->push(f.t, f.T_meas);
        TraceRecord r = make_trace_record(f, rec.cf_est, Phase::Idle, rec.quality, feat);
        r.phase = "Retreat";
        trace->push_back(std::move(r));
      }
    }
    out.push_back(rec);
    if (rec.cf_true <= 0.0) break;
  }
  run.final_target = target;
  return out;
}

/// Settled value at the end of each back-step, read back from the trace.
inline std::vector<StepRecord> backstep_records(const std::vector<TraceRecord>& trace) {
  std::vector<StepRecord> out;
  int step = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].phase != "BackStep") continue;
    const bool last_of_step = i + 1 == trace.size() || trace[i + 1].phase != "BackStep" ||
                              trace[i + 1].commanded_L_mm != trace[i].commanded_L_mm;
    if (!last_of_step) continue;
    out.push_back({step++, trace[i].cf_true_N, trace[i].cf_cal_N, trace[i].quality, false});
  }
  return out;
}

/// Back-steps from detection that bring the ground-truth force closest to the
/// target, measured on a calibration seed with the force rig attached.
inline int calibrate_backstep_count(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.run.seed = cfg.run.calibration_seed_base;
  c.controller.scan_points = {cfg.controller.scan_points.empty() ? 0.0
                                                                 : cfg.controller.scan_points.front()};
  c.controller.backstep_mode = BackstepMode::FixedCount;
  c.controller.backstep_count = 0;
  c.finalize();
  const DetectorConfig det = prepared_detector(c, DetectorMode::FirstDerivative);
  Plant plant(c.plant);
  ScanOptions opt;
  opt.baseline_samples = c.run.baseline_samples;
  opt.quality = c.quality;
  opt.record_trace = false;
  ScanRun run = run_scan(plant, det, c.controller, opt);
  if (run.report.aborted || run.report.points.empty()) {
    throw CalibrationError("back-step calibration: no detection (" + run.report.abort_reason + ")");
  }
  std::vector<StepRecord> steps{{0, run.report.points[0].final_cf_true, 0.0, 0.0, false}};
  const auto more = retreat_sweep(plant, run, c.controller, c.quality, 0, nullptr);
  steps.insert(steps.end(), more.begin(), more.end());
  int best = 0;
  for (const auto& s : steps) {
    if (std::abs(s.cf_true - c.controller.target_force) <
        std::abs(steps[best].cf_true - c.controller.target_force)) {
      best = s.step;
    }
  }
  return best;
}

inline ControllerConfig prepared_controller(const ExperimentConfig& cfg, Summary& s) {
  ControllerConfig cc = cfg.controller;
  if (cc.backstep_mode == BackstepMode::FixedCount && !cfg.backstep_count_given) {
    cc.backstep_count = calibrate_backstep_count(cfg);
    s.set("backstep_count_calibrated", cc.backstep_count);
  }
  return cc;
}

inline void add_threshold_summary(Summary& s, const DetectorConfig& det) {
  s.set("threshold_dT", det.thresholds.dT);
  s.set("threshold_P", det.thresholds.P);
  s.set("threshold_Q", det.thresholds.Q);
  s.set("threshold_R", det.thresholds.R);
  s.set("q_epsilon", det.q_epsilon);
}

// ---------------------------------------------------------------------------
// Experiment B: single-point approach, detection, back-step, acquisition and
// a retreat past the zero crossing.

inline ExperimentResult run_experiment_B(const ExperimentConfig& cfg) {
  ExperimentResult out;
  Summary& s = out.summary;
  const DetectorConfig det = prepared_detector(cfg, DetectorMode::FirstDerivative);
  ControllerConfig cc = prepared_controller(cfg, s);
  cc.scan_points = {cfg.controller.scan_points.empty() ? 0.0 : cfg.controller.scan_points.front()};
  add_threshold_summary(s, det);

  Plant plant(cfg.plant);
  ScanOptions opt;
  opt.baseline_samples = cfg.run.baseline_samples;
  opt.quality = cfg.quality;
  ScanRun run = run_scan(plant, det, cc, opt);
  out.aborted = run.report.aborted;
  out.abort_reason = run.report.abort_reason;
  s.set("rigid", cfg.plant.tissue.kind == TissueKind::Rigid ? 1.0 : 0.0);
  s.set("aborted", out.aborted ? 1.0 : 0.0);
  s.set("point_records", static_cast<double>(run.report.points.size()));

  std::vector<StepRecord> steps = backstep_records(run.trace);
  if (!run.report.points.empty()) {
    const PointRecord& p = run.report.points.front();
    s.set("detected_cf_true_N", p.detected_cf_true);
    s.set("detected_cf_est_N", p.detected_cf_est);
    s.set("t_detect_s", p.t_detect);
    s.set("backstep_count", p.backstep_count);
    s.set("final_cf_true_N", p.final_cf_true);
    s.set("final_cf_est_N", p.final_cf_est);
    s.set("quality_at_acquisition", p.quality);
    const auto more = retreat_sweep(plant, run, cc, cfg.quality, p.backstep_count, &run.trace);
    steps.insert(steps.end(), more.begin(), more.end());
  }
  // Ground-truth view of the whole back-step/retreat sweep.
  int best = -1;
  int zero = -1;
  for (const auto& st : steps) {
    if (best < 0 || std::abs(st.cf_true - cc.target_force) <
                        std::abs(steps[best].cf_true - cc.target_force)) {
      best = st.step;
    }
    if (zero < 0 && st.cf_true <= 0.0) zero = st.step;
    s.points.push_back({{"step", static_cast<double>(st.step)},
                        {"cf_true_N", st.cf_true},
                        {"cf_est_N", st.cf_est},
                        {"quality", st.quality},
                        {"retreat", st.retreat ? 1.0 : 0.0}});
  }
  s.set("steps_to_target", best);
  s.set("zero_crossing_step", zero);
  s.set("max_cf_true_N", run.report.max_cf_true);
  for (const auto& r : run.trace) {
    s.set("max_cf_true_N", std::max(s.get("max_cf_true_N"), r.cf_true_N));
  }
  out.trace = std::move(run.trace);
  return out;
}

// ---------------------------------------------------------------------------
// Experiment C: six-point raster with the second-derivative detector.

inline ExperimentResult run_experiment_C(const ExperimentConfig& cfg) {
  ExperimentResult out;
  Summary& s = out.summary;
  const DetectorConfig det = prepared_detector(cfg, DetectorMode::SecondDerivative);
  const ControllerConfig cc = prepared_controller(cfg, s);
  add_threshold_summary(s, det);

  Plant plant(cfg.plant);
  ScanOptions opt;
  opt.baseline_samples = cfg.run.baseline_samples;
  opt.quality = cfg.quality;
  ScanRun run = run_scan(plant, det, cc, opt);
  const ScanReport& rep = run.report;
  out.aborted = rep.aborted;
  out.abort_reason = rep.abort_reason;
  s.set("aborted", out.aborted ? 1.0 : 0.0);
  s.set("point_records", static_cast<double>(rep.points.size()));
  s.set("mean_detected_cf_true_N", rep.mean_detected_cf_true());
  s.set("mean_final_cf_true_N", rep.mean_final_cf_true());
  s.set("mean_backstep_count", rep.mean_backstep_count());
  s.set("max_cf_true_N", rep.max_cf_true);
  for (const auto& p : rep.points) {
    s.points.push_back({{"x_mm", p.x},
                        {"detected_cf_true_N", p.detected_cf_true},
                        {"detected_cf_est_N", p.detected_cf_est},
                        {"t_detect_s", p.t_detect},
                        {"backstep_count", static_cast<double>(p.backstep_count)},
                        {"final_cf_true_N", p.final_cf_true},
                        {"final_cf_est_N", p.final_cf_est},
                        {"quality", p.quality},
                        {"traverse_quality_mean", p.traverse_quality_mean},
                        {"traverse_quality_max", p.traverse_quality_max},
                        {"samples", static_cast<double>(p.samples)}});
  }
  out.trace = std::move(run.trace);
  return out;
}

// ---------------------------------------------------------------------------
// Quality sweep: step into the tissue and find the force that images best.

inline ExperimentResult run_force_sweep(const ExperimentConfig& cfg) {
  ExperimentResult out;
  Summary& s = out.summary;
  Plant plant(cfg.plant);
  const ControllerConfig& cc = cfg.controller;
  const double x = cc.scan_points.empty() ? 0.0 : cc.scan_points.front();
  TubePose target{x, cc.approach_start_z, 0.0};
  PlantState state = plant.initial_state(target);
  FeaturePipeline features(cfg.detector);
  const double end_z = cfg.plant.tissue.surface_z + cfg.run.sweep_depth_mm;
  const int n_steps =
      static_cast<int>(std::ceil((end_z - target.z) / cfg.run.sweep_step_mm - 1e-9));

  std::vector<std::pair<double, double>> curve;  // (cf_true, quality) per settled step
  for (int n = 1; n <= n_steps; ++n) {
    target.z = cc.approach_start_z + n * cfg.run.sweep_step_mm;
    const CableLengths cmd = plant.command_for_pose(target);
    double cf = 0.0, q = 0.0;
    for (int i = 0; i < cc.settle_samples; ++i) {
      StepResult sr = plant.step(state, cmd, cfg.plant.dt);
      state = std::move(sr.state);
      cf = sr.frame.ground_truth_CF;
      q = image_quality(cf, cfg.quality);
      TraceRecord r = make_trace_record(sr.frame, 0.0, Phase::Idle, q,
                                        features.push(sr.frame.t, sr.frame.T_meas));
      r.phase = "Sweep";
      out.trace.push_back(std::move(r));
    }
    curve.emplace_back(cf, q);
    s.points.push_back({{"step", static_cast<double>(n)}, {"cf_true_N", cf}, {"quality", q}});
  }

  std::size_t best = curve.size();
  int maxima = 0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i].first <= 0.0) continue;
    if (best == curve.size() || curve[i].second > curve[best].second) best = i;
    const double prev = i > 0 ? curve[i - 1].second : -1.0;
    const double next = i + 1 < curve.size() ? curve[i + 1].second : -1.0;
    if (curve[i].second > prev && curve[i].second >= next) ++maxima;
  }
  if (best == curve.size()) {
    throw InsufficientDataError("quality sweep ended before contact; no optimum");
  }
  if (maxima > 1) {
    std::ostringstream w;
    w << "quality curve has " << maxima << " local maxima";
    s.warnings.push_back(w.str());
  }
  s.set("optimum_cf_N", curve[best].first);
  s.set("optimum_quality", curve[best].second);
  s.set("local_maxima", maxima);
  s.set("steps", static_cast<double>(curve.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Calibration: thresholds for both detector modes and the back-step count.

struct CalibrationResult {
  DetectorConfig first_derivative;
  DetectorConfig second_derivative;
  int backstep_count = 0;
};

inline CalibrationResult calibrate_all(const ExperimentConfig& cfg) {
  ExperimentConfig one = cfg;
  one.controller.scan_points = {cfg.controller.scan_points.empty()
                                    ? 0.0
                                    : cfg.controller.scan_points.front()};
  ExperimentConfig single = one;
  single.controller.scan_points = {0.0};
  CalibrationResult r;
  r.first_derivative = prepared_detector(single, DetectorMode::FirstDerivative);
  r.second_derivative = prepared_detector(cfg, DetectorMode::SecondDerivative);
  r.backstep_count = calibrate_backstep_count(single);
  return r;
}

inline ExperimentResult run_calibration(const ExperimentConfig& cfg) {
  ExperimentResult out;
  const CalibrationResult r = calibrate_all(cfg);
  Summary& s = out.summary;
  s.set("dT_th", r.first_derivative.thresholds.dT);
  s.set("P_th", r.second_derivative.thresholds.P);
  s.set("Q_th", r.second_derivative.thresholds.Q);
  s.set("R_th", r.second_derivative.thresholds.R);
  s.set("q_epsilon", r.second_derivative.q_epsilon);
  s.set("backstep_count", r.backstep_count);
  s.set("calibration_seeds", cfg.run.calibration_seeds);
  s.set("k", cfg.run.calibration_k);
  return out;
}

/// Config fragment carrying calibrated values, for reuse with --config.
inline std::string calibration_fragment(const Summary& s) {
  std::ostringstream o;
  o.precision(17);
  o << "[detector]\n"
    << "dT_th = " << s.get("dT_th") << "\n"
    << "P_th = " << s.get("P_th") << "\n"
    << "Q_th = " << s.get("Q_th") << "\n"
    << "R_th = " << s.get("R_th") << "\n"
    << "q_epsilon = " << s.get("q_epsilon") << "\n\n"
    << "[controller]\n"
    << "backstep_mode = \"fixed-count\"\n"
    << "backstep_count = " << static_cast<int>(s.get("backstep_count")) << "\n";
  return o.str();
}

}  // namespace cdpm
