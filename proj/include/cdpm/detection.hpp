#pragma once

// Streaming contact detection over the four tension channels:
// trailing moving average -> least-squares slope -> slope of the slope,
// and the pair-difference (P), slope-ratio (Q) and curvature-change (R)
// features used by the two detector modes.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdpm/errors.hpp"
#include "cdpm/geometry.hpp"

namespace cdpm {

enum class DetectorMode { FirstDerivative, SecondDerivative };

/// How the per-tendon Q and R tests combine over the loaded group.
enum class GroupRule { All, Any };

struct Thresholds {
  double P = std::numeric_limits<double>::infinity();   ///< N/s
  double Q = std::numeric_limits<double>::infinity();   ///< ratio
  double R = std::numeric_limits<double>::infinity();   ///< N/s^2
  double dT = std::numeric_limits<double>::infinity();  ///< N/s, loaded-group slope sum
};

struct DetectorConfig {
  int ma_window = 10;
  int grad_window = 10;
  int lag_t0 = 20;  ///< samples back to the slope reference for Q
  int lag_t1 = 20;  ///< samples back to the curvature reference for R
  Thresholds thresholds;
  DetectorMode mode = DetectorMode::FirstDerivative;
  int persistence = 3;
  double q_epsilon = 1e-6;  ///< N/s, floor on |Q denominator|
  std::vector<int> loaded_group{0, 1};
  GroupRule group_rule = GroupRule::All;
  double dt = 0.01;

  /// Samples before features are trusted: the pipeline plus both lags.
  int warmup_samples() const { return ma_window + 2 * grad_window + std::max(lag_t0, lag_t1); }

  void validate() const {
    if (ma_window < 2 || grad_window < 2) throw ConfigError("detector windows must be >= 2");
    if (lag_t0 < 1 || lag_t1 < 1) throw ConfigError("detector lags must be >= 1");
    if (persistence < 1) throw ConfigError("detector persistence must be >= 1");
    if (!(q_epsilon > 0.0)) throw ConfigError("Q epsilon must be > 0");
    if (!(dt > 0.0)) throw ConfigError("detector dt must be > 0");
    const double th[] = {thresholds.P, thresholds.Q, thresholds.R, thresholds.dT};
    for (double t : th) {
      if (!(t > 0.0)) throw ConfigError("detector thresholds must be > 0");
    }
    if (loaded_group.empty()) throw ConfigError("loaded group must name at least one tendon");
    for (int i : loaded_group) {
      if (i < 0 || i >= kTendons) throw ConfigError("loaded group tendon index out of range");
    }
  }
};

// ---------------------------------------------------------------------------
// Kernels

/// Trailing mean of the last `window` values (fewer at the start of a stream).
inline double trailing_mean(std::span<const double> tail) {
  double s = 0.0;
  for (double v : tail) s += v;
  return tail.empty() ? 0.0 : s / static_cast<double>(tail.size());
}

/// Ordinary least-squares slope of uniformly spaced samples, per second.
/// Fewer than two samples give zero.
inline double ols_slope(std::span<const double> y, double dt) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  const double mid = (static_cast<double>(n) - 1.0) / 2.0;
  const double ybar = trailing_mean(y);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = static_cast<double>(i) - mid;
    num += c * (y[i] - ybar);
    den += c * c;
  }
  return num / den / dt;
}

namespace detail {

template <typename Kernel>
std::vector<double> trailing_apply(std::span<const double> stream, int window, Kernel k) {
  std::vector<double> out(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const std::size_t begin = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - window : 0;
    out[i] = k(stream.subspan(begin, i + 1 - begin));
  }
  return out;
}

}  // namespace detail

inline std::vector<double> moving_average(std::span<const double> stream, int window) {
  if (window < 1) throw ConfigError("moving-average window must be >= 1");
  return detail::trailing_apply(stream, window, [](auto tail) { return trailing_mean(tail); });
}

inline std::vector<double> ls_gradient(std::span<const double> stream, int window, double dt) {
  if (window < 2) throw ConfigError("gradient window must be >= 2");
  return detail::trailing_apply(stream, window, [dt](auto tail) { return ols_slope(tail, dt); });
}

/// Least-squares slope of a first-derivative stream.
inline std::vector<double> second_derivative(std::span<const double> first_derivative, int window,
                                             double dt) {
  return ls_gradient(first_derivative, window, dt);
}

// ---------------------------------------------------------------------------
// Features

inline double compute_P(const Vec4& dT) { return (dT[0] + dT[1]) - (dT[2] + dT[3]); }

inline Vec4 compute_Q(const Vec4& dT_now, const Vec4& dT_ref, double epsilon) {
  Vec4 q;
  for (int i = 0; i < kTendons; ++i) q[i] = dT_now[i] / std::max(dT_ref[i], epsilon);
  return q;
}

inline Vec4 compute_R(const Vec4& d2T_now, const Vec4& d2T_ref) { return d2T_now - d2T_ref; }

struct DetectionFeatures {
  double t = 0.0;
  Vec4 T_smooth = Vec4::Zero();
  Vec4 dT = Vec4::Zero();
  Vec4 dT_ref = Vec4::Zero();  ///< slope lag_t0 samples back
  Vec4 d2T = Vec4::Zero();
  double P = 0.0;
  Vec4 Q = Vec4::Zero();
  Vec4 R = Vec4::Zero();
  bool warm = false;  ///< all windows and lags are filled
};

/// Causal per-sample feature extraction. Each emitted sample depends only on
/// the samples pushed so far.
class FeaturePipeline {
 public:
  explicit FeaturePipeline(const DetectorConfig& cfg) : cfg_(cfg) {
    if (cfg_.ma_window < 1 || cfg_.grad_window < 2 || cfg_.lag_t0 < 1 || cfg_.lag_t1 < 1) {
      throw ConfigError("invalid detector windows or lags");
    }
  }

  DetectionFeatures push(double t, const Vec4& tensions) {
    DetectionFeatures f;
    f.t = t;
    for (int i = 0; i < kTendons; ++i) {
      Channel& ch = channels_[i];
      push_bounded(ch.raw, tensions[i], cfg_.ma_window);
      f.T_smooth[i] = trailing_mean(as_span(ch.raw));
      push_bounded(ch.smooth, f.T_smooth[i], cfg_.grad_window);
      f.dT[i] = ols_slope(as_span(ch.smooth), cfg_.dt);
      push_bounded(ch.slope, f.dT[i], cfg_.grad_window);
      f.d2T[i] = ols_slope(as_span(ch.slope), cfg_.dt);
      push_bounded(ch.slope_hist, f.dT[i], cfg_.lag_t0 + 1);
      push_bounded(ch.curv_hist, f.d2T[i], cfg_.lag_t1 + 1);
    }
    Vec4 dT_ref;
    Vec4 d2T_ref;
    for (int i = 0; i < kTendons; ++i) {
      dT_ref[i] = channels_[i].slope_hist.front();
      d2T_ref[i] = channels_[i].curv_hist.front();
    }
    f.dT_ref = dT_ref;
    f.P = compute_P(f.dT);
    f.Q = compute_Q(f.dT, dT_ref, cfg_.q_epsilon);
    f.R = compute_R(f.d2T, d2T_ref);
    ++count_;
    f.warm = count_ >= cfg_.warmup_samples();
    return f;
  }

  long samples() const { return count_; }

 private:
  struct Channel {
    std::deque<double> raw, smooth, slope, slope_hist, curv_hist;
  };

  static void push_bounded(std::deque<double>& q, double v, int cap) {
    q.push_back(v);
    while (static_cast<int>(q.size()) > cap) q.pop_front();
  }

  // The deques are small; copy into a contiguous scratch buffer for the kernels.
  std::span<const double> as_span(const std::deque<double>& q) {
    scratch_.assign(q.begin(), q.end());
    return scratch_;
  }

  DetectorConfig cfg_;
  std::array<Channel, kTendons> channels_{};
  std::vector<double> scratch_;
  long count_ = 0;
};

struct DetectionEvent {
  double t_detect = 0.0;
  std::string trigger;
  double cf_at_detect = 0.0;  ///< estimated, N
  Vec4 tendon_snapshot = Vec4::Zero();
};

/// Statistic tested by the first-derivative detector: summed slope of the
/// loaded group.
inline double group_slope(const DetectionFeatures& f, const std::vector<int>& group) {
  double s = 0.0;
  for (int i : group) s += f.dT[i];
  return s;
}

inline double group_min(const Vec4& v, const std::vector<int>& group) {
  double m = std::numeric_limits<double>::infinity();
  for (int i : group) m = std::min(m, v[i]);
  return m;
}

inline double group_max(const Vec4& v, const std::vector<int>& group) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i : group) m = std::max(m, v[i]);
  return m;
}

/// Per-tendon Q and R tests over the loaded group. With GroupRule::All every
/// loaded tendon must pass both; with Any one tendon passing both is enough.
inline bool group_passes(const Vec4& Q, const Vec4& R, const DetectorConfig& cfg) {
  const bool all = cfg.group_rule == GroupRule::All;
  for (int i : cfg.loaded_group) {
    const bool pass = Q[i] > cfg.thresholds.Q && R[i] > cfg.thresholds.R;
    if (all && !pass) return false;
    if (!all && pass) return true;
  }
  return all;
}

/// Threshold test for a single sample (before persistence).
inline bool exceeds_thresholds(const DetectionFeatures& f, const DetectorConfig& cfg) {
  if (cfg.mode == DetectorMode::FirstDerivative) {
    return group_slope(f, cfg.loaded_group) > cfg.thresholds.dT;
  }
  if (!(std::abs(f.P) > cfg.thresholds.P)) return false;
  return group_passes(f.Q, f.R, cfg);
}

/// Debounced detector. Arm it at the start of an approach; it emits at most one
/// event per arming.
class ContactDetector {
 public:
  explicit ContactDetector(DetectorConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const DetectorConfig& config() const { return cfg_; }

  void arm() {
    armed_ = true;
    run_ = 0;
  }
  void disarm() { armed_ = false; }
  bool armed() const { return armed_; }

  std::optional<DetectionEvent> update(const DetectionFeatures& f, const Vec4& tensions) {
    if (!armed_ || !f.warm) {
      run_ = 0;
      return std::nullopt;
    }
    run_ = exceeds_thresholds(f, cfg_) ? run_ + 1 : 0;
    if (run_ < cfg_.persistence) return std::nullopt;
    armed_ = false;
    DetectionEvent ev;
    ev.t_detect = f.t;
    ev.trigger = cfg_.mode == DetectorMode::FirstDerivative ? "dT" : "P+Q+R";
    ev.tendon_snapshot = tensions;
    return ev;
  }

 private:
  DetectorConfig cfg_;
  bool armed_ = false;
  int run_ = 0;
};

/// Offline replay of a recorded feature stream; returns the first event.
inline std::optional<DetectionEvent> detect_contact(std::span<const DetectionFeatures> stream,
                                                    const DetectorConfig& cfg) {
  ContactDetector det(cfg);
  det.arm();
  for (const auto& f : stream) {
    if (auto ev = det.update(f, f.T_smooth)) return ev;
  }
  return std::nullopt;
}

inline std::optional<DetectionEvent> detect_contact_1dof(std::span<const DetectionFeatures> stream,
                                                         DetectorConfig cfg) {
  cfg.mode = DetectorMode::FirstDerivative;
  return detect_contact(stream, cfg);
}

inline std::optional<DetectionEvent> detect_contact_2dof(std::span<const DetectionFeatures> stream,
                                                         DetectorConfig cfg) {
  cfg.mode = DetectorMode::SecondDerivative;
  return detect_contact(stream, cfg);
}

}  // namespace cdpm
