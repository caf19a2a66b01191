#include <random>

#include <Eigen/QR>
#include <gtest/gtest.h>

#include "cdpm/calibration.hpp"
#include "cdpm/detection.hpp"

using namespace cdpm;

namespace {

// Independent oracle: fit y = a + b t by a dense least-squares solve.
double ols_oracle(std::span<const double> y, double dt) {
  const int n = static_cast<int>(y.size());
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = i * dt;
    b[i] = y[i];
  }
  return A.colPivHouseholderQr().solve(b)[1];
}

}  // namespace

TEST(Kernels, SlopeExactOnLinearSignals) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = u(rng), b = u(rng);
    std::vector<double> y;
    for (int k = 0; k < 40; ++k) y.push_back(a + b * k * 0.01);
    const auto g = ls_gradient(y, 10, 0.01);
    for (std::size_t k = 9; k < y.size(); ++k) ASSERT_NEAR(g[k], b, 1e-12);
  }
}

TEST(Kernels, SlopeMatchesDenseOlsOracle) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> y(12);
    for (double& v : y) v = n(rng);
    ASSERT_NEAR(ols_slope(y, 0.01), ols_oracle(y, 0.01), 1e-9);
  }
}

TEST(Kernels, SecondDerivativeExactOnQuadratics) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng);
    std::vector<double> y;
    for (int k = 0; k < 60; ++k) {
      const double t = k * 0.01;
      y.push_back(a * t * t + b * t + c);
    }
    const auto d1 = ls_gradient(y, 10, 0.01);
    const auto d2 = second_derivative(d1, 10, 0.01);
    for (std::size_t k = 18; k < y.size(); ++k) ASSERT_NEAR(d2[k], 2 * a, 1e-9);
  }
}

TEST(Kernels, ShortWindowsAreConfigErrors) {
  std::vector<double> y{1, 2, 3};
  EXPECT_THROW(ls_gradient(y, 1, 0.01), ConfigError);
  EXPECT_THROW(moving_average(y, 0), ConfigError);
  EXPECT_EQ(ols_slope(std::span<const double>(y).first(1), 0.01), 0.0);
}

TEST(Features, PQRDefinitions) {
  const Vec4 dT(1.0, 2.0, 0.5, 0.25);
  EXPECT_DOUBLE_EQ(compute_P(dT), 3.0 - 0.75);
  const Vec4 q = compute_Q(dT, Vec4(0.5, -1.0, 1e-9, 2.0), 0.1);
  EXPECT_DOUBLE_EQ(q[0], 2.0);
  EXPECT_DOUBLE_EQ(q[1], 20.0);  // negative reference is clamped to epsilon
  EXPECT_DOUBLE_EQ(q[2], 5.0);
  EXPECT_DOUBLE_EQ(q[3], 0.125);
  EXPECT_EQ(compute_R(Vec4::Constant(3), Vec4::Constant(1)), Vec4::Constant(2));
}

TEST(Features, PipelineIsCausalAndWarmsUp) {
  DetectorConfig cfg;
  FeaturePipeline a(cfg), b(cfg);
  std::vector<DetectionFeatures> fa;
  for (int k = 0; k < 100; ++k) fa.push_back(a.push(k * 0.01, Vec4::Constant(2.0 + 0.01 * k)));
  // Same prefix, different future: earlier features are unchanged.
  for (int k = 0; k < 60; ++k) {
    const DetectionFeatures f = b.push(k * 0.01, Vec4::Constant(2.0 + 0.01 * k));
    ASSERT_EQ(f.dT, fa[k].dT);
    ASSERT_EQ(f.warm, k + 1 >= cfg.warmup_samples());
  }
  EXPECT_NEAR(fa.back().dT[0], 1.0, 1e-9);  // 0.01 N per 0.01 s
}

namespace {

DetectorConfig first_derivative(double th) {
  DetectorConfig cfg;
  cfg.thresholds.dT = th;
  cfg.persistence = 3;
  return cfg;
}

std::vector<DetectionFeatures> ramp_stream(const DetectorConfig& cfg, double slope_after) {
  FeaturePipeline pipe(cfg);
  std::vector<DetectionFeatures> out;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 0.002);
  for (int k = 0; k < 400; ++k) {
    const double t = k * 0.01;
    const double extra = k > 200 ? slope_after * (t - 2.0) : 0.0;
    Vec4 T(2.0 + extra, 2.0 + extra, 2.0 - 0.3 * extra, 2.0 - 0.3 * extra);
    for (int i = 0; i < 4; ++i) T[i] += n(rng);
    out.push_back(pipe.push(t, T));
  }
  return out;
}

}  // namespace

TEST(Detector, FiresOnRampAfterPersistence) {
  const DetectorConfig cfg = first_derivative(1.0);
  const auto stream = ramp_stream(cfg, 1.0);
  const auto ev = detect_contact_1dof(stream, cfg);
  ASSERT_TRUE(ev.has_value());
  EXPECT_GT(ev->t_detect, 2.0);
  EXPECT_EQ(ev->trigger, "dT");
}

TEST(Detector, SilentWithoutRamp) {
  const DetectorConfig cfg = first_derivative(1.0);
  EXPECT_FALSE(detect_contact_1dof(ramp_stream(cfg, 0.0), cfg).has_value());
}

TEST(Detector, HigherThresholdNeverFiresEarlier) {
  double last = 0.0;
  for (double th : {0.2, 0.5, 1.0, 1.5, 1.9}) {
    const DetectorConfig cfg = first_derivative(th);
    const auto ev = detect_contact_1dof(ramp_stream(cfg, 1.0), cfg);
    ASSERT_TRUE(ev.has_value()) << th;
    EXPECT_GE(ev->t_detect, last);
    last = ev->t_detect;
  }
  const DetectorConfig high = first_derivative(2.5);
  EXPECT_FALSE(detect_contact_1dof(ramp_stream(high, 1.0), high).has_value());
}

TEST(Detector, PersistenceRequiresConsecutiveSamples) {
  DetectorConfig cfg = first_derivative(1.0);
  cfg.persistence = 2;
  ContactDetector det(cfg);
  det.arm();
  DetectionFeatures hi, lo;
  hi.warm = lo.warm = true;
  hi.dT = Vec4(1.0, 1.0, 0, 0);
  EXPECT_FALSE(det.update(hi, Vec4::Zero()));
  EXPECT_FALSE(det.update(lo, Vec4::Zero()));
  EXPECT_FALSE(det.update(hi, Vec4::Zero()));
  EXPECT_TRUE(det.update(hi, Vec4::Zero()));
  // One event per arming.
  EXPECT_FALSE(det.update(hi, Vec4::Zero()));
  EXPECT_FALSE(det.armed());
}

TEST(Detector, DisarmedOrColdNeverFires) {
  ContactDetector det(first_derivative(0.1));
  DetectionFeatures hi;
  hi.dT = Vec4::Constant(10.0);
  hi.warm = true;
  for (int k = 0; k < 10; ++k) EXPECT_FALSE(det.update(hi, Vec4::Zero()));
  det.arm();
  hi.warm = false;
  for (int k = 0; k < 10; ++k) EXPECT_FALSE(det.update(hi, Vec4::Zero()));
}

TEST(Detector, SecondDerivativeGroupRules) {
  DetectorConfig cfg;
  cfg.mode = DetectorMode::SecondDerivative;
  cfg.thresholds = {1.0, 2.0, 3.0, 1.0};
  DetectionFeatures f;
  f.P = 1.5;
  f.Q = Vec4(2.5, 1.0, 9, 9);
  f.R = Vec4(4.0, 4.0, 0, 0);
  EXPECT_FALSE(exceeds_thresholds(f, cfg));  // tendon 2 fails Q
  cfg.group_rule = GroupRule::Any;
  EXPECT_TRUE(exceeds_thresholds(f, cfg));
  f.P = 0.5;
  EXPECT_FALSE(exceeds_thresholds(f, cfg));  // P gates both rules
}

TEST(Detector, InvalidConfigRejected) {
  DetectorConfig cfg;  // thresholds default to +inf: fine
  cfg.thresholds.dT = 0.0;
  EXPECT_THROW(ContactDetector{cfg}, ConfigError);
  cfg = {};
  cfg.loaded_group = {7};
  EXPECT_THROW(ContactDetector{cfg}, ConfigError);
}

TEST(Calibration, ThresholdsGrowWithK) {
  PlantConfig pc;
  ControllerConfig cc;
  DetectorConfig det;
  const std::vector<std::uint64_t> seeds{1, 2};
  CalibrationOptions a, b;
  a.approach_steps = b.approach_steps = 20;
  a.k = 1.2;
  b.k = 2.0;
  const DetectorConfig da = calibrate_thresholds(pc, det, cc, seeds, a);
  const DetectorConfig db = calibrate_thresholds(pc, det, cc, seeds, b);
  EXPECT_LT(da.thresholds.dT, db.thresholds.dT);
  EXPECT_NEAR(db.thresholds.dT / da.thresholds.dT, 2.0 / 1.2, 1e-12);
  EXPECT_LE(da.thresholds.P, db.thresholds.P);
  EXPECT_LE(da.thresholds.R, db.thresholds.R);
}

TEST(Calibration, CalibratedDetectorIsSilentOnItsOwnRuns) {
  PlantConfig pc;
  ControllerConfig cc;
  DetectorConfig det;
  const std::vector<std::uint64_t> seeds{4, 5, 6};
  CalibrationOptions opt;
  opt.approach_steps = 30;
  const DetectorConfig cal = calibrate_thresholds(pc, det, cc, seeds, opt);
  for (auto seed : seeds) {
    PlantConfig run = pc;
    run.sensor.seed = seed;
    const NoContactStatistics st = no_contact_statistics(run, cal, cc, opt);
    EXPECT_LT(st.dT, cal.thresholds.dT);
  }
}

TEST(Calibration, RejectsBadInputs) {
  PlantConfig pc;
  std::vector<std::uint64_t> none;
  EXPECT_THROW(calibrate_thresholds(pc, {}, {}, none), CalibrationError);
  CalibrationOptions opt;
  opt.k = 0.5;
  std::vector<std::uint64_t> one{1};
  EXPECT_THROW(calibrate_thresholds(pc, {}, {}, one, opt), CalibrationError);
}

TEST(Calibration, QuantileOfSortedRange) {
  std::vector<double> v;
  for (int i = 0; i <= 100; ++i) v.push_back(100 - i);
  EXPECT_EQ(quantile(v, 0.5), 50.0);
  EXPECT_EQ(quantile(v, 1.0), 100.0);
  EXPECT_EQ(quantile({}, 0.5), 0.0);
}
