#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cdpm/plant.hpp"

using namespace cdpm;

TEST(Motor, ResolutionFromEncoderGearAndSpool) {
  const MotorModel m;
  const double expected = std::numbers::pi * 10.0 / (3000.0 * 25.0);
  EXPECT_NEAR(m.resolution(), expected, 1e-18);
  EXPECT_NEAR(m.resolution() * 1000.0, 0.41888, 5e-6);
  EXPECT_DOUBLE_EQ(std::round(m.resolution() * 1000.0 * 10.0) / 10.0, 0.4);
}

TEST(Motor, QuantizationErrorWithinHalfACount) {
  const MotorModel m;
  for (double L = 20.0; L < 21.0; L += 0.0137) {
    const double q = quantize_motor(L, m);
    EXPECT_LE(std::abs(q - L), m.resolution() / 2 + 1e-15);
    EXPECT_NEAR(q / m.resolution(), std::round(q / m.resolution()), 1e-6);
  }
}

TEST(Friction, IdealCornerPassesTensionThrough) {
  FrictionModel fm;
  fm.mu = 0.0;
  FrictionMemory mem = FrictionMemory::pretensioned(2.0, fm);
  for (double t : {2.0, 2.5, 1.0, 3.3}) EXPECT_EQ(apply_capstan_friction(t, fm, mem), t);
}

TEST(Friction, SlippingFollowsAttenuatedTension) {
  const FrictionModel fm;
  FrictionMemory mem = FrictionMemory::pretensioned(2.0, fm);
  double s = 0.0;
  for (int k = 1; k <= 200; ++k) s = apply_capstan_friction(2.0 + 0.01 * k, fm, mem);
  EXPECT_NEAR(s, std::exp(-fm.mu * fm.wrap_angle) * 4.0 - fm.kinetic_band, 1e-12);
}

TEST(Friction, SmallReversalSticks) {
  const FrictionModel fm;
  FrictionMemory mem = FrictionMemory::pretensioned(2.0, fm);
  const double held = mem.sensor;
  const double g = fm.attenuation();
  // Departures of the attenuated tension inside the band do not move the sensor.
  EXPECT_EQ(apply_capstan_friction((held + 0.9 * fm.stiction_band) / g, fm, mem), held);
  EXPECT_EQ(apply_capstan_friction((held - 0.9 * fm.stiction_band) / g, fm, mem), held);
  EXPECT_NE(apply_capstan_friction((held + 1.1 * fm.stiction_band) / g, fm, mem), held);
}

TEST(Friction, LoadUnloadCycleLeavesResidual) {
  const FrictionModel fm;
  FrictionMemory mem = FrictionMemory::pretensioned(2.0, fm);
  const double start = mem.sensor;
  for (int k = 1; k <= 100; ++k) apply_capstan_friction(2.0 + 0.01 * k, fm, mem);
  double s = 0.0;
  for (int k = 99; k >= 0; --k) s = apply_capstan_friction(2.0 + 0.01 * k, fm, mem);
  EXPECT_GT(std::abs(s - start), 0.01);
}

TEST(Friction, KineticBandAboveStictionIsRejected) {
  FrictionModel fm;
  fm.kinetic_band = 0.2;
  EXPECT_THROW(fm.validate(), ConfigError);
}

TEST(Tissue, LinearSpringBeyondSurface) {
  TissueModel tm;
  tm.surface_z = 0.3;
  tm.stiffness = 0.5;
  EXPECT_EQ(tissue_reaction(0.2, tm), 0.0);
  EXPECT_NEAR(tissue_reaction(0.7, tm), 0.2, 1e-15);
  tm.present = false;
  EXPECT_EQ(tissue_reaction(0.7, tm), 0.0);
  TissueModel rigid;
  rigid.kind = TissueKind::Rigid;
  EXPECT_THROW(rigid.validate(), ConfigError);
}

namespace {

PlantConfig ideal() {
  PlantConfig c;
  c.friction.mu = 0.0;
  c.sensor.noise_sigma = 0.0;
  return c;
}

}  // namespace

TEST(Plant, InitialStateHoldsPresetTension) {
  const Plant p(ideal());
  const PlantState s = p.initial_state({});
  const Vec4 T = p.tube_tensions(s.pose, s.commanded);
  EXPECT_NEAR((T - Vec4::Constant(2.0)).norm(), 0.0, 1e-2);
  EXPECT_LT(p.net_wrench(s.pose, s.commanded, 0.0).norm(), 1e-9);
}

TEST(Plant, FreeSpaceCommandReachesPose) {
  PlantConfig c = ideal();
  c.tissue.present = false;
  const Plant p(c);
  PlantState s = p.initial_state({});
  const TubePose goal{1.0, 2.0, 0.0};
  const StepResult r = p.step(s, p.command_for_pose(goal), c.dt);
  EXPECT_NEAR(r.frame.pose.x, goal.x, 1e-3);
  EXPECT_NEAR(r.frame.pose.z, goal.z, 1e-3);
  EXPECT_EQ(r.frame.ground_truth_CF, 0.0);
}

TEST(Plant, TissueReactionEqualsSpringForce) {
  PlantConfig c = ideal();
  c.tissue.surface_z = 0.0;
  const Plant p(c);
  PlantState s = p.initial_state({});
  const StepResult r = p.step(s, p.command_for_pose({0.0, 0.4, 0.0}), c.dt);
  EXPECT_GT(r.frame.ground_truth_CF, 0.0);
  EXPECT_NEAR(r.frame.ground_truth_CF, c.tissue.stiffness * r.state.indentation, 1e-15);
  // Pushing into a spring stops short of the free-space goal.
  EXPECT_LT(r.frame.pose.z, 0.4);
}

TEST(Plant, SameSeedSameNoise) {
  PlantConfig c;
  const Plant p(c);
  PlantState a = p.initial_state({}), b = p.initial_state({});
  for (int k = 0; k < 50; ++k) {
    StepResult ra = p.step(a, a.commanded, c.dt), rb = p.step(b, b.commanded, c.dt);
    ASSERT_EQ(ra.frame.T_meas, rb.frame.T_meas);
    a = ra.state;
    b = rb.state;
  }
}

TEST(Plant, NoiseHasConfiguredSpread) {
  PlantConfig c;
  c.friction.mu = 0.0;
  c.tissue.present = false;
  const Plant p(c);
  PlantState s = p.initial_state({});
  double sum = 0, sum2 = 0;
  const int n = 4000;
  for (int k = 0; k < n; ++k) {
    StepResult r = p.step(s, s.commanded, c.dt);
    const double lc = r.frame.loadcell_F[0] - loadcell_from_tension(r.frame.T_true[0]);
    sum += lc;
    sum2 += lc * lc;
    s = r.state;
  }
  const double sd = std::sqrt(sum2 / n - (sum / n) * (sum / n));
  EXPECT_NEAR(sd, c.sensor.noise_sigma, 0.1 * c.sensor.noise_sigma);
}

TEST(Plant, NonPositiveCommandIsRejected) {
  const Plant p(ideal());
  PlantState s = p.initial_state({});
  EXPECT_THROW(p.step(s, {Vec4(-1, 1, 1, 1)}, 0.01), ConfigError);
}

TEST(Stage, TrapezoidProfile) {
  const StageProfile prof;
  EXPECT_EQ(linear_stage_profile(0.0, prof), 0.0);
  EXPECT_NEAR(linear_stage_profile(1.0, prof), 1.0, 1e-15);
  EXPECT_NEAR(linear_stage_profile(3.0, prof), 2.0, 1e-15);
  EXPECT_NEAR(linear_stage_profile(5.0, prof), 1.0, 1e-12);
  EXPECT_EQ(linear_stage_profile(7.0, prof), 0.0);
  EXPECT_EQ(linear_stage_profile(prof.duration_s() + 1.0, prof), 0.0);
  EXPECT_NEAR(prof.duration_s(), 80.0, 1e-12);
}
