#include <gtest/gtest.h>

#include "cdpm/imaging.hpp"

using namespace cdpm;

namespace {

double argmax(const QualityModel& qm) {
  double best = 0.0, bq = -1.0;
  for (int k = 1; k <= 10000; ++k) {
    const double f = k * 1e-4;
    if (image_quality(f, qm) > bq) {
      bq = image_quality(f, qm);
      best = f;
    }
  }
  return best;
}

}  // namespace

TEST(Quality, PeaksAtOptimumForce) {
  const QualityModel qm;
  EXPECT_DOUBLE_EQ(image_quality(qm.f_opt, qm), 1.0);
  EXPECT_NEAR(argmax(qm), 0.05, 1e-4);
}

TEST(Quality, SymmetricAndBounded) {
  const QualityModel qm;
  for (double d = 0.0; d < 0.05; d += 0.003) {
    EXPECT_NEAR(image_quality(qm.f_opt + d, qm), image_quality(qm.f_opt - d, qm), 1e-15);
  }
  for (double f = 0.0; f < 2.0; f += 0.01) {
    const double q = image_quality(f, qm);
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 1.0);
  }
}

TEST(Quality, WidthDoesNotMoveThePeak) {
  QualityModel qm;
  const double a = argmax(qm);
  qm.width *= 2.0;
  EXPECT_DOUBLE_EQ(argmax(qm), a);
}

TEST(Quality, MonotoneAwayFromPeak) {
  const QualityModel qm;
  for (double f = 0.06; f < 1.0; f += 0.01) {
    EXPECT_LT(image_quality(f + 0.01, qm), image_quality(f, qm));
  }
}

TEST(Quality, NoContactNoImage) {
  QualityModel qm;
  EXPECT_EQ(image_quality(0.0, qm), 0.0);
  qm.contact_required = false;
  EXPECT_GT(image_quality(0.0, qm), 0.0);
}

TEST(Quality, TracePicksAcquisitionSamples) {
  const QualityModel qm;
  const QualitySample s[] = {{0.0, -1, false}, {0.2, 0, false}, {0.05, 0, true}, {0.3, 1, false},
                             {0.06, 1, true}};
  const QualityTrace t = quality_trace(s, qm);
  ASSERT_EQ(t.per_sample.size(), 5u);
  ASSERT_EQ(t.per_point.size(), 2u);
  EXPECT_DOUBLE_EQ(t.per_point[0], 1.0);
  EXPECT_NEAR(t.per_point[1], image_quality(0.06, qm), 1e-15);
}

TEST(Quality, InvalidModelRejected) {
  QualityModel qm;
  qm.width = 0.0;
  EXPECT_THROW(qm.validate(), ConfigError);
}
