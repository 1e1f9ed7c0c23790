#include "motodom/simworld.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace motodom;

namespace {

Scenario noise_free(Scenario s) {
  s.noise.odometry_sigma_t = s.noise.odometry_sigma_r = 0.0;
  s.noise.detection_sigma_t = s.noise.detection_sigma_yaw = 0.0;
  s.noise.dropout = 0.0;
  s.noise.false_positive_rate = 0.0;
  s.noise.imu.gyro_density = s.noise.imu.accel_density = 0.0;
  s.noise.gyro_bias = s.noise.accel_bias = Vec3::Zero();
  return s;
}

bool same_pose(const Pose& a, const Pose& b) {
  return a.rotation == b.rotation && a.translation == b.translation;
}

}  // namespace

TEST(Generate, DeterministicPerSeed) {
  Scenario s = fixture("s1");
  s.duration = 3.0;
  const auto a = generate(s);
  const auto b = generate(s);
  ASSERT_EQ(a.size(), b.size());
  for (size_t k = 0; k < a.size(); ++k) {
    EXPECT_TRUE(same_pose(a[k].odometry, b[k].odometry));
    ASSERT_EQ(a[k].detections.size(), b[k].detections.size());
    for (size_t i = 0; i < a[k].detections.size(); ++i)
      EXPECT_TRUE(same_pose(a[k].detections[i].pose_sensor, b[k].detections[i].pose_sensor));
    ASSERT_EQ(a[k].imu.size(), b[k].imu.size());
    for (size_t i = 0; i < a[k].imu.size(); ++i) {
      EXPECT_EQ(a[k].imu[i].gyro, b[k].imu[i].gyro);
      EXPECT_EQ(a[k].imu[i].accel, b[k].imu[i].accel);
    }
    EXPECT_EQ(a[k].cloud.points, b[k].cloud.points);
  }
  s.seed = 2;
  const auto c = generate(s);
  EXPECT_FALSE(same_pose(a[5].odometry, c[5].odometry));
}

TEST(Generate, FrameCountAndTimestamps) {
  const Scenario s = fixture("s1");
  const auto f = generate(s);
  EXPECT_EQ(static_cast<int>(f.size()), 151);
  EXPECT_DOUBLE_EQ(f[10].timestamp, 1.0);
  EXPECT_TRUE(f[0].imu.empty());
  EXPECT_EQ(f[1].imu.size(), 10u);
}

TEST(Generate, NoiseFreeOdometryIsExact) {
  Scenario s = noise_free(fixture("s3"));
  const auto f = generate(s);
  for (size_t k = 1; k < f.size(); ++k) {
    const Pose rel = f[k - 1].ego.pose.inverse() * f[k].ego.pose;
    EXPECT_LT((f[k].odometry.translation - rel.translation).norm(), 1e-12);
    EXPECT_LT((f[k].odometry.rotation - rel.rotation).norm(), 1e-12);
  }
}

TEST(Imu, StationaryEgoFeelsGravityOnly) {
  Scenario s;
  s.duration = 1.0;
  const auto samples = ideal_imu(s, 0.0, 1.0);
  ASSERT_EQ(samples.size(), 100u);
  for (const ImuSample& m : samples) {
    EXPECT_LT(m.gyro.norm(), 1e-15);
    EXPECT_LT((m.accel - Vec3(0, 0, 9.81)).norm(), 1e-12);
  }
}

TEST(Imu, ConstantCurvatureArc) {
  Scenario s;
  s.duration = 10.0;
  s.ego.speed = 12.0;
  s.ego.segments = {{10.0, 0.02}};
  const double v = 12.0, kappa = 0.02;
  for (const ImuSample& m : ideal_imu(s, 1.0, 9.0)) {
    EXPECT_NEAR(m.gyro.z(), v * kappa, 1e-9);
    EXPECT_NEAR(m.accel.y(), v * v * kappa, 1e-9);
    EXPECT_NEAR(m.accel.x(), 0.0, 1e-9);
    EXPECT_NEAR(m.accel.z(), 9.81, 1e-9);
  }
}

TEST(Imu, PreintegrationReproducesTrueMotion) {
  for (const std::string& name : fixture_names()) {
    const Scenario s = fixture(name);
    const auto f = generate(s);
    for (size_t k = 1; k < f.size(); ++k) {
      const auto samples = ideal_imu(s, f[k - 1].timestamp, f[k].timestamp);
      const Preintegrated p = preintegrate_mean(samples, Vec3::Zero(), Vec3::Zero());
      EgoState a = f[k - 1].ego;
      a.gyro_bias = a.accel_bias = Vec3::Zero();
      const EgoState b = propagate(a, p);
      EXPECT_LT((b.pose.translation - f[k].ego.pose.translation).norm(), 1e-5) << name << " " << k;
      EXPECT_LT(so3_log(b.pose.rotation.transpose() * f[k].ego.pose.rotation).norm(), 1e-6);
    }
  }
}

TEST(Detections, NoiseMatchesConfiguredSigma) {
  Scenario s = fixture("s2");
  s.noise.false_positive_rate = 0.0;
  s.noise.dropout = 0.0;
  double sum_t = 0.0, sum_yaw = 0.0;
  long n = 0;
  for (std::uint64_t seed = 1; n < 20000; ++seed) {
    s.seed = seed;
    for (const FrameBundle& b : generate(s)) {
      for (const Detection& d : b.detections) {
        const ObjectTruth* o = b.truth(d.truth_id);
        const Pose exact = b.ego.pose.inverse() * o->pose;
        const Vec3 e = d.pose_sensor.translation - exact.translation;
        sum_t += e.squaredNorm();
        sum_yaw += std::pow(yaw_of(d.pose_sensor.rotation * exact.rotation.transpose()), 2);
        ++n;
      }
    }
  }
  const double sigma_t = std::sqrt(sum_t / (3.0 * n));
  const double sigma_yaw = std::sqrt(sum_yaw / n);
  EXPECT_NEAR(sigma_t, s.noise.detection_sigma_t, 0.1 * s.noise.detection_sigma_t);
  EXPECT_NEAR(sigma_yaw, s.noise.detection_sigma_yaw, 0.1 * s.noise.detection_sigma_yaw);
}

TEST(Detections, DropoutAndClutterRates) {
  Scenario s = fixture("s1");
  s.noise.dropout = 0.3;
  s.noise.false_positive_rate = 0.5;
  long visible = 0, true_pos = 0, clutter = 0, frames = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    s.seed = seed;
    for (const FrameBundle& b : generate(s)) {
      ++frames;
      for (const ObjectTruth& o : b.objects) visible += o.visible;
      for (const Detection& d : b.detections) (d.truth_id >= 0 ? true_pos : clutter) += 1;
    }
  }
  EXPECT_NEAR(static_cast<double>(true_pos) / visible, 0.7, 0.03);
  EXPECT_NEAR(static_cast<double>(clutter) / frames, 0.5, 0.05);
}

TEST(Cloud, LabelsMatchSources) {
  const Scenario s = fixture("s1");
  const auto f = generate(s);
  const FrameBundle& b = f[20];
  ASSERT_TRUE(b.cloud.labeled());
  ASSERT_EQ(b.cloud.labels.size(), b.cloud.points.size());
  for (size_t i = 0; i < b.cloud.size(); ++i) {
    const int l = b.cloud.labels[i];
    if (l == kBackgroundLabel) continue;
    const ObjectTruth* o = b.truth(l);
    ASSERT_NE(o, nullptr);
    const Pose rel = b.ego.pose.inverse() * o->pose;
    const OrientedBox box{rel.translation, o->dims, rel.rotation, 1e-6};
    EXPECT_TRUE(point_in_box(b.cloud.points[i], box));
  }
}

TEST(GhostMetric, ConservationAndPerfectFiltering) {
  const Scenario s = fixture("s1");
  const auto f = generate(s);
  std::vector<PointCloud> raw, clean;
  size_t total = 0, moving = 0;
  for (const FrameBundle& b : f) {
    raw.push_back(b.cloud);
    PointCloud c;
    for (size_t i = 0; i < b.cloud.size(); ++i) {
      const int l = b.cloud.labels[i];
      const ObjectSpec* o = s.object(l);
      ++total;
      if (o != nullptr && o->moving()) {
        ++moving;
        continue;
      }
      c.push_back(b.cloud.points[i], l);
    }
    clean.push_back(c);
  }
  ASSERT_GT(moving, 0u);
  EXPECT_DOUBLE_EQ(ghost_metric(raw, s), static_cast<double>(moving) / total);
  EXPECT_EQ(ghost_metric(clean, s), 0.0);
}

TEST(Scenario, ValidationListsProblems) {
  Scenario s;
  s.frame_rate = 7.0;
  s.noise.dropout = 1.5;
  ObjectSpec o;
  o.id = 3;
  o.dims = Vec3(0, 1, 1);
  s.objects = {o, o};
  try {
    s.validate();
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("divide"), std::string::npos);
    EXPECT_NE(what.find("dropout"), std::string::npos);
    EXPECT_NE(what.find("duplicate"), std::string::npos);
    EXPECT_NE(what.find("dims"), std::string::npos);
  }
  EXPECT_THROW(fixture("nope"), std::invalid_argument);
  for (const std::string& name : fixture_names()) EXPECT_NO_THROW(fixture(name).validate());
}

TEST(ScanMatch, ExactWithoutNoiseOrMovingPoints) {
  Scenario s = noise_free(fixture("s1"));
  const auto f = generate(s);
  PointCloud background;
  for (size_t i = 0; i < f[10].cloud.size(); ++i)
    if (f[10].cloud.labels[i] == kBackgroundLabel)
      background.push_back(f[10].cloud.points[i], kBackgroundLabel);
  const Pose m = scan_match(s, f[9], f[10], background);
  const Pose rel = f[9].ego.pose.inverse() * f[10].ego.pose;
  EXPECT_LT((m.translation - rel.translation).norm(), 1e-12);
}
