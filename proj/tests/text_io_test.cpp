#include "motodom/text_io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace motodom;
using namespace motodom::testing;

TEST(TrajectoryText, RoundTrip) {
  Rng rng(71);
  Trajectory t;
  for (int i = 0; i < 50; ++i) t.push_back({0.1 * i, random_pose(rng, 100.0, 3.0)});
  std::stringstream ss;
  write_trajectory(ss, t);
  const Trajectory back = read_trajectory(ss);
  ASSERT_EQ(back.size(), t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(back[i].t, t[i].t, 1e-9);
    EXPECT_LT((back[i].pose.translation - t[i].pose.translation).norm(), 1e-8);
    EXPECT_LT((back[i].pose.rotation - t[i].pose.rotation).norm(), 1e-8);
  }
  // A second pass stays within print precision.
  std::stringstream again;
  write_trajectory(again, back);
  const Trajectory twice = read_trajectory(again);
  for (size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(twice[i].t, back[i].t);
    EXPECT_LT((twice[i].pose.rotation - back[i].pose.rotation).norm(), 1e-8);
    EXPECT_LT((twice[i].pose.translation - back[i].pose.translation).norm(), 1e-8);
  }
}

TEST(TrajectoryText, SkipsCommentsAndReportsBadLines) {
  std::istringstream ok("# header\n\n0.0 1 2 3 1 0 0 0\n");
  EXPECT_EQ(read_trajectory(ok).size(), 1u);
  std::istringstream short_line("0.0 1 2 3 1 0 0 0\n0.1 1 2\n");
  try {
    read_trajectory(short_line);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream backwards("1.0 0 0 0 1 0 0 0\n0.5 0 0 0 1 0 0 0\n");
  EXPECT_THROW(read_trajectory(backwards), std::runtime_error);
  std::istringstream zero_quat("0.0 0 0 0 0 0 0 0\n");
  EXPECT_THROW(read_trajectory(zero_quat), std::runtime_error);
}

TEST(DetectionText, RoundTrip) {
  Detection d;
  d.pose_sensor = rot_z(0.4, Vec3(10, -2, 0.7));
  d.dims = Vec3(4.5, 1.8, 1.5);
  d.label = ObjectClass::Cyclist;
  d.score = 0.75;
  d.timestamp = 1.5;
  d.truth_id = 4;
  std::stringstream ss;
  write_detections(ss, {d, d});
  const auto back = read_detections(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].label, ObjectClass::Cyclist);
  EXPECT_EQ(back[0].truth_id, 4);
  EXPECT_NEAR(back[0].score, 0.75, 1e-12);
  EXPECT_LT((back[0].dims - d.dims).norm(), 1e-9);
  EXPECT_LT((back[0].pose_sensor.translation - d.pose_sensor.translation).norm(), 1e-9);
  std::istringstream bad("0 1 0 0 0 1 0 0 0 4 2 1 truck 0.9\n");
  EXPECT_THROW(read_detections(bad), std::exception);
}

TEST(CloudText, RoundTripWithAndWithoutLabels) {
  PointCloud c;
  c.push_back(Vec3(1, 2, 3), 5);
  c.push_back(Vec3(-1, 0.5, 2), kBackgroundLabel);
  std::stringstream ss;
  write_cloud(ss, c);
  const PointCloud back = read_cloud(ss);
  EXPECT_EQ(back.labels, c.labels);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_LT((back.points[1] - c.points[1]).norm(), 1e-9);
  std::istringstream plain("1 2 3\n4 5 6\n");
  const PointCloud p = read_cloud(plain);
  EXPECT_EQ(p.size(), 2u);
  EXPECT_FALSE(p.labeled());
}

TEST(ScenarioYaml, BaseFixtureWithOverrides) {
  const Scenario s = parse_scenario(
      "base: s1\n"
      "seed: 9\n"
      "duration: 4\n"
      "noise:\n"
      "  dropout: 0.2\n"
      "objects:\n"
      "  - {id: 1, class: pedestrian, dims: [0.8, 0.8, 1.8], start: [10, 2, 0.9], speed: 1.2}\n");
  EXPECT_EQ(s.seed, 9u);
  EXPECT_DOUBLE_EQ(s.duration, 4.0);
  EXPECT_DOUBLE_EQ(s.noise.dropout, 0.2);
  EXPECT_DOUBLE_EQ(s.ego.speed, 8.0);  // from the fixture
  ASSERT_EQ(s.objects.size(), 1u);
  EXPECT_EQ(s.objects[0].label, ObjectClass::Pedestrian);
  EXPECT_DOUBLE_EQ(s.objects[0].path.speed, 1.2);
}

TEST(ScenarioYaml, RejectsUnknownKeysAndInvalidValues) {
  EXPECT_THROW(parse_scenario("base: s1\nspeeed: 3\n"), std::exception);
  EXPECT_THROW(parse_scenario("base: s1\nnoise: {dropuot: 0.1}\n"), std::exception);
  EXPECT_THROW(parse_scenario("base: s1\nnoise: {dropout: 2}\n"), std::invalid_argument);
  EXPECT_THROW(parse_scenario("base: nope\n"), std::invalid_argument);
}

TEST(ScenarioYaml, EmittedTextParsesBack) {
  for (const std::string& name : fixture_names()) {
    const Scenario s = fixture(name);
    const Scenario back = parse_scenario(scenario_to_yaml(s));
    EXPECT_EQ(back.name, s.name);
    EXPECT_DOUBLE_EQ(back.duration, s.duration);
    EXPECT_EQ(back.seed, s.seed);
    EXPECT_NEAR(back.ego.speed, s.ego.speed, 1e-12);
    EXPECT_EQ(back.ego.segments.size(), s.ego.segments.size());
    ASSERT_EQ(back.objects.size(), s.objects.size());
    for (size_t i = 0; i < s.objects.size(); ++i) {
      EXPECT_EQ(back.objects[i].id, s.objects[i].id);
      EXPECT_EQ(back.objects[i].path.parked, s.objects[i].path.parked);
      EXPECT_NEAR(back.objects[i].path.yaw, s.objects[i].path.yaw, 1e-10);
      EXPECT_LT((back.objects[i].path.start - s.objects[i].path.start).norm(), 1e-10);
      EXPECT_NEAR(back.objects[i].path.time_offset, s.objects[i].path.time_offset, 1e-12);
    }
    EXPECT_DOUBLE_EQ(back.noise.detection_sigma_t, s.noise.detection_sigma_t);
    EXPECT_LT((back.noise.accel_bias - s.noise.accel_bias).norm(), 1e-12);
    EXPECT_DOUBLE_EQ(back.background.wall_offset, s.background.wall_offset);
  }
}

TEST(ScenarioYaml, ResolveFixtureOrFile) {
  EXPECT_EQ(resolve_scenario("s2").name, "s2");
  EXPECT_THROW(resolve_scenario("/nonexistent/scenario.yaml"), std::exception);
}
