#include "motodom/pipeline.hpp"
#include "motodom/text_io.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace motodom;

namespace {

Scenario short_s1() {
  Scenario s = fixture("s1");
  s.duration = 5.0;
  return s;
}

RunConfig config(Mode m, std::uint64_t seed = 7) {
  RunConfig c;
  c.mode = m;
  c.seed = seed;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Mode, ParsesNamesAndRejectsOthers) {
  for (Mode m : {Mode::OdomOnly, Mode::AllFilt, Mode::DynaFilt, Mode::Joint})
    EXPECT_EQ(parse_mode(to_string(m)), m);
  EXPECT_EQ(parse_mode("joint"), Mode::Joint);
  EXPECT_THROW(parse_mode("lio"), std::invalid_argument);
  EXPECT_THROW(parse_mode(""), std::invalid_argument);
}

TEST(Pipeline, DeterministicForSeed) {
  const Scenario s = short_s1();
  const RunResult a = run_pipeline(s, config(Mode::Joint));
  const RunResult b = run_pipeline(s, config(Mode::Joint));
  std::ostringstream ta, tb;
  write_trajectory(ta, a.ego_est);
  write_trajectory(tb, b.ego_est);
  EXPECT_EQ(ta.str(), tb.str());
  EXPECT_EQ(format_metrics(a).substr(0, 200), format_metrics(b).substr(0, 200));
  EXPECT_EQ(a.object_est.size(), b.object_est.size());
  EXPECT_EQ(a.seed, 7u);
}

TEST(Pipeline, TimingIsPositiveAndTrackingIsCheap) {
  const RunResult r = run_pipeline(short_s1(), config(Mode::Joint));
  for (double v : {r.timing.tracking_ms, r.timing.filtering_ms, r.timing.optimization_ms}) {
    EXPECT_GT(v, 0.0);
    EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_LT(r.timing.tracking_ms, 5.0);
  EXPECT_EQ(r.frame_timing.size(), r.ego_est.size());
  const TimingSummary t = timing(r.frame_timing);
  EXPECT_DOUBLE_EQ(t.tracking_ms, r.timing.tracking_ms);
}

TEST(Pipeline, JointGraphExtendsOdometryOnlyGraph) {
  const Scenario s = short_s1();
  const RunResult odom = run_pipeline(s, config(Mode::OdomOnly));
  const RunResult joint = run_pipeline(s, config(Mode::Joint));
  EXPECT_TRUE(std::includes(joint.factor_kinds.begin(), joint.factor_kinds.end(),
                            odom.factor_kinds.begin(), odom.factor_kinds.end()));
  EXPECT_EQ(odom.factor_kinds.count(FactorKind::Observation), 0u);
  for (FactorKind k : {FactorKind::Observation, FactorKind::Motion, FactorKind::Smooth})
    EXPECT_EQ(joint.factor_kinds.count(k), 1u);
  EXPECT_GT(joint.max_factors, odom.max_factors);
  EXPECT_GT(joint.timing.optimization_ms, odom.timing.optimization_ms);
  EXPECT_TRUE(odom.object_est.empty());
  EXPECT_FALSE(joint.object_est.empty());
}

TEST(Pipeline, ModesFilterAsDescribed) {
  const Scenario s = short_s1();
  const RunResult odom = run_pipeline(s, config(Mode::OdomOnly));
  EXPECT_EQ(odom.filter.moving_removed, 0u);
  EXPECT_EQ(odom.filter.static_kept, odom.filter.static_total);
  const RunResult all = run_pipeline(s, config(Mode::AllFilt));
  const RunResult dyn = run_pipeline(s, config(Mode::DynaFilt));
  EXPECT_LT(all.filter.static_retained_ratio(), dyn.filter.static_retained_ratio());
  EXPECT_GT(dyn.filter.moving_removed_ratio(), 0.9);
}

TEST(Pipeline, EgoTrajectoryCoversEveryFrame) {
  const Scenario s = short_s1();
  const RunResult r = run_pipeline(s, config(Mode::DynaFilt));
  EXPECT_EQ(static_cast<int>(r.ego_est.size()), s.frame_count());
  EXPECT_EQ(r.ego_gt.size(), r.ego_est.size());
  EXPECT_EQ(r.ego_ate.matched, s.frame_count());
  EXPECT_LT(r.ego_ate.ate_t, 0.5);
}

TEST(Pipeline, LiftedObjectAteWithOwnEgoMatchesRaw) {
  const Scenario s = short_s1();
  const RunResult r = run_pipeline(s, config(Mode::Joint));
  ASSERT_TRUE(r.raw_object_ate.has_value());
  const auto lifted = lifted_object_ate(r, r.ego_est, s.frame_rate);
  ASSERT_TRUE(lifted.has_value());
  EXPECT_NEAR(lifted->ate_t, r.raw_object_ate->ate_t, 1e-9);
}

TEST(Pipeline, WritesOutputLayout) {
  const auto dir = std::filesystem::temp_directory_path() / "motodom_pipeline_test";
  std::filesystem::remove_all(dir);
  RunResult r = run_pipeline(short_s1(), config(Mode::Joint));
  write_outputs(r, dir.string());
  for (const char* f : {"ego_est.txt", "ego_gt.txt", "metrics.txt", "timing.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  ASSERT_FALSE(r.object_est.empty());
  const int id = r.object_est.begin()->first;
  for (const std::string& f : {"obj_" + std::to_string(id) + "_est.txt",
                              "obj_" + std::to_string(id) + "_gt.txt"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_EQ(load_trajectory((dir / "ego_est.txt").string()).size(), r.ego_est.size());
  EXPECT_NE(slurp(dir / "metrics.txt").find("ego_ate_t"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, UnknownScenarioIsRejected) {
  RunConfig c;
  c.scenario = "no-such-fixture";
  EXPECT_THROW(run_pipeline(c), std::exception);
}
