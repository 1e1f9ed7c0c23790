#pragma once

// Synthetic driving world: analytic planar trajectories for the ego vehicle
// and objects, IMU signals, noisy relative odometry, noisy detections and
// labeled point clouds sampled on box faces.

#include "motodom/dynfilter.hpp"
#include "motodom/factors.hpp"
#include "motodom/tracker.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace motodom {

struct PathSegment {
  double duration = 0.0;   // s
  double curvature = 0.0;  // 1/m, positive turns left
};

/// Planar path: speed v(t) = speed + accel * t, heading changes with
/// curvature per segment. Straight before t = 0 and after the last segment.
struct PathSpec {
  Vec3 start = Vec3::Zero();
  double yaw = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  std::vector<PathSegment> segments;
  double time_offset = 0.0;  // path evaluated at t + time_offset
  bool parked = false;       // constant pose at start/yaw
};

struct Kinematics {
  Pose pose;
  Vec3 velocity = Vec3::Zero();      // world
  Vec3 acceleration = Vec3::Zero();  // world
  double yaw_rate = 0.0;
  double speed = 0.0;
};

Kinematics evaluate_path(const PathSpec& path, double t);

struct ObjectSpec {
  int id = 0;
  ObjectClass label = ObjectClass::Vehicle;
  Vec3 dims{4.5, 1.8, 1.5};
  PathSpec path;
  double spawn = -std::numeric_limits<double>::infinity();
  double despawn = std::numeric_limits<double>::infinity();

  bool moving() const { return !path.parked && (path.speed != 0.0 || path.accel != 0.0); }
  bool present(double t) const { return t >= spawn && t <= despawn; }
};

/// Roadside structures: wall blocks and poles on both sides of y = 0.
struct BackgroundSpec {
  double x_min = -80.0;
  double x_max = 300.0;
  double wall_offset = 14.0;  // |y| of wall centers
  double wall_length = 20.0;
  double wall_gap = 6.0;
  double wall_thickness = 0.5;
  double wall_height = 4.0;
  double pole_offset = 7.0;
  double pole_spacing = 15.0;
  double pole_size = 0.3;
  double pole_height = 3.0;
};

struct NoiseSpec {
  double odometry_sigma_t = 0.01;  // m per axis per frame
  double odometry_sigma_r = 5e-4;  // rad per axis per frame
  double detection_sigma_t = 0.01;
  double detection_sigma_yaw = 0.005;
  double dropout = 0.01;
  double false_positive_rate = 0.1;  // expected per frame
  double false_positive_range = 40.0;
  ImuNoise imu;
  Vec3 gyro_bias{2e-4, -1e-4, 1.5e-4};
  Vec3 accel_bias{0.02, -0.015, 0.01};
};

struct CloudSpec {
  double spacing = 0.3;          // grid spacing on faces at reference range (m)
  double reference_range = 8.0;  // spacing grows linearly beyond this range
  double max_range = 60.0;
};

/// Stand-in for scan matching: noise grows as static points are removed and
/// points left on moving objects drag the estimate along their motion.
struct ScanMatchSpec {
  double drag_gain = 0.5;
};

struct Scenario {
  std::string name;
  double duration = 15.0;
  double frame_rate = 10.0;
  double imu_rate = 100.0;
  double visibility_range = 60.0;
  std::uint64_t seed = 1;
  PathSpec ego;
  std::vector<ObjectSpec> objects;
  BackgroundSpec background;
  bool background_enabled = true;
  NoiseSpec noise;
  CloudSpec cloud;
  ScanMatchSpec scan_match;

  int frame_count() const;
  double frame_time(int k) const { return k / frame_rate; }
  /// Throws std::invalid_argument listing every problem found.
  void validate() const;
  const ObjectSpec* object(int id) const;
};

struct ObjectTruth {
  int id = 0;
  ObjectClass label = ObjectClass::Vehicle;
  Vec3 dims = Vec3::Ones();
  Pose pose;  // world
  Vec3 velocity = Vec3::Zero();
  bool moving = false;
  bool present = false;
  bool visible = false;  // present and within visibility range
};

struct FrameBundle {
  int frame = 0;
  double timestamp = 0.0;
  EgoState ego;                  // true state, biases included
  Pose odometry;                 // noisy T^{k-1}_k; identity at frame 0
  Vec6 odometry_noise = Vec6::Zero();  // unit normal draw behind `odometry`
  std::vector<ImuSample> imu;    // samples over (t_{k-1}, t_k]
  std::vector<Detection> detections;
  PointCloud cloud;              // sensor frame, labeled by object id
  std::vector<ObjectTruth> objects;

  const ObjectTruth* truth(int id) const;
};

/// Deterministic in (scenario, scenario.seed).
std::vector<FrameBundle> generate(const Scenario& scenario);

/// Noise-free IMU samples over (t0, t1] at the scenario IMU rate.
std::vector<ImuSample> ideal_imu(const Scenario& scenario, double t0, double t1);

/// Relative pose measurement from the points a scan matcher would see.
Pose scan_match(const Scenario& scenario, const FrameBundle& prev, const FrameBundle& curr,
                const PointCloud& kept);

/// Points on moving objects over all points of the accumulated clouds.
double ghost_metric(std::span<const PointCloud> clouds, const Scenario& scenario);

/// Built-in fixtures: "s1", "s1-parked", "s2", "s3".
Scenario fixture(const std::string& name);
std::vector<std::string> fixture_names();

}  // namespace motodom
