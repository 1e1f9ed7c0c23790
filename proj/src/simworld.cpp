#include "motodom/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace motodom {

namespace {

constexpr double kFrameEps = 1e-9;

bool multiple_of(double value, double period) {
  const double r = value / period;
  return std::abs(r - std::round(r)) < 1e-6;
}

void advance(Eigen::Vector2d& p, double& psi, double kappa, double ds) {
  if (std::abs(kappa) < 1e-9) {
    p += ds * Eigen::Vector2d(std::cos(psi), std::sin(psi));
    return;
  }
  const double psi1 = psi + kappa * ds;
  p.x() += (std::sin(psi1) - std::sin(psi)) / kappa;
  p.y() -= (std::cos(psi1) - std::cos(psi)) / kappa;
  psi = psi1;
}

enum Stream : std::uint64_t { kOdometry = 1, kImu = 2, kDetection = 3, kClutter = 4 };

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

struct WorldBox {
  Pose pose;
  Vec3 dims;
  int label;
};

std::vector<WorldBox> background_boxes(const BackgroundSpec& b) {
  std::vector<WorldBox> out;
  const double step = b.wall_length + b.wall_gap;
  for (double x = b.x_min; x + b.wall_length <= b.x_max; x += step) {
    for (double side : {-1.0, 1.0}) {
      out.push_back({Pose::from_translation(
                         {x + 0.5 * b.wall_length, side * b.wall_offset, 0.5 * b.wall_height}),
                     {b.wall_length, b.wall_thickness, b.wall_height}, kBackgroundLabel});
    }
  }
  for (double x = b.x_min; x <= b.x_max; x += b.pole_spacing) {
    for (double side : {-1.0, 1.0}) {
      out.push_back({Pose::from_translation({x, side * b.pole_offset, 0.5 * b.pole_height}),
                     {b.pole_size, b.pole_size, b.pole_height}, kBackgroundLabel});
    }
  }
  return out;
}

// Grid points on every face but the bottom, spaced by range from the sensor.
void sample_box(const WorldBox& box, const Pose& sensor, const CloudSpec& spec,
                PointCloud& cloud) {
  const Vec3 half = 0.5 * box.dims;
  const Vec3 local_sensor = box.pose.inverse() * sensor.translation;
  const Vec3 nearest = local_sensor.cwiseMax(-half).cwiseMin(half);
  const double range = (local_sensor - nearest).norm();
  if (range > spec.max_range) return;
  const double spacing = spec.spacing * std::max(1.0, range / spec.reference_range);
  const Pose to_sensor = sensor.inverse() * box.pose;

  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    const int nu = std::max(1, static_cast<int>(std::ceil(box.dims[u] / spacing)));
    const int nv = std::max(1, static_cast<int>(std::ceil(box.dims[v] / spacing)));
    for (double sign : {-1.0, 1.0}) {
      if (axis == 2 && sign < 0.0) continue;
      for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
          Vec3 p;
          p[axis] = sign * half[axis];
          p[u] = -half[u] + (i + 0.5) * box.dims[u] / nu;
          p[v] = -half[v] + (j + 0.5) * box.dims[v] / nv;
          const Vec3 s = to_sensor * p;
          if (s.norm() <= spec.max_range) cloud.push_back(s, box.label);
        }
      }
    }
  }
}

ImuSample ideal_sample(const PathSpec& path, double t_mid, double dt) {
  const Kinematics k = evaluate_path(path, t_mid);
  ImuSample s;
  s.gyro = Vec3(0.0, 0.0, k.yaw_rate);
  s.accel = k.pose.rotation.transpose() * (k.acceleration - kGravity);
  s.dt = dt;
  return s;
}

}  // namespace

Kinematics evaluate_path(const PathSpec& path, double t) {
  Kinematics out;
  if (path.parked) {
    out.pose = rot_z(path.yaw, path.start);
    return out;
  }
  const double tau = t + path.time_offset;
  auto dist = [&](double x) { return path.speed * x + 0.5 * path.accel * x * x; };

  Eigen::Vector2d p = path.start.head<2>();
  double psi = path.yaw;
  double kappa = 0.0;
  if (tau <= 0.0) {
    advance(p, psi, 0.0, dist(tau));
  } else {
    double t0 = 0.0;
    bool inside = false;
    for (const PathSegment& seg : path.segments) {
      const double t1 = t0 + seg.duration;
      const double te = std::min(tau, t1);
      advance(p, psi, seg.curvature, dist(te) - dist(t0));
      if (tau <= t1) {
        kappa = seg.curvature;
        inside = true;
        break;
      }
      t0 = t1;
    }
    if (!inside) advance(p, psi, 0.0, dist(tau) - dist(t0));
  }

  const double v = path.speed + path.accel * tau;
  const Vec3 heading(std::cos(psi), std::sin(psi), 0.0);
  const Vec3 normal(-std::sin(psi), std::cos(psi), 0.0);
  out.pose = rot_z(psi, Vec3(p.x(), p.y(), path.start.z()));
  out.speed = v;
  out.velocity = v * heading;
  out.acceleration = path.accel * heading + v * v * kappa * normal;
  out.yaw_rate = v * kappa;
  return out;
}

int Scenario::frame_count() const {
  return static_cast<int>(std::floor(duration * frame_rate + kFrameEps)) + 1;
}

const ObjectSpec* Scenario::object(int id) const {
  for (const ObjectSpec& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

void Scenario::validate() const {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  check(duration > 0.0, "duration must be positive");
  check(frame_rate > 0.0, "frame_rate must be positive");
  check(imu_rate > 0.0, "imu_rate must be positive");
  if (frame_rate > 0.0 && imu_rate > 0.0)
    check(multiple_of(imu_rate, frame_rate), "frame_rate must divide imu_rate");
  check(visibility_range > 0.0, "visibility_range must be positive");

  const NoiseSpec& n = noise;
  check(n.odometry_sigma_t >= 0.0 && n.odometry_sigma_r >= 0.0, "odometry sigmas must be >= 0");
  check(n.detection_sigma_t >= 0.0 && n.detection_sigma_yaw >= 0.0,
        "detection sigmas must be >= 0");
  check(n.dropout >= 0.0 && n.dropout <= 1.0, "dropout must lie in [0, 1]");
  check(n.false_positive_rate >= 0.0, "false_positive_rate must be >= 0");
  check(n.false_positive_range > 0.0, "false_positive_range must be positive");
  check(n.imu.gyro_density >= 0.0 && n.imu.accel_density >= 0.0 && n.imu.gyro_walk >= 0.0 &&
            n.imu.accel_walk >= 0.0,
        "IMU noise densities must be >= 0");
  check(cloud.spacing > 0.0 && cloud.reference_range > 0.0 && cloud.max_range > 0.0,
        "cloud spacing and ranges must be positive");
  check(scan_match.drag_gain >= 0.0, "scan_match drag_gain must be >= 0");

  auto check_path = [&](const PathSpec& p, const std::string& who) {
    if (p.parked) return;
    for (const PathSegment& s : p.segments) {
      check(s.duration > 0.0, who + ": segment durations must be positive");
      if (imu_rate > 0.0)
        check(multiple_of(s.duration, 1.0 / imu_rate),
              who + ": segment durations must be multiples of the IMU period");
    }
    if (p.time_offset != 0.0 && imu_rate > 0.0)
      check(multiple_of(p.time_offset, 1.0 / imu_rate),
            who + ": time_offset must be a multiple of the IMU period");
    const double v0 = p.speed + p.accel * p.time_offset;
    const double v1 = p.speed + p.accel * (p.time_offset + duration);
    check(v0 >= 0.0 && v1 >= 0.0, who + ": speed must stay non-negative");
  };
  check_path(ego, "ego");
  std::vector<int> ids;
  for (const ObjectSpec& o : objects) {
    const std::string who = "object " + std::to_string(o.id);
    check(o.id >= 0, who + ": id must be non-negative");
    check(std::find(ids.begin(), ids.end(), o.id) == ids.end(), who + ": duplicate id");
    ids.push_back(o.id);
    check((o.dims.array() > 0.0).all(), who + ": dims must be positive");
    check(o.spawn <= o.despawn, who + ": spawn after despawn");
    check_path(o.path, who);
  }

  if (!problems.empty()) {
    std::ostringstream os;
    os << "invalid scenario '" << name << "':";
    for (const std::string& p : problems) os << "\n  - " << p;
    throw std::invalid_argument(os.str());
  }
}

const ObjectTruth* FrameBundle::truth(int id) const {
  for (const ObjectTruth& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

std::vector<ImuSample> ideal_imu(const Scenario& scenario, double t0, double t1) {
  const double dt = 1.0 / scenario.imu_rate;
  const int n = static_cast<int>(std::lround((t1 - t0) / dt));
  std::vector<ImuSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(ideal_sample(scenario.ego, t0 + (i + 0.5) * dt, dt));
  return out;
}

std::vector<FrameBundle> generate(const Scenario& scenario) {
  scenario.validate();
  const NoiseSpec& noise = scenario.noise;
  std::mt19937_64 odo_rng = make_rng(scenario.seed, kOdometry);
  std::mt19937_64 imu_rng = make_rng(scenario.seed, kImu);
  std::mt19937_64 det_rng = make_rng(scenario.seed, kDetection);
  std::mt19937_64 fp_rng = make_rng(scenario.seed, kClutter);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::poisson_distribution<int> clutter(noise.false_positive_rate);

  std::vector<WorldBox> background;
  if (scenario.background_enabled) background = background_boxes(scenario.background);

  const int frames = scenario.frame_count();
  const double imu_dt = 1.0 / scenario.imu_rate;
  std::vector<FrameBundle> out;
  out.reserve(static_cast<size_t>(frames));
  for (int k = 0; k < frames; ++k) {
    FrameBundle b;
    b.frame = k;
    b.timestamp = scenario.frame_time(k);
    const Kinematics ego = evaluate_path(scenario.ego, b.timestamp);
    b.ego.pose = ego.pose;
    b.ego.velocity = ego.velocity;
    b.ego.gyro_bias = noise.gyro_bias;
    b.ego.accel_bias = noise.accel_bias;

    if (k > 0) {
      const FrameBundle& prev = out.back();
      const Pose rel = prev.ego.pose.inverse() * b.ego.pose;
      for (int i = 0; i < 6; ++i) b.odometry_noise[i] = normal(odo_rng);
      Vec6 eps;
      eps << noise.odometry_sigma_t * b.odometry_noise.head<3>(),
          noise.odometry_sigma_r * b.odometry_noise.tail<3>();
      b.odometry = rel * exp(eps);

      b.imu = ideal_imu(scenario, prev.timestamp, b.timestamp);
      const double sg = noise.imu.gyro_density / std::sqrt(imu_dt);
      const double sa = noise.imu.accel_density / std::sqrt(imu_dt);
      for (ImuSample& s : b.imu) {
        for (int i = 0; i < 3; ++i) s.gyro[i] += noise.gyro_bias[i] + sg * normal(imu_rng);
        for (int i = 0; i < 3; ++i) s.accel[i] += noise.accel_bias[i] + sa * normal(imu_rng);
      }
    }

    const Pose to_sensor = b.ego.pose.inverse();
    b.cloud.labels.reserve(4096);
    for (const WorldBox& w : background) sample_box(w, b.ego.pose, scenario.cloud, b.cloud);

    for (const ObjectSpec& spec : scenario.objects) {
      const Kinematics k_obj = evaluate_path(spec.path, b.timestamp);
      ObjectTruth truth;
      truth.id = spec.id;
      truth.label = spec.label;
      truth.dims = spec.dims;
      truth.pose = k_obj.pose;
      truth.velocity = k_obj.velocity;
      truth.moving = spec.moving();
      truth.present = spec.present(b.timestamp);
      const double range = (truth.pose.translation - b.ego.pose.translation).norm();
      truth.visible = truth.present && range <= scenario.visibility_range;
      b.objects.push_back(truth);

      if (truth.present)
        sample_box({truth.pose, truth.dims, truth.id}, b.ego.pose, scenario.cloud, b.cloud);

      // Draw unconditionally so visibility changes do not shift the stream.
      const double drop = uniform(det_rng);
      Vec3 dt_noise;
      for (int i = 0; i < 3; ++i) dt_noise[i] = normal(det_rng);
      const double dyaw = normal(det_rng);
      if (!truth.visible || drop < noise.dropout) continue;
      Detection d;
      d.pose_sensor = to_sensor * truth.pose;
      d.pose_sensor.translation += noise.detection_sigma_t * dt_noise;
      d.pose_sensor.rotation = so3_exp(Vec3(0.0, 0.0, noise.detection_sigma_yaw * dyaw)) *
                               d.pose_sensor.rotation;
      d.dims = spec.dims;
      d.label = spec.label;
      d.score = 0.9;
      d.timestamp = b.timestamp;
      d.truth_id = spec.id;
      b.detections.push_back(d);
    }

    const int n_fp = noise.false_positive_rate > 0.0 ? clutter(fp_rng) : 0;
    const double r = noise.false_positive_range;
    for (int i = 0; i < n_fp; ++i) {
      Detection d;
      const double x = (2.0 * uniform(fp_rng) - 1.0) * r;
      const double y = (2.0 * uniform(fp_rng) - 1.0) * r;
      const double yaw = (2.0 * uniform(fp_rng) - 1.0) * M_PI;
      d.pose_sensor = rot_z(yaw, Vec3(x, y, 0.75));
      d.dims = Vec3(4.5, 1.8, 1.5);
      d.label = ObjectClass::Vehicle;
      d.score = 0.3;
      d.timestamp = b.timestamp;
      b.detections.push_back(d);
    }
    out.push_back(std::move(b));
  }
  return out;
}

Pose scan_match(const Scenario& scenario, const FrameBundle& prev, const FrameBundle& curr,
                const PointCloud& kept) {
  const Pose rel = prev.ego.pose.inverse() * curr.ego.pose;
  std::unordered_map<int, bool> moving;
  for (const ObjectTruth& o : curr.objects) moving[o.id] = o.moving;
  auto is_static = [&](int label) {
    if (label == kBackgroundLabel) return true;
    auto it = moving.find(label);
    return it == moving.end() || !it->second;
  };

  size_t static_all = 0;
  for (int l : curr.cloud.labels) static_all += is_static(l) ? 1 : 0;
  size_t static_kept = 0;
  std::unordered_map<int, size_t> moving_kept;
  for (int l : kept.labels) {
    if (is_static(l))
      ++static_kept;
    else
      ++moving_kept[l];
  }
  double scale = 1.0;
  if (static_all > 0) {
    scale = std::sqrt(static_cast<double>(static_all) /
                      static_cast<double>(std::max<size_t>(static_kept, 1)));
  }

  Vec3 drag = Vec3::Zero();
  if (!kept.labels.empty()) {
    const double total = static_cast<double>(kept.labels.size());
    for (const auto& [id, count] : moving_kept) {
      const ObjectTruth* a = prev.truth(id);
      const ObjectTruth* b = curr.truth(id);
      if (a == nullptr || b == nullptr) continue;
      const Vec3 shift =
          prev.ego.pose.rotation.transpose() * (b->pose.translation - a->pose.translation);
      drag -= scenario.scan_match.drag_gain * (static_cast<double>(count) / total) * shift;
    }
  }

  const NoiseSpec& n = scenario.noise;
  Vec6 eps;
  eps << scale * n.odometry_sigma_t * curr.odometry_noise.head<3>(),
      scale * n.odometry_sigma_r * curr.odometry_noise.tail<3>();
  return Pose(rel.rotation, rel.translation + drag) * exp(eps);
}

double ghost_metric(std::span<const PointCloud> clouds, const Scenario& scenario) {
  size_t total = 0, ghost = 0;
  for (const PointCloud& c : clouds) {
    for (int l : c.labels) {
      ++total;
      if (l == kBackgroundLabel) continue;
      const ObjectSpec* o = scenario.object(l);
      if (o != nullptr && o->moving()) ++ghost;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(ghost) / static_cast<double>(total);
}

namespace {

ObjectSpec parked_car(int id, double x, double y) {
  ObjectSpec o;
  o.id = id;
  o.path.parked = true;
  o.path.start = Vec3(x, y, 0.75);
  return o;
}

ObjectSpec moving_car(int id, double x, double y, double yaw, double speed) {
  ObjectSpec o;
  o.id = id;
  o.path.start = Vec3(x, y, 0.75);
  o.path.yaw = yaw;
  o.path.speed = speed;
  return o;
}

}  // namespace

Scenario fixture(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "s1") {
    s.duration = 15.0;
    s.ego.speed = 8.0;
    s.objects = {parked_car(1, 25.0, -3.2), parked_car(2, 55.0, -3.2),
                 parked_car(3, 95.0, -3.2), moving_car(4, 70.0, 3.5, M_PI, 10.0),
                 moving_car(5, 130.0, 3.5, M_PI, 10.0)};
  } else if (name == "s1-parked") {
    s.duration = 15.0;
    s.ego.speed = 8.0;
    for (int i = 0; i < 8; ++i)
      s.objects.push_back(parked_car(i + 1, 15.0 + 15.0 * i, i % 2 == 0 ? -3.2 : 3.5));
  } else if (name == "s2") {
    s.duration = 12.0;
    s.ego.speed = 25.0;
    s.background.x_max = 450.0;
    s.background.wall_offset = 22.0;
    s.background.pole_offset = 15.0;
    s.background.pole_spacing = 25.0;
    s.objects = {moving_car(1, 20.0, 3.7, 0.0, 27.0),   moving_car(2, -15.0, -3.7, 0.0, 28.0),
                 moving_car(3, 45.0, -3.7, 0.0, 22.0),  moving_car(4, 80.0, 3.7, 0.0, 24.0),
                 moving_car(5, 200.0, 10.0, M_PI, 25.0), moving_car(6, 380.0, 10.0, M_PI, 25.0)};
  } else if (name == "s3") {
    s.duration = 20.0;
    s.ego.speed = 10.0;
    s.ego.segments = {{4.0, 0.0}, {4.0, 0.005}, {4.0, -0.005}};
    s.background.wall_offset = 30.0;
    s.background.pole_offset = 24.0;
    ObjectSpec target;
    target.id = 1;
    target.path = s.ego;
    target.path.start.z() = 0.75;
    target.path.time_offset = 1.5;
    s.objects = {target};
  } else {
    throw std::invalid_argument("unknown fixture '" + name + "'");
  }
  return s;
}

std::vector<std::string> fixture_names() { return {"s1", "s1-parked", "s2", "s3"}; }

}  // namespace motodom
