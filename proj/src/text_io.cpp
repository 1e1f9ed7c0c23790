#include "motodom/text_io.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace motodom {

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", v == 0.0 ? 0.0 : v);  // no "-0.000000000"
  return buf;
}

bool skip(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

[[noreturn]] void parse_error(int line_no, const std::string& what) {
  throw std::runtime_error("line " + std::to_string(line_no) + ": " + what);
}

Pose read_pose(std::istringstream& ls, int line_no) {
  double tx, ty, tz, qw, qx, qy, qz;
  if (!(ls >> tx >> ty >> tz >> qw >> qx >> qy >> qz)) parse_error(line_no, "expected pose fields");
  try {
    return Pose::from_quaternion(Eigen::Quaterniond(qw, qx, qy, qz), Vec3(tx, ty, tz));
  } catch (const std::invalid_argument& e) {
    parse_error(line_no, e.what());
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for reading");
  return f;
}

}  // namespace

std::string format_pose(const Pose& p) {
  const Eigen::Quaterniond q = p.quaternion();
  std::string out;
  for (double v : {p.translation.x(), p.translation.y(), p.translation.z(), q.w(), q.x(), q.y(),
                   q.z()}) {
    if (!out.empty()) out += ' ';
    out += fixed(v);
  }
  return out;
}

void write_trajectory(std::ostream& os, const Trajectory& traj) {
  for (const StampedPose& s : traj) os << fixed(s.t) << ' ' << format_pose(s.pose) << '\n';
}

Trajectory read_trajectory(std::istream& is) {
  Trajectory out;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (skip(line)) continue;
    std::istringstream ls(line);
    StampedPose s;
    if (!(ls >> s.t)) parse_error(n, "expected timestamp");
    s.pose = read_pose(ls, n);
    if (!out.empty() && !(s.t > out.back().t)) parse_error(n, "timestamps must increase");
    out.push_back(s);
  }
  return out;
}

void save_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_trajectory(f, traj);
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream f = open_in(path);
  try {
    return read_trajectory(f);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void write_detections(std::ostream& os, const std::vector<Detection>& dets) {
  for (const Detection& d : dets) {
    os << fixed(d.timestamp) << ' ' << d.truth_id << ' ' << format_pose(d.pose_sensor) << ' '
       << fixed(d.dims.x()) << ' ' << fixed(d.dims.y()) << ' ' << fixed(d.dims.z()) << ' '
       << to_string(d.label) << ' ' << fixed(d.score) << '\n';
  }
}

std::vector<Detection> read_detections(std::istream& is) {
  std::vector<Detection> out;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (skip(line)) continue;
    std::istringstream ls(line);
    Detection d;
    if (!(ls >> d.timestamp >> d.truth_id)) parse_error(n, "expected timestamp and id");
    d.pose_sensor = read_pose(ls, n);
    std::string cls;
    if (!(ls >> d.dims.x() >> d.dims.y() >> d.dims.z() >> cls >> d.score))
      parse_error(n, "expected dims, class and score");
    if (!(d.dims.array() > 0.0).all()) parse_error(n, "dims must be positive");
    try {
      d.label = parse_object_class(cls);
    } catch (const std::invalid_argument& e) {
      parse_error(n, e.what());
    }
    out.push_back(d);
  }
  return out;
}

void write_cloud(std::ostream& os, const PointCloud& cloud) {
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    os << fixed(p.x()) << ' ' << fixed(p.y()) << ' ' << fixed(p.z());
    if (cloud.labeled()) os << ' ' << cloud.labels[i];
    os << '\n';
  }
}

PointCloud read_cloud(std::istream& is) {
  PointCloud out;
  std::string line;
  int n = 0;
  std::optional<bool> labeled;
  while (std::getline(is, line)) {
    ++n;
    if (skip(line)) continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z())) parse_error(n, "expected x y z");
    int label = 0;
    const bool has_label = static_cast<bool>(ls >> label);
    if (!labeled) labeled = has_label;
    if (*labeled != has_label) parse_error(n, "labels must be given for all points or none");
    out.points.push_back(p);
    if (has_label) out.labels.push_back(label);
  }
  return out;
}

// ---- scenario YAML ---------------------------------------------------------

namespace {

void check_keys(const YAML::Node& node, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) throw std::runtime_error(where + ": expected a map");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (ok.count(key) == 0) throw std::runtime_error(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void get(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  if (!node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception& e) {
    throw std::runtime_error(where + "." + key + ": " + e.what());
  }
}

void get_vec3(const YAML::Node& node, const char* key, Vec3& out, const std::string& where) {
  if (!node[key]) return;
  const YAML::Node v = node[key];
  if (!v.IsSequence() || v.size() != 3)
    throw std::runtime_error(where + "." + key + ": expected a 3-element list");
  for (int i = 0; i < 3; ++i) out[i] = v[i].as<double>();
}

void read_path(const YAML::Node& n, PathSpec& p, const std::string& where) {
  check_keys(n, where, {"start", "yaw", "speed", "accel", "segments", "time_offset", "parked"});
  get_vec3(n, "start", p.start, where);
  get(n, "yaw", p.yaw, where);
  get(n, "speed", p.speed, where);
  get(n, "accel", p.accel, where);
  get(n, "time_offset", p.time_offset, where);
  get(n, "parked", p.parked, where);
  if (n["segments"]) {
    p.segments.clear();
    int i = 0;
    for (const YAML::Node& s : n["segments"]) {
      const std::string w = where + ".segments[" + std::to_string(i++) + "]";
      check_keys(s, w, {"duration", "curvature"});
      PathSegment seg;
      get(s, "duration", seg.duration, w);
      get(s, "curvature", seg.curvature, w);
      p.segments.push_back(seg);
    }
  }
}

ObjectSpec read_object(const YAML::Node& n, const std::string& where) {
  ObjectSpec o;
  check_keys(n, where,
             {"id", "class", "dims", "spawn", "despawn", "start", "yaw", "speed", "accel",
              "segments", "time_offset", "parked"});
  get(n, "id", o.id, where);
  if (n["class"]) o.label = parse_object_class(n["class"].as<std::string>());
  get_vec3(n, "dims", o.dims, where);
  get(n, "spawn", o.spawn, where);
  get(n, "despawn", o.despawn, where);
  YAML::Node path(YAML::NodeType::Map);
  for (const char* k : {"start", "yaw", "speed", "accel", "segments", "time_offset", "parked"})
    if (n[k]) path[k] = n[k];
  read_path(path, o.path, where);
  return o;
}

void emit_path(YAML::Emitter& e, const PathSpec& p) {
  e << YAML::Key << "start" << YAML::Value << YAML::Flow << YAML::BeginSeq << p.start.x()
    << p.start.y() << p.start.z() << YAML::EndSeq;
  e << YAML::Key << "yaw" << YAML::Value << p.yaw;
  if (p.parked) {
    e << YAML::Key << "parked" << YAML::Value << true;
    return;
  }
  e << YAML::Key << "speed" << YAML::Value << p.speed;
  e << YAML::Key << "accel" << YAML::Value << p.accel;
  if (p.time_offset != 0.0) e << YAML::Key << "time_offset" << YAML::Value << p.time_offset;
  if (!p.segments.empty()) {
    e << YAML::Key << "segments" << YAML::Value << YAML::BeginSeq;
    for (const PathSegment& s : p.segments) {
      e << YAML::Flow << YAML::BeginMap << YAML::Key << "duration" << YAML::Value << s.duration
        << YAML::Key << "curvature" << YAML::Value << s.curvature << YAML::EndMap;
    }
    e << YAML::EndSeq;
  }
}

void emit_vec3(YAML::Emitter& e, const char* key, const Vec3& v) {
  e << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << v.x() << v.y()
    << v.z() << YAML::EndSeq;
}

}  // namespace

Scenario parse_scenario(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw std::runtime_error(std::string("scenario: ") + e.what());
  }
  const std::string w = "scenario";
  check_keys(root, w,
             {"base", "name", "duration", "frame_rate", "imu_rate", "visibility_range", "seed",
              "ego", "objects", "background", "noise", "cloud", "scan_match"});
  Scenario s;
  if (root["base"]) s = fixture(root["base"].as<std::string>());
  get(root, "name", s.name, w);
  get(root, "duration", s.duration, w);
  get(root, "frame_rate", s.frame_rate, w);
  get(root, "imu_rate", s.imu_rate, w);
  get(root, "visibility_range", s.visibility_range, w);
  get(root, "seed", s.seed, w);
  if (root["ego"]) read_path(root["ego"], s.ego, w + ".ego");
  if (root["objects"]) {
    s.objects.clear();
    int i = 0;
    for (const YAML::Node& o : root["objects"])
      s.objects.push_back(read_object(o, w + ".objects[" + std::to_string(i++) + "]"));
  }
  if (const YAML::Node b = root["background"]) {
    const std::string wb = w + ".background";
    check_keys(b, wb,
               {"enabled", "x_min", "x_max", "wall_offset", "wall_length", "wall_gap",
                "wall_thickness", "wall_height", "pole_offset", "pole_spacing", "pole_size",
                "pole_height"});
    BackgroundSpec& g = s.background;
    get(b, "enabled", s.background_enabled, wb);
    get(b, "x_min", g.x_min, wb);
    get(b, "x_max", g.x_max, wb);
    get(b, "wall_offset", g.wall_offset, wb);
    get(b, "wall_length", g.wall_length, wb);
    get(b, "wall_gap", g.wall_gap, wb);
    get(b, "wall_thickness", g.wall_thickness, wb);
    get(b, "wall_height", g.wall_height, wb);
    get(b, "pole_offset", g.pole_offset, wb);
    get(b, "pole_spacing", g.pole_spacing, wb);
    get(b, "pole_size", g.pole_size, wb);
    get(b, "pole_height", g.pole_height, wb);
  }
  if (const YAML::Node n = root["noise"]) {
    const std::string wn = w + ".noise";
    check_keys(n, wn,
               {"odometry_sigma_t", "odometry_sigma_r", "detection_sigma_t",
                "detection_sigma_yaw", "dropout", "false_positive_rate", "false_positive_range",
                "gyro_density", "accel_density", "gyro_walk", "accel_walk", "gyro_bias",
                "accel_bias"});
    NoiseSpec& ns = s.noise;
    get(n, "odometry_sigma_t", ns.odometry_sigma_t, wn);
    get(n, "odometry_sigma_r", ns.odometry_sigma_r, wn);
    get(n, "detection_sigma_t", ns.detection_sigma_t, wn);
    get(n, "detection_sigma_yaw", ns.detection_sigma_yaw, wn);
    get(n, "dropout", ns.dropout, wn);
    get(n, "false_positive_rate", ns.false_positive_rate, wn);
    get(n, "false_positive_range", ns.false_positive_range, wn);
    get(n, "gyro_density", ns.imu.gyro_density, wn);
    get(n, "accel_density", ns.imu.accel_density, wn);
    get(n, "gyro_walk", ns.imu.gyro_walk, wn);
    get(n, "accel_walk", ns.imu.accel_walk, wn);
    get_vec3(n, "gyro_bias", ns.gyro_bias, wn);
    get_vec3(n, "accel_bias", ns.accel_bias, wn);
  }
  if (const YAML::Node c = root["cloud"]) {
    const std::string wc = w + ".cloud";
    check_keys(c, wc, {"spacing", "reference_range", "max_range"});
    get(c, "spacing", s.cloud.spacing, wc);
    get(c, "reference_range", s.cloud.reference_range, wc);
    get(c, "max_range", s.cloud.max_range, wc);
  }
  if (const YAML::Node m = root["scan_match"]) {
    check_keys(m, w + ".scan_match", {"drag_gain"});
    get(m, "drag_gain", s.scan_match.drag_gain, w + ".scan_match");
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream f = open_in(path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_scenario(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string scenario_to_yaml(const Scenario& s) {
  YAML::Emitter e;
  e.SetDoublePrecision(12);
  e << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << s.name;
  e << YAML::Key << "duration" << YAML::Value << s.duration;
  e << YAML::Key << "frame_rate" << YAML::Value << s.frame_rate;
  e << YAML::Key << "imu_rate" << YAML::Value << s.imu_rate;
  e << YAML::Key << "visibility_range" << YAML::Value << s.visibility_range;
  e << YAML::Key << "seed" << YAML::Value << s.seed;
  e << YAML::Key << "ego" << YAML::Value << YAML::BeginMap;
  emit_path(e, s.ego);
  e << YAML::EndMap;

  e << YAML::Key << "objects" << YAML::Value << YAML::BeginSeq;
  for (const ObjectSpec& o : s.objects) {
    e << YAML::BeginMap;
    e << YAML::Key << "id" << YAML::Value << o.id;
    e << YAML::Key << "class" << YAML::Value << std::string(to_string(o.label));
    emit_vec3(e, "dims", o.dims);
    if (std::isfinite(o.spawn)) e << YAML::Key << "spawn" << YAML::Value << o.spawn;
    if (std::isfinite(o.despawn)) e << YAML::Key << "despawn" << YAML::Value << o.despawn;
    emit_path(e, o.path);
    e << YAML::EndMap;
  }
  e << YAML::EndSeq;

  const BackgroundSpec& g = s.background;
  e << YAML::Key << "background" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "enabled" << YAML::Value << s.background_enabled;
  e << YAML::Key << "x_min" << YAML::Value << g.x_min;
  e << YAML::Key << "x_max" << YAML::Value << g.x_max;
  e << YAML::Key << "wall_offset" << YAML::Value << g.wall_offset;
  e << YAML::Key << "wall_length" << YAML::Value << g.wall_length;
  e << YAML::Key << "wall_gap" << YAML::Value << g.wall_gap;
  e << YAML::Key << "wall_thickness" << YAML::Value << g.wall_thickness;
  e << YAML::Key << "wall_height" << YAML::Value << g.wall_height;
  e << YAML::Key << "pole_offset" << YAML::Value << g.pole_offset;
  e << YAML::Key << "pole_spacing" << YAML::Value << g.pole_spacing;
  e << YAML::Key << "pole_size" << YAML::Value << g.pole_size;
  e << YAML::Key << "pole_height" << YAML::Value << g.pole_height;
  e << YAML::EndMap;

  const NoiseSpec& n = s.noise;
  e << YAML::Key << "noise" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "odometry_sigma_t" << YAML::Value << n.odometry_sigma_t;
  e << YAML::Key << "odometry_sigma_r" << YAML::Value << n.odometry_sigma_r;
  e << YAML::Key << "detection_sigma_t" << YAML::Value << n.detection_sigma_t;
  e << YAML::Key << "detection_sigma_yaw" << YAML::Value << n.detection_sigma_yaw;
  e << YAML::Key << "dropout" << YAML::Value << n.dropout;
  e << YAML::Key << "false_positive_rate" << YAML::Value << n.false_positive_rate;
  e << YAML::Key << "false_positive_range" << YAML::Value << n.false_positive_range;
  e << YAML::Key << "gyro_density" << YAML::Value << n.imu.gyro_density;
  e << YAML::Key << "accel_density" << YAML::Value << n.imu.accel_density;
  e << YAML::Key << "gyro_walk" << YAML::Value << n.imu.gyro_walk;
  e << YAML::Key << "accel_walk" << YAML::Value << n.imu.accel_walk;
  emit_vec3(e, "gyro_bias", n.gyro_bias);
  emit_vec3(e, "accel_bias", n.accel_bias);
  e << YAML::EndMap;

  e << YAML::Key << "cloud" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "spacing" << YAML::Value << s.cloud.spacing;
  e << YAML::Key << "reference_range" << YAML::Value << s.cloud.reference_range;
  e << YAML::Key << "max_range" << YAML::Value << s.cloud.max_range;
  e << YAML::EndMap;
  e << YAML::Key << "scan_match" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "drag_gain" << YAML::Value << s.scan_match.drag_gain;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

Scenario resolve_scenario(const std::string& name_or_path) {
  for (const std::string& f : fixture_names())
    if (f == name_or_path) return fixture(f);
  std::ifstream probe(name_or_path);
  if (!probe) {
    std::string names;
    for (const std::string& f : fixture_names()) names += (names.empty() ? "" : ", ") + f;
    throw std::invalid_argument("unknown fixture or unreadable file '" + name_or_path +
                                "' (fixtures: " + names + ")");
  }
  return load_scenario(name_or_path);
}

}  // namespace motodom
