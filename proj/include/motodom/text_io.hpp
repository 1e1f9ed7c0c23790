#pragma once

// Line-oriented text formats and scenario config files.
//
//   trajectory: t tx ty tz qw qx qy qz
//   detections: t id tx ty tz qw qx qy qz l w h class score
//   cloud:      x y z [label]
//
// Blank lines and lines starting with '#' are skipped on input. Parse errors
// throw std::runtime_error naming the line.

#include "motodom/evalkit.hpp"
#include "motodom/simworld.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace motodom {

void write_trajectory(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory(std::istream& is);
void save_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory(const std::string& path);

void write_detections(std::ostream& os, const std::vector<Detection>& dets);
std::vector<Detection> read_detections(std::istream& is);

void write_cloud(std::ostream& os, const PointCloud& cloud);
PointCloud read_cloud(std::istream& is);

/// YAML scenario. A `base: <fixture>` key starts from a built-in fixture and
/// applies the remaining keys on top. Unknown keys are rejected.
Scenario parse_scenario(const std::string& yaml_text);
Scenario load_scenario(const std::string& path);
std::string scenario_to_yaml(const Scenario& s);

/// Fixture name or path to a YAML file.
Scenario resolve_scenario(const std::string& name_or_path);

/// Fixed-precision pose fields: tx ty tz qw qx qy qz.
std::string format_pose(const Pose& p);

}  // namespace motodom
