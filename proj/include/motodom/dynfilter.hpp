#pragma once

// Removal of points that fall inside the predicted boxes of moving tracks.

#include "motodom/tracker.hpp"

#include <span>
#include <vector>

namespace motodom {

struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Vec3 dims = Vec3::Ones();  // full extents along the box axes
  Mat3 rotation = Mat3::Identity();
  double margin = 0.0;  // inflation per face (m)
};

/// Label of points that belong to no object.
constexpr int kBackgroundLabel = -1;

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<int> labels;  // empty, or one per point

  size_t size() const { return points.size(); }
  bool labeled() const { return !labels.empty(); }
  void push_back(const Vec3& p, int label);
};

constexpr double kDefaultBoxMargin = 0.2;

/// Boxes of the live dynamic tracks at t_next, expressed in the frame of
/// `predicted_ego`. Static tracks are skipped.
std::vector<OrientedBox> predict_boxes(std::span<const Track> tracks, double t_next,
                                       const Pose& predicted_ego,
                                       double margin = kDefaultBoxMargin);

/// Sensor-frame box of a detection.
OrientedBox detection_box(const Detection& d, double margin = kDefaultBoxMargin);

bool point_in_box(const Vec3& p, const OrientedBox& box);

struct FilterResult {
  PointCloud kept;
  PointCloud removed;
};

FilterResult filter(const PointCloud& cloud, std::span<const OrientedBox> boxes);

}  // namespace motodom
