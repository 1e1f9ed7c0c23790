#include "motodom/dynfilter.hpp"

#include <stdexcept>

namespace motodom {

void PointCloud::push_back(const Vec3& p, int label) {
  if (points.size() != labels.size())
    throw std::logic_error("PointCloud::push_back on an unlabeled cloud");
  points.push_back(p);
  labels.push_back(label);
}

std::vector<OrientedBox> predict_boxes(std::span<const Track> tracks, double t_next,
                                       const Pose& predicted_ego, double margin) {
  const Pose to_sensor = predicted_ego.inverse();
  std::vector<OrientedBox> out;
  for (const Track& t : tracks) {
    if (!t.alive() || t.motion != MotionState::Dynamic || t.history.empty()) continue;
    const Pose world = t.predict_pose(t_next);
    const Pose local = to_sensor * world;
    out.push_back({local.translation, t.dims, local.rotation, margin});
  }
  return out;
}

OrientedBox detection_box(const Detection& d, double margin) {
  return {d.pose_sensor.translation, d.dims, d.pose_sensor.rotation, margin};
}

bool point_in_box(const Vec3& p, const OrientedBox& box) {
  const Vec3 local = box.rotation.transpose() * (p - box.center);
  const Vec3 half = 0.5 * box.dims + Vec3::Constant(box.margin);
  return (local.array().abs() <= half.array()).all();
}

FilterResult filter(const PointCloud& cloud, std::span<const OrientedBox> boxes) {
  if (cloud.labeled() && cloud.labels.size() != cloud.points.size())
    throw std::invalid_argument("filter: label count does not match point count");
  FilterResult out;
  const bool labeled = cloud.labeled();
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    bool inside = false;
    for (const OrientedBox& b : boxes) {
      if (point_in_box(p, b)) {
        inside = true;
        break;
      }
    }
    PointCloud& dst = inside ? out.removed : out.kept;
    dst.points.push_back(p);
    if (labeled) dst.labels.push_back(cloud.labels[i]);
  }
  return out;
}

}  // namespace motodom
