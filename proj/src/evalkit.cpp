#include "motodom/evalkit.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace motodom {

namespace {

constexpr double kAlignLever = 1.0;  // m

double default_tolerance(const Trajectory& gt) {
  if (gt.size() < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> gaps;
  for (size_t i = 1; i < gt.size(); ++i) gaps.push_back(gt[i].t - gt[i - 1].t);
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<long>(gaps.size() / 2), gaps.end());
  return 0.5 * gaps[gaps.size() / 2];
}

const StampedPose* nearest(const Trajectory& gt, double t, double tol) {
  auto it = std::lower_bound(gt.begin(), gt.end(), t,
                             [](const StampedPose& p, double v) { return p.t < v; });
  const StampedPose* best = nullptr;
  double best_dt = tol;
  auto consider = [&](Trajectory::const_iterator c) {
    if (c == gt.end()) return;
    const double dt = std::abs(c->t - t);
    if (dt <= best_dt) {
      best_dt = dt;
      best = &*c;
    }
  };
  consider(it);
  if (it != gt.begin()) consider(std::prev(it));
  return best;
}

using Polygon = std::vector<Eigen::Vector2d>;

Polygon footprint(const OrientedBox& b) {
  if (std::abs(b.rotation(2, 2) - 1.0) > 1e-6)
    throw std::invalid_argument("iou3d: boxes must be rotated about z only");
  const double yaw = std::atan2(b.rotation(1, 0), b.rotation(0, 0));
  const Eigen::Vector2d ax(std::cos(yaw), std::sin(yaw));
  const Eigen::Vector2d ay(-std::sin(yaw), std::cos(yaw));
  const Eigen::Vector2d c = b.center.head<2>();
  const double hx = 0.5 * b.dims.x(), hy = 0.5 * b.dims.y();
  // Counter-clockwise.
  return {c + hx * ax + hy * ay, c - hx * ax + hy * ay, c - hx * ax - hy * ay,
          c + hx * ax - hy * ay};
}

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

// Sutherland-Hodgman against a convex counter-clockwise clip polygon.
Polygon clip(const Polygon& subject, const Polygon& clipper) {
  Polygon out = subject;
  for (size_t i = 0; i < clipper.size() && !out.empty(); ++i) {
    const Eigen::Vector2d a = clipper[i];
    const Eigen::Vector2d b = clipper[(i + 1) % clipper.size()];
    const Eigen::Vector2d edge = b - a;
    Polygon in = std::move(out);
    out.clear();
    for (size_t j = 0; j < in.size(); ++j) {
      const Eigen::Vector2d p = in[j];
      const Eigen::Vector2d q = in[(j + 1) % in.size()];
      const double sp = cross(edge, p - a);
      const double sq = cross(edge, q - a);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double s = sp / (sp - sq);
        out.push_back(p + s * (q - p));
      }
    }
  }
  return out;
}

double area(const Polygon& poly) {
  double a = 0.0;
  for (size_t i = 0; i < poly.size(); ++i) a += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * std::abs(a);
}

}  // namespace

AteResult ate(const Trajectory& est, const Trajectory& gt, Alignment align,
              std::optional<double> tolerance) {
  const double tol = tolerance ? *tolerance : default_tolerance(gt);
  std::vector<std::pair<const StampedPose*, const StampedPose*>> pairs;
  for (const StampedPose& e : est) {
    if (const StampedPose* g = nearest(gt, e.t, tol)) pairs.emplace_back(&e, g);
  }
  if (pairs.empty()) throw std::invalid_argument("ate: no matching timestamps");

  Pose correction;
  if (align == Alignment::Se3) {
    // Positions plus points one unit along each pose's axes, so that
    // rotation about a straight trajectory is still determined.
    const Eigen::Index n = static_cast<Eigen::Index>(pairs.size());
    Eigen::Matrix3Xd src(3, 4 * n);
    Eigen::Matrix3Xd dst(3, 4 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Pose& e = pairs[static_cast<size_t>(i)].first->pose;
      const Pose& g = pairs[static_cast<size_t>(i)].second->pose;
      src.col(4 * i) = e.translation;
      dst.col(4 * i) = g.translation;
      for (int a = 0; a < 3; ++a) {
        src.col(4 * i + 1 + a) = e.translation + kAlignLever * e.rotation.col(a);
        dst.col(4 * i + 1 + a) = g.translation + kAlignLever * g.rotation.col(a);
      }
    }
    const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
    correction = {orthonormalize(t.topLeftCorner<3, 3>()), t.topRightCorner<3, 1>()};
  }

  AteResult out;
  double st = 0.0, sr = 0.0;
  for (const auto& [e, g] : pairs) {
    const Pose aligned = correction * e->pose;
    st += (aligned.translation - g->pose.translation).squaredNorm();
    const double angle = rotation_angle(g->pose.rotation.transpose() * aligned.rotation);
    sr += angle * angle;
  }
  const double n = static_cast<double>(pairs.size());
  out.ate_t = std::sqrt(st / n);
  out.ate_r = std::sqrt(sr / n);
  out.matched = static_cast<int>(pairs.size());
  return out;
}

double iou3d(const OrientedBox& a, const OrientedBox& b) {
  const Polygon pa = footprint(a);
  const Polygon pb = footprint(b);
  const double base = area(clip(pa, pb));
  const double za0 = a.center.z() - 0.5 * a.dims.z(), za1 = a.center.z() + 0.5 * a.dims.z();
  const double zb0 = b.center.z() - 0.5 * b.dims.z(), zb1 = b.center.z() + 0.5 * b.dims.z();
  const double height = std::max(0.0, std::min(za1, zb1) - std::max(za0, zb0));
  const double inter = base * height;
  const double va = a.dims.prod();
  const double vb = b.dims.prod();
  const double uni = va + vb - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<BoxMatch> match_frame(const FrameBoxes& frame, double iou_thres) {
  std::vector<BoxMatch> candidates;
  for (size_t i = 0; i < frame.est.size(); ++i) {
    for (size_t j = 0; j < frame.gt.size(); ++j) {
      const double v = iou3d(frame.est[i].box, frame.gt[j].box);
      if (v >= iou_thres && v > 0.0)
        candidates.push_back({static_cast<int>(i), static_cast<int>(j), v});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const BoxMatch& x, const BoxMatch& y) { return x.iou > y.iou; });
  std::vector<bool> est_used(frame.est.size(), false), gt_used(frame.gt.size(), false);
  std::vector<BoxMatch> out;
  for (const BoxMatch& c : candidates) {
    if (est_used[static_cast<size_t>(c.est)] || gt_used[static_cast<size_t>(c.gt)]) continue;
    est_used[static_cast<size_t>(c.est)] = true;
    gt_used[static_cast<size_t>(c.gt)] = true;
    out.push_back(c);
  }
  return out;
}

std::optional<double> motp(std::span<const FrameBoxes> frames, double iou_thres) {
  double sum = 0.0;
  int count = 0;
  for (const FrameBoxes& f : frames) {
    for (const BoxMatch& m : match_frame(f, iou_thres)) {
      sum += m.iou;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

double tp_ratio(const std::map<int, OrientedBox>& track,
                const std::map<int, OrientedBox>& gt_track, double iou_thres) {
  if (gt_track.empty()) throw std::invalid_argument("tp_ratio: empty ground truth");
  int hits = 0;
  for (const auto& [frame, gt] : gt_track) {
    auto it = track.find(frame);
    if (it != track.end() && iou3d(it->second, gt) >= iou_thres) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gt_track.size());
}

}  // namespace motodom
