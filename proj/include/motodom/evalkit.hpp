#pragma once

// Trajectory and tracking metrics: ATE RMSE, rotated-box 3D IoU, MOTP and
// TP ratio.

#include "motodom/dynfilter.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace motodom {

struct StampedPose {
  double t = 0.0;
  Pose pose;
};
using Trajectory = std::vector<StampedPose>;

enum class Alignment { None, Se3 };

struct AteResult {
  double ate_t = 0.0;  // m
  double ate_r = 0.0;  // rad
  int matched = 0;
};

/// Pairs each estimate with the nearest ground-truth stamp within
/// `tolerance` (default: half the median ground-truth spacing). With
/// Alignment::Se3 a closed-form rigid transform is applied to the estimate
/// first. It minimizes the squared error of the positions and of points 1 m
/// along each pose axis; the axis points fix roll about straight paths.
/// Throws std::invalid_argument when nothing matches.
AteResult ate(const Trajectory& est, const Trajectory& gt, Alignment align,
              std::optional<double> tolerance = std::nullopt);

/// Volume IoU of two boxes rotated about the vertical axis only. Margins are
/// ignored. Throws std::invalid_argument on a tilted box.
double iou3d(const OrientedBox& a, const OrientedBox& b);

struct IdBox {
  int id = -1;
  OrientedBox box;
};

struct FrameBoxes {
  std::vector<IdBox> est;
  std::vector<IdBox> gt;
};

struct BoxMatch {
  int est = -1;  // index into FrameBoxes::est
  int gt = -1;   // index into FrameBoxes::gt
  double iou = 0.0;
};

/// Greedy one-to-one matching by descending IoU, keeping IoU >= iou_thres.
std::vector<BoxMatch> match_frame(const FrameBoxes& frame, double iou_thres);

/// Mean IoU over all matches of all frames; nullopt without matches.
std::optional<double> motp(std::span<const FrameBoxes> frames, double iou_thres);

constexpr double kTpIouThreshold = 0.25;

/// Fraction of ground-truth frames on which the track's box reaches
/// iou_thres. Both maps are keyed by frame. Throws on an empty gt_track.
double tp_ratio(const std::map<int, OrientedBox>& track,
                const std::map<int, OrientedBox>& gt_track,
                double iou_thres = kTpIouThreshold);

struct TrackMetrics {
  int track_id = -1;
  int truth_id = -1;
  int frames = 0;
  double ate_t = 0.0;
  double ate_r = 0.0;
  double tp = 0.0;
};

struct MetricReport {
  double ate_t = 0.0;
  double ate_r = 0.0;
  std::optional<double> motp;
  std::optional<double> tp;
  std::vector<TrackMetrics> per_track;
};

}  // namespace motodom
