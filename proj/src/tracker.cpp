#include "motodom/tracker.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <stdexcept>

namespace motodom {

std::string_view to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::Vehicle: return "vehicle";
    case ObjectClass::Pedestrian: return "pedestrian";
    case ObjectClass::Cyclist: return "cyclist";
  }
  return "vehicle";
}

ObjectClass parse_object_class(std::string_view name) {
  if (name == "vehicle" || name == "car") return ObjectClass::Vehicle;
  if (name == "pedestrian") return ObjectClass::Pedestrian;
  if (name == "cyclist") return ObjectClass::Cyclist;
  throw std::invalid_argument("unknown object class '" + std::string(name) + "'");
}

Vec3 TrajectoryPolynomial::evaluate(double t) const {
  const double tau = t - origin;
  Vec3 out;
  for (int axis = 0; axis < 3; ++axis) {
    const auto& c = coeffs[static_cast<size_t>(axis)];
    out[axis] = ((c[3] * tau + c[2]) * tau + c[1]) * tau + c[0];
  }
  return out;
}

TrajectoryPolynomial fit_trajectory(std::span<const TrackSample> history, int window) {
  if (history.empty()) throw std::invalid_argument("fit_trajectory: empty history");
  const size_t n = std::min(history.size(), static_cast<size_t>(std::max(window, 1)));
  auto used = history.subspan(history.size() - n);
  TrajectoryPolynomial poly;
  poly.origin = used.front().timestamp;
  poly.order = std::min(3, static_cast<int>(n) - 1);
  const int cols = poly.order + 1;

  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), cols);
  Eigen::MatrixXd b(static_cast<Eigen::Index>(n), 3);
  for (size_t i = 0; i < n; ++i) {
    const double tau = used[i].timestamp - poly.origin;
    double p = 1.0;
    for (int k = 0; k < cols; ++k) {
      a(static_cast<Eigen::Index>(i), k) = p;
      p *= tau;
    }
    b.row(static_cast<Eigen::Index>(i)) = used[i].world.translation.transpose();
  }
  Eigen::MatrixXd x = a.colPivHouseholderQr().solve(b);
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::Vector4d c = Eigen::Vector4d::Zero();
    c.head(cols) = x.col(axis);
    poly.coeffs[static_cast<size_t>(axis)] = c;
  }
  return poly;
}

double window_speed(const Track& track, int window) {
  const auto& h = track.history;
  if (h.size() < 2) return 0.0;
  const size_t n = std::min(h.size(), static_cast<size_t>(std::max(window, 2)));
  const TrackSample& oldest = h[h.size() - n];
  const TrackSample& newest = h.back();
  const double elapsed = newest.timestamp - oldest.timestamp;
  if (!(elapsed > 0.0)) return 0.0;
  return (newest.world.translation - oldest.world.translation).norm() / elapsed;
}

MotionState classify_motion(const Track& track, double v_thres, int window) {
  if (track.history.size() < 2) return MotionState::Static;
  return window_speed(track, window) > v_thres ? MotionState::Dynamic : MotionState::Static;
}

MatchMatrix score_matrix(std::span<const Vec3> detections, std::span<const Vec3> predictions,
                         double alpha, std::span<const double> d_thres) {
  if (d_thres.size() != predictions.size())
    throw std::invalid_argument("score_matrix: one threshold per track required");
  MatchMatrix m;
  m.scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(detections.size()),
                                   static_cast<Eigen::Index>(predictions.size()));
  for (size_t i = 0; i < detections.size(); ++i) {
    for (size_t j = 0; j < predictions.size(); ++j) {
      const double d = (detections[i] - predictions[j]).norm();
      if (d < d_thres[j]) {
        m.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            std::clamp(1.0 - d / alpha, 0.0, 1.0);
      }
    }
  }
  return m;
}

MatchMatrix score_matrix(std::span<const Vec3> detections, std::span<const Vec3> predictions,
                         double alpha, double d_thres) {
  std::vector<double> thresholds(predictions.size(), d_thres);
  return score_matrix(detections, predictions, alpha, thresholds);
}

Tracker::Tracker(TrackerConfig config) : config_(config) {}

const Track* Tracker::find(int id) const {
  auto it = std::find_if(tracks_.begin(), tracks_.end(),
                         [id](const Track& t) { return t.id == id; });
  return it == tracks_.end() ? nullptr : &*it;
}

void Tracker::refresh(Track& t) const {
  t.poly = fit_trajectory(t.history, config_.window);
  t.motion = classify_motion(t, config_.v_thres, config_.window);
}

StepResult Tracker::step(std::span<const Detection> detections, const Pose& ego, double t,
                         int frame) {
  if (last_time_ && !(t > *last_time_))
    throw std::invalid_argument("Tracker::step: timestamps must increase");
  last_time_ = t;

  StepResult result;
  std::vector<Pose> world;
  world.reserve(detections.size());
  std::vector<Vec3> positions;
  for (const Detection& d : detections) {
    world.push_back(ego * d.pose_sensor);
    positions.push_back(world.back().translation);
  }

  std::vector<Vec3> predictions;
  std::vector<double> thresholds;
  for (const Track& tr : tracks_) {
    predictions.push_back(tr.predict(t));
    thresholds.push_back(tr.initialized() ? config_.d_thres
                                          : config_.d_thres * config_.tentative_factor);
  }
  MatchMatrix m = score_matrix(positions, predictions, config_.alpha, thresholds);
  for (size_t i = 0; i < detections.size(); ++i) {
    for (size_t j = 0; j < tracks_.size(); ++j) {
      if (detections[i].label != tracks_[j].label)
        m.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0.0;
    }
  }
  const Assignment assignment = associate(m);

  for (auto [di, tj] : assignment.matches) {
    Track& tr = tracks_[static_cast<size_t>(tj)];
    const Detection& d = detections[static_cast<size_t>(di)];
    tr.history.push_back({frame, t, world[static_cast<size_t>(di)]});
    ++tr.updates;
    tr.dims += (d.dims - tr.dims) / static_cast<double>(tr.updates);
    tr.hits += 1;
    tr.misses = 0;
    if (tr.hits >= config_.init_hits) tr.lifecycle = Lifecycle::Initialized;
    refresh(tr);
    result.associations.push_back({di, tr.id});
  }
  for (int tj : assignment.unmatched_tracks) {
    Track& tr = tracks_[static_cast<size_t>(tj)];
    tr.misses += 1;
    tr.hits = 0;
    if (tr.misses > config_.max_misses) {
      tr.lifecycle = Lifecycle::Dead;
      result.died.push_back(tr.id);
    }
  }

  // Retire dead tracks, keeping order stable for the survivors.
  auto dead_begin = std::stable_partition(tracks_.begin(), tracks_.end(),
                                          [](const Track& tr) { return tr.alive(); });
  std::move(dead_begin, tracks_.end(), std::back_inserter(retired_));
  tracks_.erase(dead_begin, tracks_.end());

  for (int di : assignment.unmatched_detections) {
    const Detection& d = detections[static_cast<size_t>(di)];
    Track tr;
    tr.id = next_id_++;
    tr.label = d.label;
    tr.dims = d.dims;
    tr.updates = 1;
    tr.hits = 1;
    tr.history.push_back({frame, t, world[static_cast<size_t>(di)]});
    if (tr.hits >= config_.init_hits) tr.lifecycle = Lifecycle::Initialized;
    refresh(tr);
    result.associations.push_back({di, tr.id});
    result.spawned.push_back(tr.id);
    tracks_.push_back(std::move(tr));
  }
  std::sort(result.associations.begin(), result.associations.end(),
            [](const TrackAssociation& a, const TrackAssociation& b) {
              return a.detection < b.detection;
            });
  return result;
}

}  // namespace motodom
