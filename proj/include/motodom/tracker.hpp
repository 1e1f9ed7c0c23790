#pragma once

// Sliding-window 3D multi-object tracker: cubic trajectory prediction,
// distance-based matching scores, min-cost-flow association, lifecycle and
// static/dynamic classification.

#include "motodom/assignment.hpp"
#include "motodom/geom.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace motodom {

enum class ObjectClass { Vehicle, Pedestrian, Cyclist };

std::string_view to_string(ObjectClass c);
/// Throws std::invalid_argument for unknown names.
ObjectClass parse_object_class(std::string_view name);

struct Detection {
  Pose pose_sensor;  // T^L_{k,O_j}
  Vec3 dims = Vec3::Ones();  // length, width, height (m)
  ObjectClass label = ObjectClass::Vehicle;
  double score = 1.0;
  double timestamp = 0.0;
  int truth_id = -1;  // evaluation fixtures only; never used for tracking
};

struct TrackSample {
  int frame = 0;
  double timestamp = 0.0;
  Pose world;
};

/// Per-axis polynomial in (t - origin), coefficients lowest order first.
struct TrajectoryPolynomial {
  double origin = 0.0;
  int order = 0;
  std::array<Eigen::Vector4d, 3> coeffs{Eigen::Vector4d::Zero(), Eigen::Vector4d::Zero(),
                                        Eigen::Vector4d::Zero()};

  Vec3 evaluate(double t) const;
};

/// Least-squares fit per translation axis over the last <= window samples,
/// order min(3, samples - 1), time origin at the oldest sample used.
TrajectoryPolynomial fit_trajectory(std::span<const TrackSample> history, int window);

enum class Lifecycle { Tentative, Initialized, Dead };
enum class MotionState { Static, Dynamic };

struct Track {
  int id = -1;
  ObjectClass label = ObjectClass::Vehicle;
  std::vector<TrackSample> history;
  Vec3 dims = Vec3::Ones();
  int hits = 0;
  int misses = 0;
  int updates = 0;  // total associated detections, for the dims average
  Lifecycle lifecycle = Lifecycle::Tentative;
  MotionState motion = MotionState::Static;
  TrajectoryPolynomial poly;

  bool alive() const { return lifecycle != Lifecycle::Dead; }
  bool initialized() const { return lifecycle == Lifecycle::Initialized; }
  const TrackSample& last() const { return history.back(); }
  /// Polynomial position at t.
  Vec3 predict(double t) const { return poly.evaluate(t); }
  /// Polynomial position with the last observed rotation held.
  Pose predict_pose(double t) const { return {last().world.rotation, predict(t)}; }
};

/// Endpoint displacement over the last <= window samples divided by the
/// elapsed time; dynamic iff strictly greater than v_thres. Tracks with a
/// single sample are static.
MotionState classify_motion(const Track& track, double v_thres, int window);
double window_speed(const Track& track, int window);

/// psi = 1 - d/alpha when d < d_thres (per track), 0 otherwise.
MatchMatrix score_matrix(std::span<const Vec3> detections, std::span<const Vec3> predictions,
                         double alpha, std::span<const double> d_thres);
MatchMatrix score_matrix(std::span<const Vec3> detections, std::span<const Vec3> predictions,
                         double alpha, double d_thres);

struct TrackerConfig {
  int window = 5;
  double alpha = 100.0;
  double d_thres = 2.0;            // initialized tracks (m)
  double tentative_factor = 2.0;   // tentative tracks gate at factor * d_thres
  double v_thres = 1.0;            // m/s
  int max_misses = 2;              // dead on the next consecutive miss
  int init_hits = 5;               // consecutive frames to initialize
};

struct TrackAssociation {
  int detection = -1;
  int track_id = -1;
};

struct StepResult {
  std::vector<TrackAssociation> associations;  // includes newly spawned tracks
  std::vector<int> spawned;                    // track ids created this step
  std::vector<int> died;                       // track ids killed this step
};

class Tracker {
 public:
  explicit Tracker(TrackerConfig config = {});

  /// Lifts detections to world with `ego`, associates, updates lifecycles,
  /// spawns tentative tracks, refits and reclassifies. Timestamps must
  /// increase strictly between calls.
  StepResult step(std::span<const Detection> detections, const Pose& ego, double t,
                  int frame);

  const std::vector<Track>& tracks() const { return tracks_; }
  const std::vector<Track>& retired() const { return retired_; }
  /// Live track by id, or nullptr.
  const Track* find(int id) const;
  const TrackerConfig& config() const { return config_; }

 private:
  TrackerConfig config_;
  std::vector<Track> tracks_;
  std::vector<Track> retired_;
  int next_id_ = 0;
  std::optional<double> last_time_;

  void refresh(Track& t) const;
};

}  // namespace motodom
