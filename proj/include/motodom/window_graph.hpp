#pragma once

// Sliding-window factor graph over ego states, object poses and object pose
// changes, solved by damped Gauss-Newton on the manifold.
//
// Topology per frame k:
//   - one ego state, linked to k-1 by odometry (and IMU + bias walk factors);
//   - initialized static tracks: an observation factor onto the track's
//     single pose node;
//   - initialized dynamic tracks: a pose node at k with an observation
//     factor; if the track has a node at k-1, a pose-change node at k and a
//     ternary motion factor; if a pose-change node exists at k-1, a smooth
//     factor between the two pose changes.
// Sliding drops the oldest frame and replaces its information with priors at
// current estimates on the new oldest ego state (and on static nodes left
// without factors). Pose-change nodes whose motion factor referenced the
// dropped frame go with it, so smooth factors never cross the boundary.

#include "motodom/factors.hpp"
#include "motodom/tracker.hpp"

#include <compare>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

namespace motodom {

enum class FactorKind { Prior, Odometry, Observation, Motion, Smooth, Imu, BiasWalk };
std::string_view to_string(FactorKind k);

enum class NodeKind { Ego, Object, PoseChange };

/// Frame sentinel of a static track's unique pose node.
constexpr int kStaticFrame = -1;

struct NodeKey {
  NodeKind kind = NodeKind::Ego;
  int track = -1;
  int frame = 0;

  static NodeKey ego(int frame) { return {NodeKind::Ego, -1, frame}; }
  static NodeKey object(int track, int frame) { return {NodeKind::Object, track, frame}; }
  static NodeKey static_object(int track) { return {NodeKind::Object, track, kStaticFrame}; }
  static NodeKey pose_change(int track, int frame) {
    return {NodeKind::PoseChange, track, frame};
  }
  bool is_static() const { return kind == NodeKind::Object && frame == kStaticFrame; }
  auto operator<=>(const NodeKey&) const = default;
};

struct ImuBlock {
  std::vector<ImuSample> samples;
  Preintegrated pre;
  NoiseModel noise;
};

struct Factor {
  FactorKind kind = FactorKind::Prior;
  std::vector<NodeKey> keys;
  Pose measurement;          // odometry, observation and pose priors
  EgoState ego_prior;        // ego priors
  std::shared_ptr<ImuBlock> imu;
  NoiseModel noise;

  bool touches(const NodeKey& k) const;
};

struct ObjectObservation {
  int track_id = -1;
  Pose detection;  // sensor frame
};

struct FrameInput {
  int frame = 0;
  double timestamp = 0.0;
  std::optional<EgoState> initial;    // required for the first frame
  std::optional<Pose> odometry;       // T^{k-1}_k, required afterwards
  std::vector<ImuSample> imu;         // samples over (k-1, k]; may be empty
  std::vector<ObjectObservation> observations;
};

struct GraphConfig {
  int window = 5;
  NoiseConfig noise;
  bool use_imu = true;
  double reintegration_threshold = kReintegrationThreshold;
  double v_max = 60.0;  // m/s, sanity bound on pose-change translation
};

struct SolverConfig {
  int max_iterations = 50;
  double relative_decrease = 1e-8;
  double min_step = 1e-10;
  double lambda_init = 1e-6;
  double lambda_max = 1e8;
};

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  std::map<FactorKind, double> cost_by_kind;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, SolveReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const SolveReport& report() const { return report_; }

 private:
  SolveReport report_;
};

struct PoseRecord {
  int track_id = -1;
  int frame = 0;
  Pose pose;
};

/// Estimates leaving the window with the oldest frame.
struct Marginalized {
  int frame = 0;
  double timestamp = 0.0;
  EgoState ego;
  std::vector<PoseRecord> objects;       // world pose of each object observed at `frame`
  std::vector<PoseRecord> pose_changes;  // pose-change nodes dropped with it
};

class WindowGraph {
 public:
  explicit WindowGraph(GraphConfig config = {});

  /// Appends frame k. Associations must reference live tracks of `tracker`;
  /// only initialized tracks get nodes. Throws std::invalid_argument on an
  /// unknown or dead track id and std::logic_error when the window is full.
  void add_frame(const FrameInput& input, const Tracker& tracker);

  SolveReport optimize(const SolverConfig& config = {});

  /// Requires a full window.
  Marginalized slide();
  /// Pops every remaining frame, oldest first.
  std::vector<Marginalized> flush();

  bool full() const { return static_cast<int>(ego_.size()) >= config_.window; }
  bool empty() const { return ego_.empty(); }
  int ego_count() const { return static_cast<int>(ego_.size()); }
  std::vector<int> frames() const;
  int newest_frame() const;
  const EgoState& ego(int frame) const;
  std::optional<Pose> node(const NodeKey& key) const;
  bool is_fixed(const NodeKey& key) const;
  int object_node_count() const;
  int pose_change_count() const;
  int factor_count(FactorKind kind) const;
  int factor_count() const { return static_cast<int>(factors_.size()); }
  const std::vector<Factor>& factors() const { return factors_; }

  double cost() const;
  std::map<FactorKind, double> cost_by_kind() const;

  /// Line-oriented dump: one node or factor per line.
  void dump(std::ostream& os) const;

  const GraphConfig& config() const { return config_; }

 private:
  struct ObjectNode {
    Pose pose;
    bool fixed = false;
  };
  struct TrackBook {
    MotionState motion = MotionState::Static;
  };

  GraphConfig config_;
  std::map<int, EgoState> ego_;
  std::map<int, double> stamps_;
  std::map<NodeKey, ObjectNode> nodes_;
  std::vector<Factor> factors_;
  std::map<int, TrackBook> books_;

  void add_observation(int frame, const ObjectObservation& obs, const Track& track);
  void remove_node_and_factors(const NodeKey& key);
  Marginalized pop_oldest(bool install_priors);
  void prune_dead_static(const Tracker& tracker);
};

}  // namespace motodom
