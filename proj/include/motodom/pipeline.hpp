#pragma once

// Frame loop over a simulated scenario: tracking, point filtering, scan
// matching stand-in, sliding-window optimization and evaluation.

#include "motodom/evalkit.hpp"
#include "motodom/simworld.hpp"
#include "motodom/tracker.hpp"
#include "motodom/window_graph.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace motodom {

/// odom-only: odometry and IMU factors, no filtering, no objects.
/// allfilt: removes points in every current detection box, no objects.
/// dynafilt: removes points in predicted boxes of dynamic tracks, no objects.
/// joint: dynafilt plus object nodes and factors.
enum class Mode { OdomOnly, AllFilt, DynaFilt, Joint };

std::string_view to_string(Mode m);
/// Throws std::invalid_argument for unknown names.
Mode parse_mode(std::string_view name);

struct NoiseOverrides {
  std::optional<double> odometry_t, odometry_r;
  std::optional<double> observation_t, observation_r;
  std::optional<double> motion_t, motion_r;
  std::optional<double> smooth_t, smooth_r;
};

struct RunConfig {
  std::string scenario = "s1";  // fixture name or YAML path
  Mode mode = Mode::Joint;
  int window = 5;
  double alpha = 100.0;
  double d_thres = 2.0;
  double v_thres = 1.0;
  double margin = kDefaultBoxMargin;
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  NoiseOverrides noise;
  SolverConfig solver;
  std::string output_dir;  // empty: nothing written
};

/// Estimator noise matched to the scenario's sensor model.
NoiseConfig estimator_noise(const Scenario& s, const NoiseOverrides& o = {});

struct FrameTiming {
  int frame = 0;
  double tracking_ms = 0.0;
  double filtering_ms = 0.0;
  double optimization_ms = 0.0;
};

struct TimingSummary {
  double tracking_ms = 0.0;
  double filtering_ms = 0.0;
  double optimization_ms = 0.0;
};

/// Mean per-frame wall time of each stage.
TimingSummary timing(const std::vector<FrameTiming>& frames);

struct FilterStats {
  std::size_t moving_total = 0;
  std::size_t moving_removed = 0;
  std::size_t static_total = 0;
  std::size_t static_kept = 0;

  double moving_removed_ratio() const;
  double static_retained_ratio() const;
  /// Moving-object share of the kept points.
  double ghost() const;
};

struct VelocitySample {
  int frame = 0;
  double t = 0.0;
  std::optional<double> estimated;  // from optimized pose-change nodes
  std::optional<double> raw;        // differencing lifted detections
  double truth = 0.0;
};

struct RunResult {
  std::string scenario;
  Mode mode = Mode::Joint;
  std::uint64_t seed = 0;

  Trajectory ego_est;
  Trajectory ego_gt;
  AteResult ego_ate;

  std::map<int, int> track_truth;            // track id -> ground-truth id
  std::map<int, Trajectory> object_est;      // by track id
  std::map<int, Trajectory> object_raw;      // detections lifted by ego_est
  std::map<int, Trajectory> object_gt;       // truth of the mapped object
  std::map<int, Trajectory> object_detections;  // sensor-frame detections behind object_est
  std::optional<AteResult> object_ate;
  std::optional<AteResult> raw_object_ate;
  MetricReport objects;

  std::map<int, std::vector<VelocitySample>> velocity;  // by track id
  FilterStats filter;
  std::vector<FrameTiming> frame_timing;
  TimingSummary timing;
  std::set<FactorKind> factor_kinds;
  int max_factors = 0;
};

RunResult run_pipeline(const RunConfig& config);
RunResult run_pipeline(const Scenario& scenario, const RunConfig& config);

/// Pooled object ATE (no alignment) of r's detections lifted to the world
/// by `ego` instead of r's own ego estimate. With the ego of a run without
/// object factors this is the loosely coupled baseline.
std::optional<AteResult> lifted_object_ate(const RunResult& r, const Trajectory& ego,
                                           double frame_rate);

/// metrics.txt style: one `key = value` per line.
std::string format_metrics(const RunResult& r);

/// Writes ego/object trajectories, metrics.{txt,json}, timing.csv and
/// velocity_<id>.csv into `dir` (created if needed).
void write_outputs(const RunResult& r, const std::string& dir);

}  // namespace motodom
