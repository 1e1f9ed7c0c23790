#include "motodom/pipeline.hpp"

#include "motodom/dynfilter.hpp"
#include "motodom/text_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace motodom {

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::OdomOnly: return "odom-only";
    case Mode::AllFilt: return "allfilt";
    case Mode::DynaFilt: return "dynafilt";
    case Mode::Joint: return "joint";
  }
  return "joint";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::OdomOnly, Mode::AllFilt, Mode::DynaFilt, Mode::Joint})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown mode '" + std::string(name) +
                              "' (expected odom-only, allfilt, dynafilt or joint)");
}

NoiseConfig estimator_noise(const Scenario& s, const NoiseOverrides& o) {
  NoiseConfig n;
  const NoiseSpec& sn = s.noise;
  const double odo_t = o.odometry_t.value_or(std::max(sn.odometry_sigma_t, 1e-4));
  const double odo_r = o.odometry_r.value_or(std::max(sn.odometry_sigma_r, 1e-5));
  const double obs_t = o.observation_t.value_or(std::max(sn.detection_sigma_t, 1e-3));
  const double obs_r = o.observation_r.value_or(std::max(sn.detection_sigma_yaw, 1e-3));
  n.odometry_sigma_t.setConstant(odo_t);
  n.odometry_sigma_r.setConstant(odo_r);
  n.observation_sigma_t.setConstant(obs_t);
  n.observation_sigma_r.setConstant(obs_r);
  n.motion_sigma_t.setConstant(o.motion_t.value_or(0.01));
  n.motion_sigma_r.setConstant(o.motion_r.value_or(0.005));
  n.smooth_sigma_t.setConstant(o.smooth_t.value_or(0.03));
  n.smooth_sigma_r.setConstant(o.smooth_r.value_or(0.005));
  n.imu = sn.imu;
  n.imu.gyro_density = std::max(n.imu.gyro_density, 1e-6);
  n.imu.accel_density = std::max(n.imu.accel_density, 1e-5);
  n.imu.gyro_walk = std::max(n.imu.gyro_walk, 1e-7);
  n.imu.accel_walk = std::max(n.imu.accel_walk, 1e-6);
  return n;
}

TimingSummary timing(const std::vector<FrameTiming>& frames) {
  TimingSummary out;
  if (frames.empty()) return out;
  for (const FrameTiming& f : frames) {
    out.tracking_ms += f.tracking_ms;
    out.filtering_ms += f.filtering_ms;
    out.optimization_ms += f.optimization_ms;
  }
  const double n = static_cast<double>(frames.size());
  out.tracking_ms /= n;
  out.filtering_ms /= n;
  out.optimization_ms /= n;
  return out;
}

double FilterStats::moving_removed_ratio() const {
  return moving_total == 0 ? 1.0
                           : static_cast<double>(moving_removed) / static_cast<double>(moving_total);
}

double FilterStats::static_retained_ratio() const {
  return static_total == 0 ? 1.0
                           : static_cast<double>(static_kept) / static_cast<double>(static_total);
}

double FilterStats::ghost() const {
  const double kept = static_cast<double>(static_kept + (moving_total - moving_removed));
  return kept == 0.0 ? 0.0 : static_cast<double>(moving_total - moving_removed) / kept;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

OrientedBox yaw_box(const Pose& p, const Vec3& dims) {
  return {p.translation, dims, rot_z(yaw_of(p.rotation)).rotation, 0.0};
}

struct ObjectKey {
  int track;
  int frame;
  auto operator<=>(const ObjectKey&) const = default;
};

class Recorder {
 public:
  void add(const Marginalized& m) {
    ego_[m.frame] = {m.timestamp, m.ego.pose};
    for (const PoseRecord& r : m.objects) objects_[{r.track_id, r.frame}] = r.pose;
    for (const PoseRecord& r : m.pose_changes) changes_[{r.track_id, r.frame}] = r.pose;
  }
  const std::map<int, StampedPose>& ego() const { return ego_; }
  const std::map<ObjectKey, Pose>& objects() const { return objects_; }
  const std::map<ObjectKey, Pose>& changes() const { return changes_; }

 private:
  std::map<int, StampedPose> ego_;
  std::map<ObjectKey, Pose> objects_;
  std::map<ObjectKey, Pose> changes_;
};

AteResult pooled(const std::vector<AteResult>& parts) {
  AteResult out;
  double st = 0.0, sr = 0.0;
  for (const AteResult& a : parts) {
    st += a.ate_t * a.ate_t * a.matched;
    sr += a.ate_r * a.ate_r * a.matched;
    out.matched += a.matched;
  }
  if (out.matched > 0) {
    out.ate_t = std::sqrt(st / out.matched);
    out.ate_r = std::sqrt(sr / out.matched);
  }
  return out;
}

}  // namespace

RunResult run_pipeline(const RunConfig& config) {
  Scenario s = resolve_scenario(config.scenario);
  return run_pipeline(s, config);
}

RunResult run_pipeline(const Scenario& scenario_in, const RunConfig& config) {
  Scenario scenario = scenario_in;
  if (config.seed) scenario.seed = *config.seed;
  if (config.window < 2) throw std::invalid_argument("window must be at least 2");
  if (config.margin < 0.0) throw std::invalid_argument("margin must be non-negative");
  const std::vector<FrameBundle> bundles = generate(scenario);

  RunResult result;
  result.scenario = scenario.name;
  result.mode = config.mode;
  result.seed = scenario.seed;

  TrackerConfig tcfg;
  tcfg.window = config.window;
  tcfg.alpha = config.alpha;
  tcfg.d_thres = config.d_thres;
  tcfg.v_thres = config.v_thres;
  Tracker tracker(tcfg);

  GraphConfig gcfg;
  gcfg.window = config.window;
  gcfg.noise = estimator_noise(scenario, config.noise);
  WindowGraph graph(gcfg);
  const bool joint = config.mode == Mode::Joint;

  Recorder recorder;
  std::map<ObjectKey, Detection> observed;  // detections behind object nodes
  std::map<int, std::map<int, int>> truth_votes;

  EgoState estimate;
  for (const FrameBundle& b : bundles) {
    FrameTiming ft;
    ft.frame = b.frame;
    FrameInput input;
    input.frame = b.frame;
    input.timestamp = b.timestamp;
    Pose predicted_ego;

    if (b.frame == 0) {
      EgoState init;
      init.pose = b.ego.pose;
      init.velocity = b.ego.velocity;
      input.initial = init;
      predicted_ego = init.pose;
    } else {
      const FrameBundle& prev = bundles[static_cast<size_t>(b.frame - 1)];
      auto t0 = Clock::now();
      const Preintegrated pre =
          preintegrate(b.imu, estimate.gyro_bias, estimate.accel_bias, gcfg.noise.imu);
      predicted_ego = propagate(estimate, pre).pose;
      std::vector<OrientedBox> boxes;
      switch (config.mode) {
        case Mode::OdomOnly: break;
        case Mode::AllFilt:
          for (const Detection& d : b.detections) boxes.push_back(detection_box(d, config.margin));
          break;
        case Mode::DynaFilt:
        case Mode::Joint:
          boxes = predict_boxes(tracker.tracks(), b.timestamp, predicted_ego, config.margin);
          break;
      }
      const FilterResult filtered = filter(b.cloud, boxes);
      ft.filtering_ms = ms_since(t0);

      for (size_t i = 0; i < b.cloud.labels.size(); ++i) {
        const int l = b.cloud.labels[i];
        const ObjectTruth* o = l == kBackgroundLabel ? nullptr : b.truth(l);
        if (o != nullptr && o->moving)
          ++result.filter.moving_total;
        else
          ++result.filter.static_total;
      }
      for (int l : filtered.kept.labels) {
        const ObjectTruth* o = l == kBackgroundLabel ? nullptr : b.truth(l);
        if (o == nullptr || !o->moving) ++result.filter.static_kept;
      }
      for (int l : filtered.removed.labels) {
        const ObjectTruth* o = l == kBackgroundLabel ? nullptr : b.truth(l);
        if (o != nullptr && o->moving) ++result.filter.moving_removed;
      }

      input.odometry = scan_match(scenario, prev, b, filtered.kept);
      input.imu = b.imu;
    }

    auto t1 = Clock::now();
    const StepResult step = tracker.step(b.detections, predicted_ego, b.timestamp, b.frame);
    ft.tracking_ms = ms_since(t1);
    for (const TrackAssociation& a : step.associations) {
      const Detection& d = b.detections[static_cast<size_t>(a.detection)];
      ++truth_votes[a.track_id][d.truth_id];
      if (joint) {
        input.observations.push_back({a.track_id, d.pose_sensor});
        observed[{a.track_id, b.frame}] = d;
      }
    }

    auto t2 = Clock::now();
    if (graph.full()) recorder.add(graph.slide());
    graph.add_frame(input, tracker);
    graph.optimize(config.solver);
    ft.optimization_ms = ms_since(t2);
    estimate = graph.ego(b.frame);
    for (const Factor& f : graph.factors()) result.factor_kinds.insert(f.kind);
    result.max_factors = std::max(result.max_factors, graph.factor_count());
    result.frame_timing.push_back(ft);
  }
  for (const Marginalized& m : graph.flush()) recorder.add(m);
  result.timing = timing(result.frame_timing);

  // ---- evaluation ----
  for (const FrameBundle& b : bundles) {
    auto it = recorder.ego().find(b.frame);
    if (it != recorder.ego().end()) result.ego_est.push_back(it->second);
    result.ego_gt.push_back({b.timestamp, b.ego.pose});
  }
  result.ego_ate = ate(result.ego_est, result.ego_gt, Alignment::Se3);

  for (const auto& [track, votes] : truth_votes) {
    int best = -1, best_count = 0;
    for (const auto& [truth, count] : votes) {
      if (count > best_count) {
        best = truth;
        best_count = count;
      }
    }
    if (best >= 0) result.track_truth[track] = best;
  }

  std::map<int, Vec3> track_dims;
  for (const Track& t : tracker.retired()) track_dims[t.id] = t.dims;
  for (const Track& t : tracker.tracks()) track_dims[t.id] = t.dims;

  std::map<int, std::map<int, OrientedBox>> est_boxes;  // frame -> track -> box
  for (const auto& [key, pose] : recorder.objects()) {
    auto mapped = result.track_truth.find(key.track);
    if (mapped == result.track_truth.end()) continue;
    const FrameBundle& b = bundles[static_cast<size_t>(key.frame)];
    const ObjectTruth* truth = b.truth(mapped->second);
    if (truth == nullptr) continue;
    const double t = b.timestamp;
    result.object_est[key.track].push_back({t, pose});
    result.object_gt[key.track].push_back({t, truth->pose});
    const Detection& d = observed.at(key);
    result.object_raw[key.track].push_back({t, recorder.ego().at(key.frame).pose * d.pose_sensor});
    result.object_detections[key.track].push_back({t, d.pose_sensor});
    est_boxes[key.frame][key.track] = yaw_box(pose, track_dims.at(key.track));
  }

  if (!result.object_est.empty()) {
    std::vector<AteResult> est_parts, raw_parts;
    const double tol = 0.25 / scenario.frame_rate;
    for (const auto& [track, traj] : result.object_est) {
      const AteResult e = ate(traj, result.object_gt.at(track), Alignment::None, tol);
      const AteResult r = ate(result.object_raw.at(track), result.object_gt.at(track),
                              Alignment::None, tol);
      est_parts.push_back(e);
      raw_parts.push_back(r);
      TrackMetrics tm;
      tm.track_id = track;
      tm.truth_id = result.track_truth.at(track);
      tm.frames = e.matched;
      tm.ate_t = e.ate_t;
      tm.ate_r = e.ate_r;
      result.objects.per_track.push_back(tm);
    }
    result.object_ate = pooled(est_parts);
    result.raw_object_ate = pooled(raw_parts);
    result.objects.ate_t = result.object_ate->ate_t;
    result.objects.ate_r = result.object_ate->ate_r;

    std::vector<FrameBoxes> frames;
    std::map<int, std::map<int, OrientedBox>> gt_by_object, est_by_object;
    for (const FrameBundle& b : bundles) {
      FrameBoxes fb;
      for (const ObjectTruth& o : b.objects) {
        if (!o.visible) continue;
        fb.gt.push_back({o.id, yaw_box(o.pose, o.dims)});
        gt_by_object[o.id][b.frame] = yaw_box(o.pose, o.dims);
      }
      auto it = est_boxes.find(b.frame);
      if (it != est_boxes.end()) {
        for (const auto& [track, box] : it->second) {
          fb.est.push_back({track, box});
          est_by_object[result.track_truth.at(track)].emplace(b.frame, box);
        }
      }
      frames.push_back(std::move(fb));
    }
    result.objects.motp = motp(frames, kTpIouThreshold);
    double tp_sum = 0.0;
    int tp_n = 0;
    std::map<int, double> tp_by_truth;
    for (const auto& [id, gt] : gt_by_object) {
      const double r = tp_ratio(est_by_object[id], gt, kTpIouThreshold);
      tp_by_truth[id] = r;
      tp_sum += r;
      ++tp_n;
    }
    if (tp_n > 0) result.objects.tp = tp_sum / tp_n;
    for (TrackMetrics& tm : result.objects.per_track) tm.tp = tp_by_truth[tm.truth_id];
  }

  // Speeds of dynamic objects: pose-change nodes vs. differenced detections.
  for (const auto& [key, change] : recorder.changes()) {
    auto mapped = result.track_truth.find(key.track);
    if (mapped == result.track_truth.end() || key.frame < 1) continue;
    const double dt = bundles[static_cast<size_t>(key.frame)].timestamp -
                      bundles[static_cast<size_t>(key.frame - 1)].timestamp;
    VelocitySample v;
    v.frame = key.frame;
    v.t = bundles[static_cast<size_t>(key.frame)].timestamp;
    v.estimated = change.translation.norm() / dt;
    const ObjectTruth* truth = bundles[static_cast<size_t>(key.frame)].truth(mapped->second);
    v.truth = truth != nullptr ? truth->velocity.norm() : 0.0;
    auto a = observed.find({key.track, key.frame - 1});
    auto b = observed.find({key.track, key.frame});
    if (a != observed.end() && b != observed.end()) {
      const Vec3 pa = recorder.ego().at(key.frame - 1).pose * a->second.pose_sensor.translation;
      const Vec3 pb = recorder.ego().at(key.frame).pose * b->second.pose_sensor.translation;
      v.raw = (pb - pa).norm() / dt;
    }
    result.velocity[key.track].push_back(v);
  }
  return result;
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::optional<AteResult> lifted_object_ate(const RunResult& r, const Trajectory& ego,
                                           double frame_rate) {
  const double tol = 0.25 / frame_rate;
  std::vector<AteResult> parts;
  for (const auto& [track, dets] : r.object_detections) {
    Trajectory lifted;
    for (const StampedPose& d : dets) {
      auto it = std::lower_bound(ego.begin(), ego.end(), d.t - tol,
                                 [](const StampedPose& a, double t) { return a.t < t; });
      if (it == ego.end() || std::abs(it->t - d.t) > tol) continue;
      lifted.push_back({d.t, it->pose * d.pose});
    }
    if (lifted.empty()) continue;
    parts.push_back(ate(lifted, r.object_gt.at(track), Alignment::None, tol));
  }
  if (parts.empty()) return std::nullopt;
  return pooled(parts);
}

std::string format_metrics(const RunResult& r) {
  std::ostringstream os;
  os << "scenario = " << r.scenario << '\n';
  os << "mode = " << to_string(r.mode) << '\n';
  os << "seed = " << r.seed << '\n';
  os << "frames = " << r.ego_est.size() << '\n';
  os << "ego_ate_t = " << num(r.ego_ate.ate_t) << '\n';
  os << "ego_ate_r = " << num(r.ego_ate.ate_r) << '\n';
  if (r.object_ate) {
    os << "object_ate_t = " << num(r.object_ate->ate_t) << '\n';
    os << "object_ate_r = " << num(r.object_ate->ate_r) << '\n';
    os << "raw_object_ate_t = " << num(r.raw_object_ate->ate_t) << '\n';
    os << "raw_object_ate_r = " << num(r.raw_object_ate->ate_r) << '\n';
  }
  if (r.objects.motp) os << "motp = " << num(*r.objects.motp) << '\n';
  if (r.objects.tp) os << "tp = " << num(*r.objects.tp) << '\n';
  os << "moving_points_removed = " << num(r.filter.moving_removed_ratio()) << '\n';
  os << "static_points_retained = " << num(r.filter.static_retained_ratio()) << '\n';
  os << "ghost_fraction = " << num(r.filter.ghost()) << '\n';
  os << "tracking_ms = " << num(r.timing.tracking_ms) << '\n';
  os << "filtering_ms = " << num(r.timing.filtering_ms) << '\n';
  os << "optimization_ms = " << num(r.timing.optimization_ms) << '\n';
  for (const TrackMetrics& t : r.objects.per_track) {
    os << "track." << t.track_id << ".truth = " << t.truth_id << '\n';
    os << "track." << t.track_id << ".frames = " << t.frames << '\n';
    os << "track." << t.track_id << ".ate_t = " << num(t.ate_t) << '\n';
    os << "track." << t.track_id << ".ate_r = " << num(t.ate_r) << '\n';
    os << "track." << t.track_id << ".tp = " << num(t.tp) << '\n';
  }
  return os.str();
}

void write_outputs(const RunResult& r, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  save_trajectory((root / "ego_est.txt").string(), r.ego_est);
  save_trajectory((root / "ego_gt.txt").string(), r.ego_gt);
  for (const auto& [track, traj] : r.object_est) {
    save_trajectory((root / ("obj_" + std::to_string(track) + "_est.txt")).string(), traj);
    save_trajectory((root / ("obj_" + std::to_string(track) + "_gt.txt")).string(),
                    r.object_gt.at(track));
  }

  auto open = [&](const std::string& name) {
    std::ofstream f(root / name);
    if (!f) throw std::runtime_error("cannot write " + (root / name).string());
    return f;
  };
  open("metrics.txt") << format_metrics(r);

  nlohmann::json j;
  j["scenario"] = r.scenario;
  j["mode"] = std::string(to_string(r.mode));
  j["seed"] = r.seed;
  j["ego"] = {{"ate_t", r.ego_ate.ate_t}, {"ate_r", r.ego_ate.ate_r}, {"frames", r.ego_ate.matched}};
  if (r.object_ate) {
    j["objects"] = {{"ate_t", r.object_ate->ate_t},
                    {"ate_r", r.object_ate->ate_r},
                    {"raw_ate_t", r.raw_object_ate->ate_t},
                    {"raw_ate_r", r.raw_object_ate->ate_r}};
    if (r.objects.motp) j["objects"]["motp"] = *r.objects.motp;
    if (r.objects.tp) j["objects"]["tp"] = *r.objects.tp;
    for (const TrackMetrics& t : r.objects.per_track) {
      j["tracks"].push_back({{"track", t.track_id},
                             {"truth", t.truth_id},
                             {"frames", t.frames},
                             {"ate_t", t.ate_t},
                             {"ate_r", t.ate_r},
                             {"tp", t.tp}});
    }
  }
  j["filter"] = {{"moving_removed", r.filter.moving_removed_ratio()},
                 {"static_retained", r.filter.static_retained_ratio()},
                 {"ghost", r.filter.ghost()}};
  j["timing_ms"] = {{"tracking", r.timing.tracking_ms},
                    {"filtering", r.timing.filtering_ms},
                    {"optimization", r.timing.optimization_ms}};
  open("metrics.json") << j.dump(2) << '\n';

  {
    std::ofstream f = open("timing.csv");
    f << "frame,tracking_ms,filtering_ms,optimization_ms\n";
    for (const FrameTiming& t : r.frame_timing)
      f << t.frame << ',' << num(t.tracking_ms) << ',' << num(t.filtering_ms) << ','
        << num(t.optimization_ms) << '\n';
  }
  for (const auto& [track, series] : r.velocity) {
    std::ofstream f = open("velocity_" + std::to_string(track) + ".csv");
    f << "frame,t,estimated,raw,truth\n";
    for (const VelocitySample& v : series) {
      f << v.frame << ',' << num(v.t) << ',' << (v.estimated ? num(*v.estimated) : "") << ','
        << (v.raw ? num(*v.raw) : "") << ',' << num(v.truth) << '\n';
    }
  }
}

}  // namespace motodom
