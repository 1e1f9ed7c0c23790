#include "motodom/window_graph.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace motodom {

std::string_view to_string(FactorKind k) {
  switch (k) {
    case FactorKind::Prior: return "prior";
    case FactorKind::Odometry: return "odometry";
    case FactorKind::Observation: return "observation";
    case FactorKind::Motion: return "motion";
    case FactorKind::Smooth: return "smooth";
    case FactorKind::Imu: return "imu";
    case FactorKind::BiasWalk: return "bias_walk";
  }
  return "unknown";
}

bool Factor::touches(const NodeKey& k) const {
  return std::find(keys.begin(), keys.end(), k) != keys.end();
}

namespace {

int node_dim(const NodeKey& k) { return k.kind == NodeKind::Ego ? kEgoDim : kPoseDim; }

void write_pose(std::ostream& os, const Pose& p) {
  const Eigen::Quaterniond q = p.quaternion();
  os << p.translation.x() << ' ' << p.translation.y() << ' ' << p.translation.z() << ' '
     << q.w() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z();
}

void write_key(std::ostream& os, const NodeKey& k) {
  switch (k.kind) {
    case NodeKind::Ego: os << "e" << k.frame; break;
    case NodeKind::Object:
      if (k.is_static())
        os << "o" << k.track << ":static";
      else
        os << "o" << k.track << ":" << k.frame;
      break;
    case NodeKind::PoseChange: os << "d" << k.track << ":" << k.frame; break;
  }
}

struct Evaluation {
  Eigen::VectorXd residual;  // whitened
  std::vector<std::pair<NodeKey, Eigen::MatrixXd>> jacobians;  // whitened
};

void reintegrate(ImuBlock& blk, const Vec3& bg, const Vec3& ba, const ImuNoise& noise) {
  blk.pre = preintegrate(blk.samples, bg, ba, noise);
  blk.noise = NoiseModel::from_covariance(blk.pre.covariance);
}

}  // namespace

WindowGraph::WindowGraph(GraphConfig config) : config_(std::move(config)) {
  if (config_.window < 2) throw std::invalid_argument("window must hold at least 2 frames");
}

std::vector<int> WindowGraph::frames() const {
  std::vector<int> out;
  for (const auto& [f, _] : ego_) out.push_back(f);
  return out;
}

int WindowGraph::newest_frame() const {
  if (ego_.empty()) throw std::logic_error("empty window");
  return ego_.rbegin()->first;
}

const EgoState& WindowGraph::ego(int frame) const {
  auto it = ego_.find(frame);
  if (it == ego_.end()) throw std::out_of_range("no ego state for frame " + std::to_string(frame));
  return it->second;
}

std::optional<Pose> WindowGraph::node(const NodeKey& key) const {
  if (key.kind == NodeKind::Ego) {
    auto it = ego_.find(key.frame);
    if (it == ego_.end()) return std::nullopt;
    return it->second.pose;
  }
  auto it = nodes_.find(key);
  if (it == nodes_.end()) return std::nullopt;
  return it->second.pose;
}

bool WindowGraph::is_fixed(const NodeKey& key) const {
  auto it = nodes_.find(key);
  return it != nodes_.end() && it->second.fixed;
}

int WindowGraph::object_node_count() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const auto& kv) {
    return kv.first.kind == NodeKind::Object;
  }));
}

int WindowGraph::pose_change_count() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const auto& kv) {
    return kv.first.kind == NodeKind::PoseChange;
  }));
}

int WindowGraph::factor_count(FactorKind kind) const {
  return static_cast<int>(std::count_if(factors_.begin(), factors_.end(),
                                        [kind](const Factor& f) { return f.kind == kind; }));
}

void WindowGraph::add_frame(const FrameInput& input, const Tracker& tracker) {
  // Validate associations before touching any state.
  for (const ObjectObservation& obs : input.observations) {
    const Track* t = tracker.find(obs.track_id);
    if (t == nullptr || !t->alive())
      throw std::invalid_argument("association to unknown track " +
                                  std::to_string(obs.track_id));
  }
  if (full()) throw std::logic_error("window full; slide before adding a frame");

  const int k = input.frame;
  if (ego_.empty()) {
    if (!input.initial) throw std::invalid_argument("first frame needs an initial state");
    ego_[k] = *input.initial;
    Factor prior;
    prior.kind = FactorKind::Prior;
    prior.keys = {NodeKey::ego(k)};
    prior.ego_prior = *input.initial;
    prior.noise = config_.noise.ego_prior();
    factors_.push_back(std::move(prior));
  } else {
    const int prev_frame = newest_frame();
    if (k != prev_frame + 1)
      throw std::invalid_argument("frames must be contiguous: expected " +
                                  std::to_string(prev_frame + 1));
    if (!input.odometry) throw std::invalid_argument("odometry required after the first frame");
    const EgoState& prev = ego_.at(prev_frame);
    EgoState next = prev;
    next.pose = prev.pose * *input.odometry;

    Factor odo;
    odo.kind = FactorKind::Odometry;
    odo.keys = {NodeKey::ego(prev_frame), NodeKey::ego(k)};
    odo.measurement = *input.odometry;
    odo.noise = config_.noise.odometry().measured_at(*input.odometry);
    factors_.push_back(std::move(odo));

    if (config_.use_imu && !input.imu.empty()) {
      auto blk = std::make_shared<ImuBlock>();
      blk->samples = input.imu;
      reintegrate(*blk, prev.gyro_bias, prev.accel_bias, config_.noise.imu);
      next.velocity = propagate(prev, blk->pre).velocity;

      Factor imu;
      imu.kind = FactorKind::Imu;
      imu.keys = {NodeKey::ego(prev_frame), NodeKey::ego(k)};
      imu.imu = blk;
      factors_.push_back(std::move(imu));

      Factor walk;
      walk.kind = FactorKind::BiasWalk;
      walk.keys = {NodeKey::ego(prev_frame), NodeKey::ego(k)};
      walk.noise = config_.noise.bias_walk(blk->pre.dt);
      factors_.push_back(std::move(walk));
    }
    ego_[k] = next;
  }
  stamps_[k] = input.timestamp;

  prune_dead_static(tracker);
  std::set<int> seen;
  for (const ObjectObservation& obs : input.observations) {
    const Track* t = tracker.find(obs.track_id);
    if (!t->initialized()) continue;
    if (!seen.insert(obs.track_id).second) continue;  // one observation per track and frame
    add_observation(k, obs, *t);
  }
}

void WindowGraph::add_observation(int k, const ObjectObservation& obs, const Track& track) {
  const int id = track.id;
  const Pose init = ego_.at(k).pose * obs.detection;
  auto book_it = books_.find(id);
  const bool known = book_it != books_.end();
  const MotionState previous = known ? book_it->second.motion : track.motion;

  Factor factor;
  factor.kind = FactorKind::Observation;
  factor.measurement = obs.detection;
  factor.noise = config_.noise.observation().measured_at(obs.detection);

  if (track.motion == MotionState::Static) {
    const NodeKey key = NodeKey::static_object(id);
    auto it = nodes_.find(key);
    if (it != nodes_.end() && it->second.fixed) {
      // A node frozen by an earlier static->dynamic switch describes an old
      // resting place; start over.
      remove_node_and_factors(key);
      it = nodes_.end();
    }
    if (it == nodes_.end()) nodes_[key] = {init, false};
    factor.keys = {NodeKey::ego(k), key};
    factors_.push_back(std::move(factor));
  } else {
    if (known && previous == MotionState::Static) {
      auto it = nodes_.find(NodeKey::static_object(id));
      if (it != nodes_.end()) it->second.fixed = true;
    }
    const NodeKey key = NodeKey::object(id, k);
    nodes_[key] = {init, false};
    factor.keys = {NodeKey::ego(k), key};
    factors_.push_back(std::move(factor));

    const NodeKey prev_key = NodeKey::object(id, k - 1);
    if (nodes_.count(prev_key) != 0) {
      Pose delta;
      const auto& h = track.history;
      if (h.size() >= 2) delta = h[h.size() - 2].world.inverse() * h.back().world;
      const double dt = stamps_.at(k) - stamps_.at(k - 1);
      if (delta.translation.norm() > config_.v_max * dt) delta = Pose::identity();
      const NodeKey change_key = NodeKey::pose_change(id, k);
      nodes_[change_key] = {delta, false};

      Factor motion;
      motion.kind = FactorKind::Motion;
      motion.keys = {prev_key, key, change_key};
      motion.noise = config_.noise.motion();
      factors_.push_back(std::move(motion));

      const NodeKey prev_change = NodeKey::pose_change(id, k - 1);
      if (nodes_.count(prev_change) != 0) {
        Factor smooth;
        smooth.kind = FactorKind::Smooth;
        smooth.keys = {prev_change, change_key};
        smooth.noise = config_.noise.smooth();
        factors_.push_back(std::move(smooth));
      }
    }
  }
  books_[id].motion = track.motion;
}

void WindowGraph::remove_node_and_factors(const NodeKey& key) {
  std::erase_if(factors_, [&](const Factor& f) { return f.touches(key); });
  nodes_.erase(key);
}

void WindowGraph::prune_dead_static(const Tracker& tracker) {
  std::vector<NodeKey> doomed;
  for (const auto& [key, node] : nodes_) {
    if (!key.is_static()) continue;
    const Track* t = tracker.find(key.track);
    if (t != nullptr && t->alive()) continue;
    const bool only_priors = std::all_of(factors_.begin(), factors_.end(), [&](const Factor& f) {
      return !f.touches(key) || f.kind == FactorKind::Prior;
    });
    if (only_priors) doomed.push_back(key);
  }
  for (const NodeKey& key : doomed) {
    remove_node_and_factors(key);
    books_.erase(key.track);
  }
}

// ---- evaluation ---------------------------------------------------------------

namespace {

class Evaluator {
 public:
  Evaluator(const std::map<int, EgoState>& ego, const std::map<NodeKey, Pose>& poses,
            const GraphConfig& cfg)
      : ego_(ego), poses_(poses), cfg_(cfg) {}

  const Pose& pose(const NodeKey& k) const {
    if (k.kind == NodeKind::Ego) return ego_.at(k.frame).pose;
    return poses_.at(k);
  }

  Evaluation evaluate(const Factor& f, bool with_jacobians) const {
    Evaluation out;
    switch (f.kind) {
      case FactorKind::Prior: {
        const NodeKey& k = f.keys[0];
        if (k.kind == NodeKind::Ego) {
          auto l = jacobians_prior(ego_.at(k.frame), f.ego_prior);
          out.residual = l.residual;
          if (with_jacobians) out.jacobians.emplace_back(k, l.d_state);
        } else {
          auto l = jacobians_prior(pose(k), f.measurement);
          out.residual = l.residual;
          if (with_jacobians) out.jacobians.emplace_back(k, l.d_state);
        }
        break;
      }
      case FactorKind::Odometry:
      case FactorKind::Observation: {
        auto l = linearize_between(pose(f.keys[0]), pose(f.keys[1]), f.measurement);
        out.residual = l.residual;
        if (with_jacobians) {
          out.jacobians.emplace_back(f.keys[0], embed(f.keys[0], l.d_a));
          out.jacobians.emplace_back(f.keys[1], embed(f.keys[1], l.d_b));
        }
        break;
      }
      case FactorKind::Motion: {
        auto l = linearize_between(pose(f.keys[0]), pose(f.keys[1]), pose(f.keys[2]));
        out.residual = l.residual;
        if (with_jacobians) {
          out.jacobians.emplace_back(f.keys[0], Eigen::MatrixXd(l.d_a));
          out.jacobians.emplace_back(f.keys[1], Eigen::MatrixXd(l.d_b));
          out.jacobians.emplace_back(f.keys[2], Eigen::MatrixXd(l.d_c));
        }
        break;
      }
      case FactorKind::Smooth: {
        auto l = jacobians_smooth(pose(f.keys[0]), pose(f.keys[1]));
        out.residual = l.residual;
        if (with_jacobians) {
          out.jacobians.emplace_back(f.keys[0], Eigen::MatrixXd(l.d_prev));
          out.jacobians.emplace_back(f.keys[1], Eigen::MatrixXd(l.d_curr));
        }
        break;
      }
      case FactorKind::Imu: return evaluate_imu(f, with_jacobians);
      case FactorKind::BiasWalk: {
        const EgoState& i = ego_.at(f.keys[0].frame);
        const EgoState& j = ego_.at(f.keys[1].frame);
        out.residual = residual_bias_walk(i, j);
        if (with_jacobians) {
          Eigen::MatrixXd ji = Eigen::MatrixXd::Zero(6, kEgoDim);
          Eigen::MatrixXd jj = Eigen::MatrixXd::Zero(6, kEgoDim);
          ji.block(0, 9, 6, 6) = -Eigen::MatrixXd::Identity(6, 6);
          jj.block(0, 9, 6, 6) = Eigen::MatrixXd::Identity(6, 6);
          out.jacobians.emplace_back(f.keys[0], ji);
          out.jacobians.emplace_back(f.keys[1], jj);
        }
        break;
      }
    }
    whiten(out, f.noise);
    return out;
  }

 private:
  const std::map<int, EgoState>& ego_;
  const std::map<NodeKey, Pose>& poses_;
  const GraphConfig& cfg_;

  static Eigen::MatrixXd embed(const NodeKey& k, const Mat6& j) {
    if (k.kind != NodeKind::Ego) return j;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(6, kEgoDim);
    out.leftCols(6) = j;
    return out;
  }

  static void whiten(Evaluation& e, const NoiseModel& noise) {
    const auto& l = noise.sqrt_information();
    e.residual = l * e.residual;
    for (auto& [_, j] : e.jacobians) j = l * j;
  }

  Evaluation evaluate_imu(const Factor& f, bool with_jacobians) const {
    ImuBlock& blk = *f.imu;
    const EgoState& i = ego_.at(f.keys[0].frame);
    const EgoState& j = ego_.at(f.keys[1].frame);
    if (!residual_imu(i, j, blk.pre, kGravity, cfg_.reintegration_threshold))
      reintegrate(blk, i.gyro_bias, i.accel_bias, cfg_.noise.imu);

    Evaluation out;
    ImuJacobians l = jacobians_imu(i, j, blk.pre);
    out.residual = l.residual;
    if (with_jacobians) {
      Eigen::MatrixXd ji = Eigen::MatrixXd::Zero(9, kEgoDim);
      Eigen::MatrixXd jj = Eigen::MatrixXd::Zero(9, kEgoDim);
      ji.leftCols(6) = l.d_pose_prev;
      ji.block(0, 6, 9, 3) = l.d_vel_prev;
      jj.leftCols(6) = l.d_pose_curr;
      jj.block(0, 6, 9, 3) = l.d_vel_curr;
      // Bias columns by central differences over re-integrated samples.
      constexpr double h = 1e-5;
      for (int d = 0; d < 6; ++d) {
        Vec3 bg = i.gyro_bias, ba = i.accel_bias;
        Vec3& b = d < 3 ? bg : ba;
        b[d % 3] += h;
        Preintegrated plus = preintegrate_mean(blk.samples, bg, ba);
        b[d % 3] -= 2.0 * h;
        Preintegrated minus = preintegrate_mean(blk.samples, bg, ba);
        ji.col(9 + d) = (jacobians_imu(i, j, plus).residual -
                         jacobians_imu(i, j, minus).residual) / (2.0 * h);
      }
      out.jacobians.emplace_back(f.keys[0], ji);
      out.jacobians.emplace_back(f.keys[1], jj);
    }
    whiten(out, blk.noise);
    return out;
  }
};

}  // namespace

double WindowGraph::cost() const {
  double total = 0.0;
  for (const auto& [_, c] : cost_by_kind()) total += c;
  return total;
}

std::map<FactorKind, double> WindowGraph::cost_by_kind() const {
  std::map<NodeKey, Pose> poses;
  for (const auto& [k, n] : nodes_) poses.emplace(k, n.pose);
  Evaluator ev(ego_, poses, config_);
  std::map<FactorKind, double> out;
  for (const Factor& f : factors_) out[f.kind] += ev.evaluate(f, false).residual.squaredNorm();
  return out;
}

SolveReport WindowGraph::optimize(const SolverConfig& cfg) {
  SolveReport report;

  // Variable ordering over free nodes.
  std::map<NodeKey, int> offset;
  int dim = 0;
  for (const auto& [f, _] : ego_) {
    offset[NodeKey::ego(f)] = dim;
    dim += kEgoDim;
  }
  for (const auto& [k, n] : nodes_) {
    if (n.fixed) continue;
    offset[k] = dim;
    dim += node_dim(k);
  }

  std::map<NodeKey, Pose> poses;
  for (const auto& [k, n] : nodes_) poses.emplace(k, n.pose);

  auto total_cost = [&](const std::map<int, EgoState>& e, const std::map<NodeKey, Pose>& p) {
    Evaluator ev(e, p, config_);
    double c = 0.0;
    for (const Factor& f : factors_) c += ev.evaluate(f, false).residual.squaredNorm();
    return c;
  };

  double cost = total_cost(ego_, poses);
  report.initial_cost = cost;
  double lambda = cfg.lambda_init;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    report.iterations = iter + 1;
    if (!(cost > 1e-30) || dim == 0) {
      report.converged = true;
      break;
    }
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    {
      Evaluator ev(ego_, poses, config_);
      for (const Factor& f : factors_) {
        Evaluation e = ev.evaluate(f, true);
        for (size_t a = 0; a < e.jacobians.size(); ++a) {
          auto ia = offset.find(e.jacobians[a].first);
          if (ia == offset.end()) continue;  // fixed node
          const Eigen::MatrixXd& ja = e.jacobians[a].second;
          g.segment(ia->second, ja.cols()) += ja.transpose() * e.residual;
          for (size_t b = 0; b < e.jacobians.size(); ++b) {
            auto ib = offset.find(e.jacobians[b].first);
            if (ib == offset.end()) continue;
            const Eigen::MatrixXd& jb = e.jacobians[b].second;
            h.block(ia->second, ib->second, ja.cols(), jb.cols()) += ja.transpose() * jb;
          }
        }
      }
    }

    bool stop = false;
    while (true) {
      Eigen::MatrixXd a = h;
      a.diagonal().array() += lambda * (h.diagonal().array().abs() + 1e-9);
      Eigen::LLT<Eigen::MatrixXd> llt(a);
      if (llt.info() != Eigen::Success) {
        lambda *= 10.0;
        if (lambda > cfg.lambda_max) {
          report.final_cost = cost;
          report.cost_by_kind = cost_by_kind();
          throw DivergenceError("normal equations not positive definite", report);
        }
        continue;
      }
      const Eigen::VectorXd step = llt.solve(-g);
      if (step.norm() < cfg.min_step) {
        report.converged = true;
        stop = true;
        break;
      }
      std::map<int, EgoState> ego_trial = ego_;
      std::map<NodeKey, Pose> pose_trial = poses;
      for (const auto& [key, off] : offset) {
        if (key.kind == NodeKind::Ego) {
          ego_trial[key.frame] = retract(ego_[key.frame], step.segment<kEgoDim>(off));
        } else {
          Pose p = poses.at(key) * exp(step.segment<kPoseDim>(off));
          p.rotation = orthonormalize(p.rotation);
          pose_trial[key] = p;
        }
      }
      const double trial = total_cost(ego_trial, pose_trial);
      if (trial <= cost) {
        const double decrease = (cost - trial) / std::max(cost, 1e-300);
        ego_ = std::move(ego_trial);
        poses = std::move(pose_trial);
        cost = trial;
        lambda = std::max(lambda / 10.0, 1e-12);
        if (decrease < cfg.relative_decrease) {
          report.converged = true;
          stop = true;
        }
        break;
      }
      lambda *= 10.0;
      if (lambda > cfg.lambda_max) {
        // No descent left at any damping: a local minimum.
        report.converged = true;
        stop = true;
        break;
      }
    }
    if (stop) break;
  }

  for (auto& [k, n] : nodes_) n.pose = poses.at(k);
  report.final_cost = cost;
  report.cost_by_kind = cost_by_kind();
  return report;
}

// ---- sliding ------------------------------------------------------------------

Marginalized WindowGraph::pop_oldest(bool install_priors) {
  const int f0 = ego_.begin()->first;
  Marginalized m;
  m.frame = f0;
  m.timestamp = stamps_.at(f0);
  m.ego = ego_.at(f0);

  const NodeKey ego_key = NodeKey::ego(f0);
  for (const Factor& f : factors_) {
    if (f.kind == FactorKind::Observation && f.keys[0] == ego_key) {
      const NodeKey& obj = f.keys[1];
      m.objects.push_back({obj.track, f0, nodes_.at(obj).pose});
    }
  }

  std::set<NodeKey> removed{ego_key};
  for (const auto& [k, n] : nodes_) {
    if (k.kind == NodeKind::Object && k.frame == f0) removed.insert(k);
    if (k.kind == NodeKind::PoseChange && (k.frame == f0 || k.frame == f0 + 1)) {
      removed.insert(k);
      m.pose_changes.push_back({k.track, k.frame, n.pose});
    }
  }
  std::erase_if(factors_, [&](const Factor& f) {
    return std::any_of(f.keys.begin(), f.keys.end(),
                       [&](const NodeKey& k) { return removed.count(k) != 0; });
  });
  for (const NodeKey& k : removed) nodes_.erase(k);
  ego_.erase(f0);
  stamps_.erase(f0);

  if (install_priors && !ego_.empty()) {
    const int oldest = ego_.begin()->first;
    Factor prior;
    prior.kind = FactorKind::Prior;
    prior.keys = {NodeKey::ego(oldest)};
    prior.ego_prior = ego_.begin()->second;
    prior.noise = config_.noise.ego_prior();
    factors_.push_back(std::move(prior));
  }

  std::vector<NodeKey> orphans;
  for (auto& [k, n] : nodes_) {
    if (!k.is_static()) continue;
    const bool referenced = std::any_of(factors_.begin(), factors_.end(),
                                        [&](const Factor& f) { return f.touches(k); });
    if (referenced) continue;
    if (n.fixed || !install_priors) {
      orphans.push_back(k);
      continue;
    }
    Factor prior;
    prior.kind = FactorKind::Prior;
    prior.keys = {k};
    prior.measurement = n.pose;
    prior.noise = config_.noise.object_prior();
    factors_.push_back(std::move(prior));
  }
  for (const NodeKey& k : orphans) nodes_.erase(k);
  return m;
}

Marginalized WindowGraph::slide() {
  if (!full()) throw std::logic_error("slide requires a full window");
  return pop_oldest(true);
}

std::vector<Marginalized> WindowGraph::flush() {
  std::vector<Marginalized> out;
  while (!ego_.empty()) out.push_back(pop_oldest(false));
  nodes_.clear();
  factors_.clear();
  books_.clear();
  return out;
}

// ---- dump ---------------------------------------------------------------------

void WindowGraph::dump(std::ostream& os) const {
  for (const auto& [f, s] : ego_) {
    os << "ego " << f << ' ' << stamps_.at(f) << ' ';
    write_pose(os, s.pose);
    os << ' ' << s.velocity.x() << ' ' << s.velocity.y() << ' ' << s.velocity.z() << ' '
       << s.gyro_bias.x() << ' ' << s.gyro_bias.y() << ' ' << s.gyro_bias.z() << ' '
       << s.accel_bias.x() << ' ' << s.accel_bias.y() << ' ' << s.accel_bias.z() << '\n';
  }
  for (const auto& [k, n] : nodes_) {
    os << (k.kind == NodeKind::Object ? "object " : "change ");
    write_key(os, k);
    os << ' ';
    write_pose(os, n.pose);
    if (n.fixed) os << " fixed";
    os << '\n';
  }
  for (const Factor& f : factors_) {
    os << "factor " << to_string(f.kind);
    for (const NodeKey& k : f.keys) {
      os << ' ';
      write_key(os, k);
    }
    os << '\n';
  }
}

}  // namespace motodom
