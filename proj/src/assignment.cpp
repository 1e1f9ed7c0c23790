#include "motodom/assignment.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>

namespace motodom {

MinCostFlow::MinCostFlow(int nodes) : graph_(static_cast<size_t>(nodes)) {}

int MinCostFlow::add_edge(int from, int to, int capacity, double cost) {
  if (cost < 0.0) throw std::invalid_argument("MinCostFlow: negative edge cost");
  auto& f = graph_.at(static_cast<size_t>(from));
  auto& t = graph_.at(static_cast<size_t>(to));
  f.push_back({to, static_cast<int>(t.size()), capacity, cost});
  t.push_back({from, static_cast<int>(f.size()) - 1, 0, -cost});
  edge_index_.emplace_back(from, static_cast<int>(f.size()) - 1);
  return static_cast<int>(edge_index_.size()) - 1;
}

int MinCostFlow::flow_on(int edge) const {
  auto [node, slot] = edge_index_.at(static_cast<size_t>(edge));
  return graph_[static_cast<size_t>(node)][static_cast<size_t>(slot)].flow;
}

MinCostFlow::Result MinCostFlow::solve(int source, int sink, int max_flow,
                                       double stop_cost) {
  const size_t n = graph_.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> potential(n, 0.0);
  std::vector<double> dist(n);
  std::vector<int> prev_node(n), prev_slot(n);
  Result result;

  using Item = std::pair<double, int>;
  while (result.flow < max_flow) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(prev_node.begin(), prev_node.end(), -1);
    dist[static_cast<size_t>(source)] = 0.0;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
      auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[static_cast<size_t>(u)]) continue;
      const auto& edges = graph_[static_cast<size_t>(u)];
      for (size_t i = 0; i < edges.size(); ++i) {
        const Edge& e = edges[i];
        if (e.capacity - e.flow <= 0) continue;
        // Reduced costs are non-negative up to rounding.
        double reduced = std::max(0.0, e.cost + potential[static_cast<size_t>(u)] -
                                           potential[static_cast<size_t>(e.to)]);
        double nd = d + reduced;
        if (nd < dist[static_cast<size_t>(e.to)]) {
          dist[static_cast<size_t>(e.to)] = nd;
          prev_node[static_cast<size_t>(e.to)] = u;
          prev_slot[static_cast<size_t>(e.to)] = static_cast<int>(i);
          heap.emplace(nd, e.to);
        }
      }
    }
    if (dist[static_cast<size_t>(sink)] == inf) break;
    for (size_t v = 0; v < n; ++v) {
      if (dist[v] < inf) potential[v] += dist[v];
    }
    const double path_cost =
        potential[static_cast<size_t>(sink)] - potential[static_cast<size_t>(source)];
    if (path_cost >= stop_cost) break;

    int push = max_flow - result.flow;
    for (int v = sink; v != source; v = prev_node[static_cast<size_t>(v)]) {
      const Edge& e = graph_[static_cast<size_t>(prev_node[static_cast<size_t>(v)])]
                            [static_cast<size_t>(prev_slot[static_cast<size_t>(v)])];
      push = std::min(push, e.capacity - e.flow);
    }
    for (int v = sink; v != source; v = prev_node[static_cast<size_t>(v)]) {
      Edge& e = graph_[static_cast<size_t>(prev_node[static_cast<size_t>(v)])]
                      [static_cast<size_t>(prev_slot[static_cast<size_t>(v)])];
      e.flow += push;
      graph_[static_cast<size_t>(v)][static_cast<size_t>(e.rev)].flow -= push;
    }
    result.flow += push;
    result.cost += push * path_cost;
  }
  return result;
}

Assignment associate(const MatchMatrix& m) {
  const int rows = m.rows();
  const int cols = m.cols();
  Assignment out;

  // Nodes: source, detections, tracks, sink.
  const int source = 0;
  const int sink = rows + cols + 1;
  MinCostFlow flow(rows + cols + 2);
  for (int i = 0; i < rows; ++i) flow.add_edge(source, 1 + i, 1, 0.0);
  for (int j = 0; j < cols; ++j) flow.add_edge(1 + rows + j, sink, 1, 0.0);

  struct Candidate {
    int edge, det, track;
  };
  std::vector<Candidate> candidates;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double s = m.scores(i, j);
      if (s > 0.0) {
        int e = flow.add_edge(1 + i, 1 + rows + j, 1, 1.0 - std::min(s, 1.0));
        candidates.push_back({e, i, j});
      }
    }
  }
  flow.solve(source, sink, std::min(rows, cols), 1.0);

  std::vector<bool> det_used(static_cast<size_t>(rows), false);
  std::vector<bool> track_used(static_cast<size_t>(cols), false);
  for (const Candidate& c : candidates) {
    if (flow.flow_on(c.edge) > 0) {
      out.matches.emplace_back(c.det, c.track);
      out.total_score += m.scores(c.det, c.track);
      det_used[static_cast<size_t>(c.det)] = true;
      track_used[static_cast<size_t>(c.track)] = true;
    }
  }
  std::sort(out.matches.begin(), out.matches.end());
  for (int i = 0; i < rows; ++i)
    if (!det_used[static_cast<size_t>(i)]) out.unmatched_detections.push_back(i);
  for (int j = 0; j < cols; ++j)
    if (!track_used[static_cast<size_t>(j)]) out.unmatched_tracks.push_back(j);
  return out;
}

}  // namespace motodom
