#pragma once

// Min-cost flow by successive shortest paths with node potentials, and the
// detection-to-track assignment built on it.

#include <Eigen/Core>

#include <limits>
#include <utility>
#include <vector>

namespace motodom {

class MinCostFlow {
 public:
  explicit MinCostFlow(int nodes);

  /// Returns the edge id. Costs must be non-negative.
  int add_edge(int from, int to, int capacity, double cost);

  struct Result {
    int flow = 0;
    double cost = 0.0;
  };

  /// Augments along shortest s-t paths until `max_flow` is reached, no path
  /// remains, or the next path would cost at least `stop_cost`.
  Result solve(int source, int sink, int max_flow,
               double stop_cost = std::numeric_limits<double>::infinity());

  int flow_on(int edge) const;

 private:
  struct Edge {
    int to;
    int rev;
    int capacity;
    double cost;
    int flow = 0;
  };
  std::vector<std::vector<Edge>> graph_;
  std::vector<std::pair<int, int>> edge_index_;  // (node, slot)
};

/// Rows are detections, columns are tracks; entries are scores in [0, 1].
struct MatchMatrix {
  Eigen::MatrixXd scores;
  int rows() const { return static_cast<int>(scores.rows()); }
  int cols() const { return static_cast<int>(scores.cols()); }
};

struct Assignment {
  std::vector<std::pair<int, int>> matches;  // (detection, track), sorted
  std::vector<int> unmatched_detections;
  std::vector<int> unmatched_tracks;
  double total_score = 0.0;
};

/// Maximum-total-score assignment over entries with score > 0. Solved as
/// min-cost flow with edge cost 1 - score; an augmenting path of cost c adds
/// 1 - c to the total score, so augmentation stops once c >= 1.
Assignment associate(const MatchMatrix& m);

}  // namespace motodom
