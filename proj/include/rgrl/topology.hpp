#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "rgrl/config.hpp"
#include "rgrl/matrix.hpp"

namespace rgrl {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Point& a, const Point& b);

/// Edge-node placement inside the d0 x d0 square plus the user ring geometry.
struct NodeLayout {
  std::vector<Point> positions;
  double area_m = 0.0;
  double coverage_radius_m = 0.0;
  double user_ring_min_m = 0.0;
  double user_ring_max_m = 0.0;

  int size() const { return static_cast<int>(positions.size()); }
};

/// Weighted undirected topology with self-connections.
///
/// `adjacency` holds lambda (binary, unit diagonal), `edge_weights` holds the
/// cooperation-cost weights delta, and `weighted_adjacency` is their
/// element-wise product. Unlinked pairs are zero in both weighted matrices.
struct Graph {
  int n_nodes = 0;
  int max_neighbors = 0;
  Matrix adjacency;
  Matrix edge_weights;
  Matrix weighted_adjacency;
};

/// D^{-1/2} A D^{-1/2}; `degree` keeps the diagonal of D.
struct PropagationOperator {
  Matrix matrix;
  Eigen::VectorXd degree;
};

/// Samples N node positions uniformly in the square. Deterministic in `seed`.
/// Throws ConfigError on N < 1 or an invalid ring geometry.
NodeLayout build_layout(const ScenarioConfig& config, std::uint64_t seed);

/// k-nearest-neighbour topology with k = min(A_max, N - 1), symmetrized by
/// union. Every node keeps its own k picks, so its off-diagonal degree lies in
/// [k, N - 1]; a node that is near to many others can exceed 2 * A_max.
/// delta = theta * d_min_edge / d for linked pairs, 1 on the diagonal.
Graph build_graph(const NodeLayout& layout, int max_neighbors, double coop_penalty);

/// Uses `graph.adjacency` (binary) or `graph.weighted_adjacency`.
PropagationOperator propagation_operator(const Graph& graph, GcnOperator which = GcnOperator::binary);
PropagationOperator propagation_operator(const Matrix& adjacency);

nlohmann::json to_json(const NodeLayout& layout, const Graph& graph);

}  // namespace rgrl
