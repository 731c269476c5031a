#include "rgrl/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rgrl/rng.hpp"

namespace rgrl {

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

NodeLayout build_layout(const ScenarioConfig& config, std::uint64_t seed) {
  if (config.n_nodes < 1) throw ConfigError("N: at least one edge node is required");
  if (!(config.area_m > 0.0)) throw ConfigError("d0_m: must be positive");
  if (!(config.user_ring_min_m >= 0.0 && config.user_ring_min_m < config.user_ring_max_m))
    throw ConfigError("d_min_m: need 0 <= d_min < d_max");
  if (config.user_ring_max_m > config.coverage_radius_m)
    throw ConfigError("d_max_m: must not exceed d_r_m");

  Rng rng(derive_seed(seed, "layout"));
  NodeLayout layout;
  layout.area_m = config.area_m;
  layout.coverage_radius_m = config.coverage_radius_m;
  layout.user_ring_min_m = config.user_ring_min_m;
  layout.user_ring_max_m = config.user_ring_max_m;
  layout.positions.reserve(static_cast<std::size_t>(config.n_nodes));
  for (int i = 0; i < config.n_nodes; ++i) {
    const double x = rng.uniform(0.0, config.area_m);
    const double y = rng.uniform(0.0, config.area_m);
    layout.positions.push_back({x, y});
  }
  return layout;
}

Graph build_graph(const NodeLayout& layout, int max_neighbors, double coop_penalty) {
  const int n = layout.size();
  if (n < 1) throw std::invalid_argument("build_graph: empty layout");
  if (max_neighbors < 0 || max_neighbors > n)
    throw std::invalid_argument("build_graph: A_max must lie in [0, N]");
  if (!(coop_penalty > 0.0 && coop_penalty <= 1.0))
    throw std::invalid_argument("build_graph: penalty factor must lie in (0, 1]");

  Graph g;
  g.n_nodes = n;
  g.max_neighbors = max_neighbors;
  g.adjacency = Matrix::Identity(n, n);

  const int k = std::min(max_neighbors, n - 1);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    order.erase(order.begin() + i);
    // ties broken by index for reproducibility
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return distance(layout.positions[i], layout.positions[a]) <
             distance(layout.positions[i], layout.positions[b]);
    });
    for (int r = 0; r < k; ++r) {
      g.adjacency(i, order[r]) = 1.0;
      g.adjacency(order[r], i) = 1.0;
    }
    order.resize(static_cast<std::size_t>(n));
  }

  // shortest edge actually present (zero-length edges excluded)
  double d_min_edge = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (g.adjacency(i, j) != 0.0) {
        const double d = distance(layout.positions[i], layout.positions[j]);
        if (d > 0.0) d_min_edge = std::min(d_min_edge, d);
      }

  g.edge_weights = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    g.edge_weights(i, i) = 1.0;
    for (int j = 0; j < n; ++j) {
      if (i == j || g.adjacency(i, j) == 0.0) continue;
      const double d = distance(layout.positions[i], layout.positions[j]);
      g.edge_weights(i, j) = d > 0.0 ? d_min_edge / d * coop_penalty : 1.0;
    }
  }
  g.weighted_adjacency = g.adjacency.cwiseProduct(g.edge_weights);
  return g;
}

PropagationOperator propagation_operator(const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols())
    throw std::invalid_argument("propagation_operator: adjacency must be square");
  PropagationOperator op;
  op.degree = adjacency.rowwise().sum().transpose();
  if ((op.degree.array() <= 0.0).any())
    throw std::invalid_argument("propagation_operator: every node needs a positive degree");
  const Eigen::VectorXd inv_sqrt = op.degree.array().rsqrt();
  op.matrix = inv_sqrt.asDiagonal() * adjacency * inv_sqrt.asDiagonal();
  return op;
}

PropagationOperator propagation_operator(const Graph& graph, GcnOperator which) {
  return propagation_operator(which == GcnOperator::binary ? graph.adjacency
                                                           : graph.weighted_adjacency);
}

namespace {
nlohmann::json rows_json(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}
}  // namespace

nlohmann::json to_json(const NodeLayout& layout, const Graph& graph) {
  auto positions = nlohmann::json::array();
  for (const auto& p : layout.positions) positions.push_back({p.x, p.y});
  return {{"n_nodes", graph.n_nodes},
          {"max_neighbors", graph.max_neighbors},
          {"positions", positions},
          {"adjacency", rows_json(graph.adjacency)},
          {"edge_weights", rows_json(graph.edge_weights)},
          {"weighted_adjacency", rows_json(graph.weighted_adjacency)}};
}

}  // namespace rgrl
