#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include <vector>

#include "rgrl/autonet/tape.hpp"
#include "rgrl/config.hpp"

namespace rgrl::test {

inline ScenarioConfig tiny_single_node() {
  ScenarioConfig c = apply_scenario(ScenarioConfig{}, Scenario::single_node);
  c.n_users = 6;
  c.slices_min = 3;
  c.slices_max = 3;
  for (auto t : kServiceTypes) c.service(t).min_users = 2;
  return c;
}

inline ScenarioConfig small_coop(int nodes, int users_per_node) {
  ScenarioConfig c;
  c.n_nodes = nodes;
  c.n_users = nodes * users_per_node;
  c.slices_min = 1;
  c.slices_max = 2;
  c.max_neighbors = std::min(2, nodes);
  return c;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

/// Central difference of f with respect to x (restored afterwards).
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-5) {
  const double x0 = x;
  x = x0 + h;
  const double up = f();
  x = x0 - h;
  const double down = f();
  x = x0;
  return (up - down) / (2.0 * h);
}

/// Largest relative gap between each p.grad entry and a central difference of
/// `loss`; gradients must already hold the analytic values.
inline double max_fd_error(const std::function<double()>& loss, const std::vector<autonet::Parameter*>& params,
                           double h = 1e-5) {
  double worst = 0.0;
  for (auto* p : params)
    for (Index k = 0; k < p->value.size(); ++k) {
      const double numeric = central_difference(loss, p->value.data()[k], h);
      const double analytic = p->grad.data()[k];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  return worst;
}

}  // namespace rgrl::test
