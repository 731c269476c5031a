#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "rgrl/config.hpp"
#include "rgrl/matrix.hpp"
#include "rgrl/rng.hpp"
#include "rgrl/topology.hpp"

namespace rgrl {

/// One user and the static parameters of its task process.
struct UserProfile {
  int node = 0;
  int slice = 0;
  int slot = 0;  // position inside the node's padded user block
  ServiceType service = ServiceType::embb;
  double arrival_prob = 1.0;   // kappa
  double pareto_shape = 2.0;   // zeta
  double threshold_bits = 0.0;
  double latency_req_s = 0.0;
};

struct SliceInfo {
  ServiceType service = ServiceType::embb;
  std::vector<int> users;  // global user ids, contiguous slots
};

struct NodeInfo {
  std::vector<SliceInfo> slices;
  int first_user = 0;
  int n_users = 0;
};

/// Slice layout and user sets of every node. Fixed for the lifetime of an
/// environment; user positions are redrawn at each reset.
struct Population {
  std::vector<NodeInfo> nodes;
  std::vector<UserProfile> users;
  int max_users_per_node = 0;
  int max_slices = 0;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_users() const { return static_cast<int>(users.size()); }
};

/// Draws S_n, the slice service types and the user sets. The first
/// min(S_n, 3) slices of a node cover distinct service types; every slice
/// gets at least one user and every service type at least U_mini.
Population build_population(const ScenarioConfig& config, std::uint64_t seed);

/// Hybrid allocation a(t) = [c(t), z(t)]; every innermost vector is a simplex.
struct Action {
  std::vector<std::vector<double>> node_compute;               // c^n_j      [n][j]
  std::vector<std::vector<double>> slice_compute;              // c^{n,s}    [n][s]
  std::vector<std::vector<std::vector<double>>> user_compute;  // c^{n,s,u}  [n][s][k]
  std::vector<std::vector<double>> slice_rb;                   // z^{n,s}    [n][s]
  std::vector<std::vector<std::vector<double>>> user_rb;       // z^{n,s,u}  [n][s][k]
};

/// Uniform fractions in every group.
Action uniform_action(const Population& pop);
/// Throws std::invalid_argument on a shape mismatch, a negative entry or a
/// group whose sum is off by more than `tol`.
void check_action(const Action& action, const Population& pop, double tol = 1e-6);
/// Largest |sum - 1| over all groups.
double max_simplex_error(const Action& action);

/// Random draws consumed by one slot, one entry per user. Drawing them up
/// front keeps the random stream independent of the actions taken.
struct SlotDraws {
  std::vector<double> arrival_uniform;
  std::vector<double> size_uniform;
  std::vector<double> fading;  // exponential(1) power gains for the next slot
};

struct TaskSample {
  bool arrived = false;
  double size_bits = 0.0;
};

/// Bernoulli(kappa) arrival and inverse-CDF Pareto size
/// d = threshold * u^(-1/zeta). A sample never falls on the threshold itself.
TaskSample sample_task(const UserProfile& user, double arrival_uniform, double size_uniform);
double pareto_inverse_cdf(double threshold, double shape, double uniform);

/// Renormalizes one node's compute split over its neighbours (lambda mask).
/// Falls back to uniform over the neighbourhood when the masked row is all zero.
std::vector<double> masked_compute_shares(std::span<const double> adjacency_row,
                                          std::span<const double> fractions);

/// Computing speed from allocated frequency.
double compute_rate(double allocated_hz, double cycles_per_bit, RcOrientation orientation);

/// P_B h / (N0 W_B); the RB count cancels out of P = P_B Z over N0 Z W_B.
double snr(double gain, const LinkBudget& budget, double rb_bandwidth_hz);
double snr(double gain, double rbs, const LinkBudget& budget, double rb_bandwidth_hz);
double transmit_rate(double rbs, double rb_bandwidth_hz, double snr_value);

/// Per-user computing speed RC (bits/s): neighbour mask, edge-weighted node
/// capacity, then the slice and user splits.
std::vector<double> effective_compute(const Action& action, const Graph& graph,
                                      const Population& pop, const ScenarioConfig& config);

/// Per-user resource blocks Z^{n,s,u}.
std::vector<double> user_resource_blocks(const Action& action, const Population& pop,
                                         const ScenarioConfig& config);

/// Per-user transmit rate RT (bits/s) given the current channel gains.
std::vector<double> effective_rate(const Action& action, std::span<const double> gains,
                                   const Population& pop, const ScenarioConfig& config);

struct UserState {
  double cq_bits = 0.0;   // Q
  double tq_bits = 0.0;   // V
  double gain = 1.0;      // h
  double distance_m = 0.0;
  bool arrived = false;
  double task_bits = 0.0;
  std::vector<double> recent_tasks;  // newest first, length T
};

struct StepResult {
  double reward = 1.0;
  int satisfied = 0;
  int generated = 0;
  std::vector<double> latency_s;  // +inf when the bottleneck rate is zero with backlog
  std::vector<double> compute_rate;
  std::vector<double> transmit_rate;
};

/// Fixed-width padded per-node encoding of an Action and its simplex groups.
///
/// Node row layout: [c^n (max_nodes) | c^{n,s} (max_slices) | c^{n,s,u} (max_users)
///                   | z^{n,s} (max_slices) | z^{n,s,u} (max_users)].
/// Users occupy slots in slice order so every user-level group is contiguous.
/// In the non-cooperative scenario the c^n group of node n is the single
/// entry n, which pins c^n_j = 1{j = n} under any group-normalized decoding.
class ActionLayout {
 public:
  struct Span {
    int offset = 0;
    int length = 0;
  };

  ActionLayout(const Population& pop, int max_nodes, bool noncooperative);

  int n_nodes() const { return n_nodes_; }
  int width() const { return width_; }
  int max_nodes() const { return max_nodes_; }
  bool noncooperative() const { return noncooperative_; }
  const std::vector<Span>& groups(int node) const { return groups_[static_cast<std::size_t>(node)]; }
  const std::vector<std::vector<Span>>& all_groups() const { return groups_; }

  int node_compute_offset() const { return 0; }
  int slice_compute_offset() const { return max_nodes_; }
  int user_compute_offset() const { return max_nodes_ + max_slices_; }
  int slice_rb_offset() const { return max_nodes_ + max_slices_ + max_users_; }
  int user_rb_offset() const { return max_nodes_ + 2 * max_slices_ + max_users_; }

  /// N x width; unused entries are zero.
  Matrix encode(const Action& action) const;
  Action decode(const Matrix& encoded) const;
  Matrix uniform() const;

 private:
  std::vector<std::vector<int>> slice_sizes_;  // users per slice, per node
  int n_nodes_;
  int max_nodes_;
  int max_slices_;
  int max_users_;
  int width_;
  bool noncooperative_;
  std::vector<std::vector<Span>> groups_;
};

/// Discrete-time MDP over the queue model. Single writer: one step at a time.
class Environment {
 public:
  Environment(ScenarioConfig config, NodeLayout layout, Graph graph, Population population,
              std::uint64_t seed);

  /// Starts a new episode: redraws user distances and gains, clears queues.
  void reset();

  SlotDraws draw_slot();
  StepResult step(const Action& action);
  StepResult step(const Action& action, const SlotDraws& draws);

  /// N x F node features: per user slot log1p of [Q / scale, V / scale,
  /// h / h_mean, T_obs recent task sizes / scale], zero-padded to the
  /// declared user width.
  Matrix observe() const;
  int feature_width() const;

  const ScenarioConfig& config() const { return config_; }
  const NodeLayout& layout() const { return layout_; }
  const Graph& graph() const { return graph_; }
  const Population& population() const { return population_; }
  const std::vector<UserState>& users() const { return users_; }
  std::vector<UserState>& mutable_users() { return users_; }
  std::vector<double> gains() const;
  const LinkBudget& link_budget() const { return budget_; }
  double mean_gain() const { return mean_gain_; }

 private:
  ScenarioConfig config_;
  NodeLayout layout_;
  Graph graph_;
  Population population_;
  LinkBudget budget_;
  double mean_gain_ = 1.0;
  Rng rng_;
  std::vector<UserState> users_;
};

/// Expected d^-beta for a user drawn uniformly by area in the ring [a, b].
double ring_mean_gain(double ring_min_m, double ring_max_m, double pathloss_exponent);

/// Layout, graph and population for a scenario from one seed.
Environment make_environment(const ScenarioConfig& config, std::uint64_t structure_seed,
                             std::uint64_t dynamics_seed);

}  // namespace rgrl
