#include "rgrl/environment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rgrl {

Population build_population(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, "population"));
  Population pop;
  pop.max_slices = config.slices_max;
  const int n = config.n_nodes;
  const int base = config.n_users / n;
  const int extra = config.n_users % n;
  int next_user = 0;
  int widest = 0;

  for (int node = 0; node < n; ++node) {
    const int node_users = base + (node < extra ? 1 : 0);
    const int n_slices = rng.uniform_int(config.slices_min, config.slices_max);
    std::vector<ServiceType> types;
    for (int s = 0; s < n_slices; ++s)
      types.push_back(s < 3 ? kServiceTypes[static_cast<std::size_t>(s)]
                            : kServiceTypes[static_cast<std::size_t>(rng.uniform_int(0, 2))]);

    std::vector<int> counts(static_cast<std::size_t>(n_slices), 1);
    int assigned = n_slices;
    for (ServiceType t : kServiceTypes) {
      std::vector<int> of_type;
      for (int s = 0; s < n_slices; ++s)
        if (types[static_cast<std::size_t>(s)] == t) of_type.push_back(s);
      if (of_type.empty()) continue;
      const int need = config.service(t).min_users - static_cast<int>(of_type.size());
      for (int i = 0; i < need; ++i) {
        const int pick = of_type[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(of_type.size()) - 1))];
        ++counts[static_cast<std::size_t>(pick)];
        ++assigned;
      }
    }
    if (assigned > node_users)
      throw ConfigError("U: node " + std::to_string(node) + " has " + std::to_string(node_users) +
                        " users but its slices and U_mini require " + std::to_string(assigned));
    for (int i = assigned; i < node_users; ++i)
      ++counts[static_cast<std::size_t>(rng.uniform_int(0, n_slices - 1))];

    NodeInfo info;
    info.first_user = next_user;
    info.n_users = node_users;
    int slot = 0;
    for (int s = 0; s < n_slices; ++s) {
      SliceInfo slice;
      slice.service = types[static_cast<std::size_t>(s)];
      const auto& prof = config.service(slice.service);
      for (int k = 0; k < counts[static_cast<std::size_t>(s)]; ++k) {
        UserProfile u;
        u.node = node;
        u.slice = s;
        u.slot = slot++;
        u.service = slice.service;
        u.arrival_prob = rng.uniform(prof.arrival_prob.lo, prof.arrival_prob.hi);
        u.pareto_shape = rng.uniform(prof.pareto_shape.lo, prof.pareto_shape.hi);
        u.threshold_bits = 8.0 * rng.uniform(prof.threshold_bytes.lo, prof.threshold_bytes.hi);
        u.latency_req_s = prof.latency_req_s;
        slice.users.push_back(next_user++);
        pop.users.push_back(u);
      }
      info.slices.push_back(std::move(slice));
    }
    widest = std::max(widest, node_users);
    pop.nodes.push_back(std::move(info));
  }
  pop.max_users_per_node = config.max_users_per_node > 0 ? config.max_users_per_node : widest;
  return pop;
}

// ---------------------------------------------------------------------------
// Actions

Action uniform_action(const Population& pop) {
  Action a;
  const int n = pop.n_nodes();
  for (const auto& node : pop.nodes) {
    const auto n_slices = node.slices.size();
    a.node_compute.emplace_back(static_cast<std::size_t>(n), 1.0 / n);
    a.slice_compute.emplace_back(n_slices, 1.0 / static_cast<double>(n_slices));
    a.slice_rb.emplace_back(n_slices, 1.0 / static_cast<double>(n_slices));
    std::vector<std::vector<double>> users;
    for (const auto& slice : node.slices)
      users.emplace_back(slice.users.size(), 1.0 / static_cast<double>(slice.users.size()));
    a.user_compute.push_back(users);
    a.user_rb.push_back(std::move(users));
  }
  return a;
}

namespace {

void check_group(const std::vector<double>& g, std::size_t expected, double tol, const char* what) {
  if (g.size() != expected)
    throw std::invalid_argument(std::string("action: ") + what + " has the wrong length");
  double sum = 0.0;
  for (double v : g) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string("action: ") + what + " has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol)
    throw std::invalid_argument(std::string("action: ") + what + " does not sum to 1");
}

double group_error(const std::vector<double>& g) {
  double sum = 0.0;
  for (double v : g) sum += v;
  return std::abs(sum - 1.0);
}

}  // namespace

void check_action(const Action& a, const Population& pop, double tol) {
  const auto n = static_cast<std::size_t>(pop.n_nodes());
  if (a.node_compute.size() != n || a.slice_compute.size() != n || a.user_compute.size() != n ||
      a.slice_rb.size() != n || a.user_rb.size() != n)
    throw std::invalid_argument("action: node dimension does not match the population");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = pop.nodes[i];
    const auto n_slices = node.slices.size();
    check_group(a.node_compute[i], n, tol, "node compute split");
    check_group(a.slice_compute[i], n_slices, tol, "slice compute split");
    check_group(a.slice_rb[i], n_slices, tol, "slice RB split");
    if (a.user_compute[i].size() != n_slices || a.user_rb[i].size() != n_slices)
      throw std::invalid_argument("action: slice dimension does not match the population");
    for (std::size_t s = 0; s < n_slices; ++s) {
      check_group(a.user_compute[i][s], node.slices[s].users.size(), tol, "user compute split");
      check_group(a.user_rb[i][s], node.slices[s].users.size(), tol, "user RB split");
    }
  }
}

double max_simplex_error(const Action& a) {
  double worst = 0.0;
  auto visit = [&](const std::vector<std::vector<double>>& groups) {
    for (const auto& g : groups) worst = std::max(worst, group_error(g));
  };
  visit(a.node_compute);
  visit(a.slice_compute);
  visit(a.slice_rb);
  for (const auto& node : a.user_compute) visit(node);
  for (const auto& node : a.user_rb) visit(node);
  return worst;
}

// ---------------------------------------------------------------------------
// Pure model pieces

double pareto_inverse_cdf(double threshold, double shape, double uniform) {
  const double d = threshold * std::pow(uniform, -1.0 / shape);
  // the density is zero at the threshold itself
  return d > threshold ? d : std::nextafter(threshold, std::numeric_limits<double>::infinity());
}

TaskSample sample_task(const UserProfile& user, double arrival_uniform, double size_uniform) {
  TaskSample t;
  t.arrived = arrival_uniform < user.arrival_prob;
  t.size_bits = t.arrived ? pareto_inverse_cdf(user.threshold_bits, user.pareto_shape, size_uniform) : 0.0;
  return t;
}

std::vector<double> masked_compute_shares(std::span<const double> adjacency_row,
                                          std::span<const double> fractions) {
  if (adjacency_row.size() != fractions.size())
    throw std::invalid_argument("masked_compute_shares: length mismatch");
  std::vector<double> out(fractions.size(), 0.0);
  double denom = 0.0;
  for (std::size_t j = 0; j < fractions.size(); ++j) denom += adjacency_row[j] * fractions[j];
  if (denom > 0.0) {
    for (std::size_t j = 0; j < fractions.size(); ++j) out[j] = adjacency_row[j] * fractions[j] / denom;
    return out;
  }
  double links = 0.0;
  for (double l : adjacency_row) links += l != 0.0 ? 1.0 : 0.0;
  for (std::size_t j = 0; j < fractions.size(); ++j)
    out[j] = adjacency_row[j] != 0.0 ? 1.0 / links : 0.0;
  return out;
}

double compute_rate(double allocated_hz, double cycles_per_bit, RcOrientation orientation) {
  if (orientation == RcOrientation::corrected) return allocated_hz / cycles_per_bit;
  return allocated_hz > 0.0 ? cycles_per_bit / allocated_hz : 0.0;
}

double snr(double gain, const LinkBudget& budget, double rb_bandwidth_hz) {
  return budget.rb_power_w * gain / (budget.noise_w_per_hz * rb_bandwidth_hz);
}

double snr(double gain, double rbs, const LinkBudget& budget, double rb_bandwidth_hz) {
  const double power = budget.rb_power_w * rbs;
  return power * gain / (budget.noise_w_per_hz * rbs * rb_bandwidth_hz);
}

double transmit_rate(double rbs, double rb_bandwidth_hz, double snr_value) {
  return rbs * rb_bandwidth_hz * std::log2(1.0 + snr_value);
}

std::vector<double> effective_compute(const Action& action, const Graph& graph,
                                      const Population& pop, const ScenarioConfig& config) {
  std::vector<double> rc(static_cast<std::size_t>(pop.n_users()), 0.0);
  const auto n = static_cast<std::size_t>(graph.n_nodes);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> row(graph.adjacency.data() + i * n, n);
    const auto shares = masked_compute_shares(row, action.node_compute[i]);
    double node_hz = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      node_hz += graph.edge_weights(static_cast<Index>(i), static_cast<Index>(j)) * shares[j] * config.compute_hz;
    const auto& node = pop.nodes[i];
    for (std::size_t s = 0; s < node.slices.size(); ++s) {
      const double slice_hz = action.slice_compute[i][s] * node_hz;
      const auto& users = node.slices[s].users;
      for (std::size_t k = 0; k < users.size(); ++k) {
        const double user_hz = action.user_compute[i][s][k] * slice_hz;
        rc[static_cast<std::size_t>(users[k])] =
            compute_rate(user_hz, config.cycles_per_bit, config.rc_orientation);
      }
    }
  }
  return rc;
}

std::vector<double> user_resource_blocks(const Action& action, const Population& pop,
                                         const ScenarioConfig& config) {
  std::vector<double> rbs(static_cast<std::size_t>(pop.n_users()), 0.0);
  for (std::size_t i = 0; i < pop.nodes.size(); ++i) {
    const auto& node = pop.nodes[i];
    for (std::size_t s = 0; s < node.slices.size(); ++s) {
      const double slice_rbs = action.slice_rb[i][s] * config.rb_count;
      const auto& users = node.slices[s].users;
      for (std::size_t k = 0; k < users.size(); ++k)
        rbs[static_cast<std::size_t>(users[k])] = action.user_rb[i][s][k] * slice_rbs;
    }
  }
  return rbs;
}

std::vector<double> effective_rate(const Action& action, std::span<const double> gains,
                                   const Population& pop, const ScenarioConfig& config) {
  if (gains.size() != static_cast<std::size_t>(pop.n_users()))
    throw std::invalid_argument("effective_rate: one gain per user is required");
  const auto budget = LinkBudget::from(config);
  auto rbs = user_resource_blocks(action, pop, config);
  std::vector<double> rt(rbs.size(), 0.0);
  for (std::size_t u = 0; u < rbs.size(); ++u) {
    if (rbs[u] > 0.0)
      rt[u] = transmit_rate(rbs[u], config.rb_bandwidth_hz,
                            snr(gains[u], rbs[u], budget, config.rb_bandwidth_hz));
  }
  return rt;
}

// ---------------------------------------------------------------------------
// Padded action encoding

ActionLayout::ActionLayout(const Population& pop, int max_nodes, bool noncooperative)
    : n_nodes_(pop.n_nodes()),
      max_nodes_(max_nodes),
      max_slices_(pop.max_slices),
      max_users_(pop.max_users_per_node),
      width_(max_nodes + 2 * pop.max_slices + 2 * pop.max_users_per_node),
      noncooperative_(noncooperative) {
  if (max_nodes_ < n_nodes_) throw std::invalid_argument("ActionLayout: max_nodes is smaller than N");
  for (int n = 0; n < n_nodes_; ++n) {
    const auto& node = pop.nodes[static_cast<std::size_t>(n)];
    if (static_cast<int>(node.slices.size()) > max_slices_ || node.n_users > max_users_)
      throw std::invalid_argument("ActionLayout: node exceeds the declared padding");
    std::vector<int> sizes;
    std::vector<Span> g;
    g.push_back(noncooperative_ ? Span{n, 1} : Span{0, n_nodes_});
    const int n_slices = static_cast<int>(node.slices.size());
    g.push_back({slice_compute_offset(), n_slices});
    int first = 0;
    for (const auto& slice : node.slices) {
      const int len = static_cast<int>(slice.users.size());
      sizes.push_back(len);
      g.push_back({user_compute_offset() + first, len});
      first += len;
    }
    g.push_back({slice_rb_offset(), n_slices});
    first = 0;
    for (int len : sizes) {
      g.push_back({user_rb_offset() + first, len});
      first += len;
    }
    groups_.push_back(std::move(g));
    slice_sizes_.push_back(std::move(sizes));
  }
}

Matrix ActionLayout::encode(const Action& a) const {
  Matrix m = Matrix::Zero(n_nodes_, width_);
  for (int n = 0; n < n_nodes_; ++n) {
    const auto i = static_cast<std::size_t>(n);
    for (int j = 0; j < n_nodes_; ++j) m(n, j) = a.node_compute[i][static_cast<std::size_t>(j)];
    int first = 0;
    for (std::size_t s = 0; s < slice_sizes_[i].size(); ++s) {
      m(n, slice_compute_offset() + static_cast<int>(s)) = a.slice_compute[i][s];
      m(n, slice_rb_offset() + static_cast<int>(s)) = a.slice_rb[i][s];
      for (int k = 0; k < slice_sizes_[i][s]; ++k) {
        m(n, user_compute_offset() + first + k) = a.user_compute[i][s][static_cast<std::size_t>(k)];
        m(n, user_rb_offset() + first + k) = a.user_rb[i][s][static_cast<std::size_t>(k)];
      }
      first += slice_sizes_[i][s];
    }
  }
  return m;
}

Action ActionLayout::decode(const Matrix& m) const {
  if (m.rows() != n_nodes_ || m.cols() != width_)
    throw std::invalid_argument("ActionLayout::decode: matrix shape does not match the layout");
  Action a;
  for (int n = 0; n < n_nodes_; ++n) {
    const auto i = static_cast<std::size_t>(n);
    std::vector<double> nodes(static_cast<std::size_t>(n_nodes_));
    for (int j = 0; j < n_nodes_; ++j) nodes[static_cast<std::size_t>(j)] = m(n, j);
    a.node_compute.push_back(std::move(nodes));
    std::vector<double> sc, sz;
    std::vector<std::vector<double>> uc, uz;
    int first = 0;
    for (std::size_t s = 0; s < slice_sizes_[i].size(); ++s) {
      sc.push_back(m(n, slice_compute_offset() + static_cast<int>(s)));
      sz.push_back(m(n, slice_rb_offset() + static_cast<int>(s)));
      std::vector<double> c, z;
      for (int k = 0; k < slice_sizes_[i][s]; ++k) {
        c.push_back(m(n, user_compute_offset() + first + k));
        z.push_back(m(n, user_rb_offset() + first + k));
      }
      uc.push_back(std::move(c));
      uz.push_back(std::move(z));
      first += slice_sizes_[i][s];
    }
    a.slice_compute.push_back(std::move(sc));
    a.slice_rb.push_back(std::move(sz));
    a.user_compute.push_back(std::move(uc));
    a.user_rb.push_back(std::move(uz));
  }
  return a;
}

Matrix ActionLayout::uniform() const {
  Matrix m = Matrix::Zero(n_nodes_, width_);
  for (int n = 0; n < n_nodes_; ++n)
    for (const auto& g : groups(n))
      for (int k = 0; k < g.length; ++k) m(n, g.offset + k) = 1.0 / g.length;
  return m;
}

// ---------------------------------------------------------------------------
// Environment

double ring_mean_gain(double a, double b, double beta) {
  // E[r^-beta] with density 2r / (b^2 - a^2) on [a, b]
  const double norm = 2.0 / (b * b - a * a);
  if (std::abs(beta - 2.0) < 1e-12) return norm * std::log(b / a);
  return norm * (std::pow(b, 2.0 - beta) - std::pow(a, 2.0 - beta)) / (2.0 - beta);
}

Environment::Environment(ScenarioConfig config, NodeLayout layout, Graph graph,
                         Population population, std::uint64_t seed)
    : config_(std::move(config)),
      layout_(std::move(layout)),
      graph_(std::move(graph)),
      population_(std::move(population)),
      budget_(LinkBudget::from(config_)),
      mean_gain_(ring_mean_gain(config_.user_ring_min_m, config_.user_ring_max_m,
                                config_.pathloss_exponent)),
      rng_(derive_seed(seed, "dynamics")) {
  config_.validate();
  if (graph_.n_nodes != population_.n_nodes() || layout_.size() != graph_.n_nodes)
    throw std::invalid_argument("Environment: layout, graph and population disagree on N");
  const Matrix& wa = graph_.weighted_adjacency;
  if (config_.scenario == Scenario::single_node &&
      !(wa.rows() == 1 && wa(0, 0) == 1.0))
    throw std::logic_error("Environment: single-node scenario must have the trivial graph [1]");
  if (config_.scenario == Scenario::noncoop_multi && wa != Matrix::Identity(wa.rows(), wa.cols()))
    throw std::logic_error("Environment: non-cooperative scenario must have an identity adjacency");
  users_.resize(static_cast<std::size_t>(population_.n_users()));
  reset();
}

void Environment::reset() {
  const double a2 = config_.user_ring_min_m * config_.user_ring_min_m;
  const double b2 = config_.user_ring_max_m * config_.user_ring_max_m;
  for (auto& u : users_) {
    u.distance_m = std::sqrt(rng_.uniform(a2, b2));
    u.gain = rng_.exponential() * std::pow(u.distance_m, -config_.pathloss_exponent);
    u.cq_bits = 0.0;
    u.tq_bits = 0.0;
    u.arrived = false;
    u.task_bits = 0.0;
    u.recent_tasks.assign(static_cast<std::size_t>(config_.history_window), 0.0);
  }
}

SlotDraws Environment::draw_slot() {
  SlotDraws d;
  const auto n = users_.size();
  d.arrival_uniform.resize(n);
  d.size_uniform.resize(n);
  d.fading.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    d.arrival_uniform[u] = rng_.uniform_open();
    d.size_uniform[u] = rng_.uniform_open();
    d.fading[u] = rng_.exponential();
  }
  return d;
}

StepResult Environment::step(const Action& action) { return step(action, draw_slot()); }

std::vector<double> Environment::gains() const {
  std::vector<double> g;
  g.reserve(users_.size());
  for (const auto& u : users_) g.push_back(u.gain);
  return g;
}

StepResult Environment::step(const Action& action, const SlotDraws& draws) {
  check_action(action, population_);
  const auto n = users_.size();
  if (draws.arrival_uniform.size() != n || draws.size_uniform.size() != n || draws.fading.size() != n)
    throw std::invalid_argument("Environment::step: draws do not match the user count");

  StepResult res;
  res.compute_rate = effective_compute(action, graph_, population_, config_);
  const auto g = gains();
  res.transmit_rate = effective_rate(action, g, population_, config_);
  res.latency_s.assign(n, 0.0);
  const double dt = config_.slot_s;

  for (std::size_t i = 0; i < n; ++i) {
    auto& st = users_[i];
    const auto& prof = population_.users[i];
    const TaskSample task = sample_task(prof, draws.arrival_uniform[i], draws.size_uniform[i]);
    const double rc = res.compute_rate[i];
    const double rt = res.transmit_rate[i];

    // arrival enters the CQ before this slot's service
    const double cq_in = st.cq_bits + task.size_bits;
    const double cq = std::max(cq_in - rc * dt, 0.0);
    double tq = 0.0;
    switch (config_.tq_update) {
      case TqUpdate::processed: tq = std::max(st.tq_bits + std::min(cq_in, rc * dt) - rt * dt, 0.0); break;
      case TqUpdate::corrected: tq = std::max(st.tq_bits + (rc - rt) * dt, 0.0); break;
      case TqUpdate::paper: tq = std::max(st.tq_bits + (rt - rc) * dt, 0.0); break;
    }
    st.cq_bits = cq;
    st.tq_bits = tq;
    st.arrived = task.arrived;
    st.task_bits = task.size_bits;
    if (!st.recent_tasks.empty()) {
      std::rotate(st.recent_tasks.rbegin(), st.recent_tasks.rbegin() + 1, st.recent_tasks.rend());
      st.recent_tasks.front() = task.size_bits;
    }

    const double backlog = cq + tq;
    const double bottleneck = std::min(rc, rt);
    double latency = 0.0;
    if (bottleneck > 0.0) latency = backlog / bottleneck;
    else if (backlog > 0.0) latency = std::numeric_limits<double>::infinity();
    res.latency_s[i] = latency;

    if (task.arrived) {
      ++res.generated;
      if (latency <= prof.latency_req_s) ++res.satisfied;
    }
  }
  res.reward = res.generated > 0 ? static_cast<double>(res.satisfied) / res.generated : 1.0;

  for (std::size_t i = 0; i < n; ++i)
    users_[i].gain = draws.fading[i] * std::pow(users_[i].distance_m, -config_.pathloss_exponent);
  return res;
}

int Environment::feature_width() const {
  return population_.max_users_per_node * (3 + config_.obs_window);
}

Matrix Environment::observe() const {
  const int per_user = 3 + config_.obs_window;
  Matrix h = Matrix::Zero(population_.n_nodes(), feature_width());
  const double scale = config_.backlog_scale_bits;
  for (std::size_t i = 0; i < users_.size(); ++i) {
    const auto& prof = population_.users[i];
    const auto& st = users_[i];
    const int base = prof.slot * per_user;
    h(prof.node, base) = std::log1p(st.cq_bits / scale);
    h(prof.node, base + 1) = std::log1p(st.tq_bits / scale);
    h(prof.node, base + 2) = std::log1p(st.gain / mean_gain_);
    for (int k = 0; k < config_.obs_window; ++k)
      h(prof.node, base + 3 + k) = std::log1p(st.recent_tasks[static_cast<std::size_t>(k)] / scale);
  }
  return h;
}

Environment make_environment(const ScenarioConfig& config, std::uint64_t structure_seed,
                             std::uint64_t dynamics_seed) {
  auto layout = build_layout(config, structure_seed);
  auto graph = build_graph(layout, config.max_neighbors, config.coop_penalty);
  auto pop = build_population(config, structure_seed);
  return Environment(config, std::move(layout), std::move(graph), std::move(pop), dynamics_seed);
}

}  // namespace rgrl
