#include "rgrl/agent.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "rgrl/autonet/checkpoint.hpp"

namespace rgrl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix flatten_rows(const Matrix& m, Index batch) {
  return Eigen::Map<const Matrix>(m.data(), batch, m.size() / batch);
}

bool finite_grads(const std::vector<Parameter*>& params) {
  for (const auto* p : params)
    if (!p->grad.allFinite()) return false;
  return true;
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace

std::string_view to_string(AgentKind k) {
  switch (k) {
    case AgentKind::random: return "random";
    case AgentKind::dense_rl: return "dense-rl";
    case AgentKind::dense_rrl: return "dense-rrl";
    case AgentKind::gcn_rl: return "gcn-rl";
    case AgentKind::rgrl: return "rgrl";
  }
  return "?";
}

AgentKind parse_agent_kind(std::string_view s) {
  for (auto k : {AgentKind::random, AgentKind::dense_rl, AgentKind::dense_rrl, AgentKind::gcn_rl, AgentKind::rgrl})
    if (s == to_string(k)) return k;
  throw ConfigError("agent: unknown agent '" + std::string(s) +
                    "' (expected random, dense-rl, dense-rrl, gcn-rl or rgrl)");
}

bool uses_gcn(AgentKind k) { return k == AgentKind::gcn_rl || k == AgentKind::rgrl; }
bool is_recurrent(AgentKind k) { return k == AgentKind::dense_rrl || k == AgentKind::rgrl; }

void TrainingConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& what) {
    throw ConfigError("training." + field + ": " + what);
  };
  if (!(discount >= 0.0 && discount <= 1.0)) fail("discount", "must lie in [0, 1]");
  if (!(sigma >= 0.0)) fail("sigma", "must be non-negative");
  if (!(sigma_decay >= 0.0 && sigma_decay <= 1.0)) fail("sigma_decay", "must lie in [0, 1]");
  if (buffer_capacity < 1) fail("buffer_capacity", "must be positive");
  if (critic_batch < 1) fail("critic_batch", "must be positive");
  if (actor_batch < 1) fail("actor_batch", "must be positive");
  if (!(tau >= 0.0 && tau <= 1.0)) fail("tau", "must lie in [0, 1]");
  if (target_period < 1) fail("target_period", "must be positive");
  if (episodes < 0) fail("episodes", "must be non-negative");
  if (steps_per_episode < 1) fail("steps_per_episode", "must be positive");
  if (update_every < 1) fail("update_every", "must be positive");
  if (!(actor_adam.learning_rate > 0.0)) fail("actor_lr", "must be positive");
  if (!(critic_adam.learning_rate > 0.0)) fail("critic_lr", "must be positive");
}

AgentDims agent_dims(const Environment& env) {
  const auto& cfg = env.config();
  return {env.population().n_nodes(), env.feature_width(),
          ActionLayout(env.population(), cfg.max_nodes, cfg.scenario == Scenario::noncoop_multi),
          propagation_operator(env.graph(), cfg.gcn_operator).matrix};
}

// ---------------------------------------------------------------------------
// Networks

ActorNet::ActorNet(const AgentDims& dims, bool gcn, bool recurrent, const NetworkConfig& net, Rng& rng)
    : n_nodes_(dims.n_nodes),
      feature_width_(dims.feature_width),
      action_width_(dims.layout.width()),
      gcn_(gcn),
      recurrent_(recurrent),
      propagation_(dims.propagation) {
  if (n_nodes_ != dims.layout.n_nodes() || propagation_.rows() != n_nodes_ || propagation_.cols() != n_nodes_)
    throw autonet::DimensionError("ActorNet: node count disagrees across layout and graph operator");
  for (int n = 0; n < n_nodes_; ++n) {
    std::vector<autonet::Group> g;
    for (const auto& s : dims.layout.groups(n)) g.push_back({s.offset, s.length});
    groups_.push_back(std::move(g));
  }
  if (gcn_) {
    int in = input_width();
    for (std::size_t i = 0; i < net.actor_hidden.size(); ++i) {
      graph_layers_.emplace_back("actor.gcn" + std::to_string(i), in, net.actor_hidden[i], net.hidden_activation, rng);
      in = net.actor_hidden[i];
    }
    dense_layers_.emplace_back("actor.head", in, action_width_, Activation::identity, rng);
  } else {
    int in = n_nodes_ * input_width();
    for (std::size_t i = 0; i < net.actor_hidden.size(); ++i) {
      dense_layers_.emplace_back("actor.dense" + std::to_string(i), in, net.actor_hidden[i], net.hidden_activation,
                                 rng);
      in = net.actor_hidden[i];
    }
    dense_layers_.emplace_back("actor.head", in, n_nodes_ * action_width_, Activation::identity, rng);
  }
}

Matrix ActorNet::node_input(const Matrix& obs, const Matrix& prev_action) const {
  if (obs.cols() != feature_width_ || obs.rows() == 0 || obs.rows() % n_nodes_ != 0)
    throw autonet::DimensionError("ActorNet: observation must be (B*N) x " + std::to_string(feature_width_));
  if (prev_action.rows() != obs.rows() || prev_action.cols() != action_width_)
    throw autonet::DimensionError("ActorNet: previous action must be (B*N) x " + std::to_string(action_width_));
  Matrix x = Matrix::Zero(obs.rows(), input_width());
  x.leftCols(feature_width_) = obs;
  if (recurrent_) x.rightCols(action_width_) = prev_action;
  return x;
}

Var ActorNet::logits(Tape& tape, const Matrix& obs, const Matrix& prev_action) {
  Matrix x = node_input(obs, prev_action);
  const Index rows = x.rows();
  if (gcn_) {
    Var h = tape.constant(std::move(x));
    for (auto& layer : graph_layers_) h = layer.forward(tape, propagation_, h);
    return dense_layers_.back().forward(tape, h);
  }
  const Index batch = rows / n_nodes_;
  Var h = tape.constant(flatten_rows(x, batch));
  for (auto& layer : dense_layers_) h = layer.forward(tape, h);
  return tape.reshape(h, rows, action_width_);
}

Var ActorNet::forward(Tape& tape, const Matrix& obs, const Matrix& prev_action, const Matrix* noise) {
  Var z = logits(tape, obs, prev_action);
  if (noise) z = tape.add_constant(z, *noise);
  return tape.group_softmax(z, groups_);
}

Matrix ActorNet::act(const Matrix& obs, const Matrix& prev_action, const Matrix* noise) {
  Tape tape;
  return tape.value(forward(tape, obs, prev_action, noise));
}

std::vector<Parameter*> ActorNet::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : graph_layers_)
    for (auto* p : l.parameters()) out.push_back(p);
  for (auto& l : dense_layers_)
    for (auto* p : l.parameters()) out.push_back(p);
  return out;
}

CriticNet::CriticNet(int obs_dim, int action_dim, const NetworkConfig& net, Rng& rng)
    : obs_dim_(obs_dim), action_dim_(action_dim) {
  int in = obs_dim + action_dim;
  for (std::size_t i = 0; i < net.critic_hidden.size(); ++i) {
    layers_.emplace_back("critic.dense" + std::to_string(i), in, net.critic_hidden[i], net.hidden_activation, rng);
    in = net.critic_hidden[i];
  }
  layers_.emplace_back("critic.head", in, 1, Activation::identity, rng);
}

Var CriticNet::forward(Tape& tape, Var obs_flat, Var action_flat) {
  if (tape.value(obs_flat).cols() != obs_dim_ || tape.value(action_flat).cols() != action_dim_)
    throw autonet::DimensionError("CriticNet: input widths do not match the declared dimensions");
  Var h = tape.concat_cols(obs_flat, action_flat);
  for (auto& layer : layers_) h = layer.forward(tape, h);
  return h;
}

std::vector<Parameter*> CriticNet::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (auto* p : l.parameters()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Replay

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count, Rng& rng) const {
  const std::size_t n = data_.size();
  if (count > n) throw std::invalid_argument("ReplayBuffer: batch larger than the buffer");
  // Floyd's subset sampling
  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t j = n - count; j < n; ++j) {
    const auto t = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(j)));
    bool seen = false;
    for (auto v : out) seen = seen || v == t;
    out.push_back(seen ? j : t);
  }
  return out;
}

Batch make_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices) {
  Batch b;
  b.size = static_cast<int>(indices.size());
  if (indices.empty()) return b;
  const auto& first = buffer.at(indices.front());
  const Index n = first.obs.rows();
  const Index f = first.obs.cols();
  const Index w = first.action.cols();
  b.prev_action.resize(b.size * n, w);
  b.obs.resize(b.size * n, f);
  b.action.resize(b.size * n, w);
  b.next_obs.resize(b.size * n, f);
  b.reward.resize(b.size, 1);
  for (int i = 0; i < b.size; ++i) {
    const auto& t = buffer.at(indices[static_cast<std::size_t>(i)]);
    b.prev_action.middleRows(i * n, n) = t.prev_action;
    b.obs.middleRows(i * n, n) = t.obs;
    b.action.middleRows(i * n, n) = t.action;
    b.next_obs.middleRows(i * n, n) = t.next_obs;
    b.reward(i, 0) = t.reward;
  }
  return b;
}

double critic_target(double reward, double next_q_target, double discount) {
  return reward + discount * next_q_target;
}

// ---------------------------------------------------------------------------
// Policies

RandomPolicy::RandomPolicy(ActionLayout layout, std::uint64_t seed)
    : layout_(std::move(layout)), rng_(derive_seed(seed, "random-policy")) {}

Matrix RandomPolicy::act(const Matrix&, const Matrix&, double) {
  Matrix m = Matrix::Zero(layout_.n_nodes(), layout_.width());
  for (int n = 0; n < layout_.n_nodes(); ++n) {
    for (const auto& g : layout_.groups(n)) {
      double sum = 0.0;
      for (int k = 0; k < g.length; ++k) sum += m(n, g.offset + k) = rng_.exponential();
      for (int k = 0; k < g.length; ++k) m(n, g.offset + k) /= sum;
    }
  }
  return m;
}

DdpgAgent::DdpgAgent(AgentKind kind, const AgentDims& dims, const NetworkConfig& net, const TrainingConfig& train,
                     std::uint64_t seed)
    : kind_(kind),
      dims_(dims),
      train_(train),
      init_rng_(derive_seed(seed, "init")),
      actor_(dims, uses_gcn(kind), is_recurrent(kind), net, init_rng_),
      critic_(dims.n_nodes * dims.feature_width, dims.n_nodes * dims.layout.width(), net, init_rng_),
      target_actor_(actor_),
      target_critic_(critic_),
      actor_opt_(actor_.parameters(), train.actor_adam),
      critic_opt_(critic_.parameters(), train.critic_adam),
      noise_rng_(derive_seed(seed, "exploration")),
      replay_rng_(derive_seed(seed, "replay")) {
  if (kind == AgentKind::random) throw std::invalid_argument("DdpgAgent: use RandomPolicy for the random agent");
  train_.validate();
  actor_params_ = autonet::param_count(actor_);
  critic_params_ = autonet::param_count(critic_);
}

Matrix DdpgAgent::act(const Matrix& obs, const Matrix& prev_action, double sigma) {
  if (sigma > 0.0) {
    Matrix noise(obs.rows(), dims_.layout.width());
    for (Index i = 0; i < noise.rows(); ++i)
      for (Index j = 0; j < noise.cols(); ++j) noise(i, j) = sigma * noise_rng_.normal();
    return actor_.act(obs, prev_action, &noise);
  }
  return actor_.act(obs, prev_action);
}

Matrix DdpgAgent::batch_targets(const Batch& batch) {
  Tape tape;
  Var next_action = target_actor_.forward(tape, batch.next_obs, batch.action);
  Var q = target_critic_.forward(tape, tape.constant(flatten_rows(batch.next_obs, batch.size)),
                                 tape.reshape(next_action, batch.size, critic_.action_dim()));
  const Matrix& qv = tape.value(q);
  Matrix y(batch.size, 1);
  for (int i = 0; i < batch.size; ++i) y(i, 0) = critic_target(batch.reward(i, 0), qv(i, 0), train_.discount);
  return y;
}

double DdpgAgent::critic_loss(const Batch& batch, const Matrix& targets, bool backprop) {
  Tape tape;
  Var q = critic_.forward(tape, tape.constant(flatten_rows(batch.obs, batch.size)),
                          tape.constant(flatten_rows(batch.action, batch.size)));
  Var loss = tape.mse(q, targets);
  const double value = tape.value(loss)(0, 0);
  if (backprop) {
    zero_grads(critic_.parameters());
    tape.backward(loss);
  }
  return value;
}

double DdpgAgent::actor_objective(const Batch& batch, bool backprop) {
  Tape tape;
  Var a = actor_.forward(tape, batch.obs, batch.prev_action);
  Var q = critic_.forward(tape, tape.constant(flatten_rows(batch.obs, batch.size)),
                          tape.reshape(a, batch.size, critic_.action_dim()));
  Var objective = tape.mean(q);
  const double value = tape.value(objective)(0, 0);
  if (backprop) {
    zero_grads(actor_.parameters());
    tape.backward(tape.scale(objective, -1.0));
    zero_grads(critic_.parameters());
  }
  return value;
}

std::optional<double> DdpgAgent::critic_update(const ReplayBuffer& buffer) {
  const auto m = static_cast<std::size_t>(train_.critic_batch);
  if (buffer.size() < m) return std::nullopt;
  const Batch batch = make_batch(buffer, buffer.sample_indices(m, replay_rng_));
  const Matrix y = batch_targets(batch);
  const double loss = critic_loss(batch, y, true);
  if (std::isfinite(loss) && finite_grads(critic_.parameters())) critic_opt_.step();
  else return kNaN;
  return loss;
}

std::optional<double> DdpgAgent::actor_update(const ReplayBuffer& buffer) {
  const auto m = static_cast<std::size_t>(train_.actor_batch);
  if (buffer.size() < m) return std::nullopt;
  const Batch batch = make_batch(buffer, buffer.sample_indices(m, replay_rng_));
  const double objective = actor_objective(batch, true);
  if (std::isfinite(objective) && finite_grads(actor_.parameters())) actor_opt_.step();
  else return kNaN;
  if (++updates_ % train_.target_period == 0) soft_update_targets();
  return objective;
}

void DdpgAgent::soft_update_targets() {
  autonet::soft_update(target_actor_.parameters(), actor_.parameters(), train_.tau);
  autonet::soft_update(target_critic_.parameters(), critic_.parameters(), train_.tau);
}

std::vector<Parameter*> DdpgAgent::online_parameters() {
  auto out = actor_.parameters();
  for (auto* p : critic_.parameters()) out.push_back(p);
  return out;
}

void DdpgAgent::save(const std::filesystem::path& dir) {
  autonet::save_checkpoint(dir / "actor", actor_.parameters());
  autonet::save_checkpoint(dir / "critic", critic_.parameters());
  autonet::save_checkpoint(dir / "target_actor", target_actor_.parameters());
  autonet::save_checkpoint(dir / "target_critic", target_critic_.parameters());
}

void DdpgAgent::load(const std::filesystem::path& dir) {
  autonet::load_checkpoint(dir / "actor", actor_.parameters());
  if (std::filesystem::exists(dir / "critic")) {
    autonet::load_checkpoint(dir / "critic", critic_.parameters());
    autonet::load_checkpoint(dir / "target_actor", target_actor_.parameters());
    autonet::load_checkpoint(dir / "target_critic", target_critic_.parameters());
  }
}

std::unique_ptr<Policy> make_policy(AgentKind kind, const AgentDims& dims, const NetworkConfig& net,
                                    const TrainingConfig& train, std::uint64_t seed) {
  if (kind == AgentKind::random) return std::make_unique<RandomPolicy>(dims.layout, seed);
  return std::make_unique<DdpgAgent>(kind, dims, net, train, seed);
}

// ---------------------------------------------------------------------------
// Loops

void TrainingLog::write_csv(std::ostream& os) const {
  os << "episode,mean_reward,critic_loss,actor_objective,sigma\n";
  char buf[160];
  for (const auto& e : episodes) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", e.episode, e.mean_reward, e.critic_loss,
                  e.actor_objective, e.sigma);
    os << buf;
  }
}

TrainingLog train(Environment& env, DdpgAgent& agent, std::ostream* diagnostics, const StepObserver& observer) {
  const auto& cfg = agent.training();
  cfg.validate();
  const auto& layout = agent.layout();
  if (env.population().n_nodes() != layout.n_nodes() || env.feature_width() != agent.dims().feature_width)
    throw autonet::DimensionError("train: agent and environment dimensions differ");
  TrainingLog log;
  ReplayBuffer buffer(cfg.buffer_capacity);
  double sigma = cfg.sigma;
  long step_count = 0;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    env.reset();
    EpisodeLog entry;
    entry.episode = ep;
    entry.sigma = sigma;
    Matrix prev = layout.uniform();
    Matrix obs = env.observe();
    double reward_sum = 0.0, closs_sum = 0.0, aobj_sum = 0.0;
    int steps = 0, closs_n = 0, aobj_n = 0;
    for (int t = 0; t < cfg.steps_per_episode; ++t) {
      Matrix action = agent.act(obs, prev, sigma);
      const Action decoded = layout.decode(action);
      const StepResult res = env.step(decoded);
      Matrix next = env.observe();
      reward_sum += res.reward;
      ++steps;
      if (observer) observer({ep, t, res.reward, res.satisfied, res.generated, &decoded});
      buffer.push({prev, obs, action, res.reward, next});
      if (++step_count % cfg.update_every == 0) {
        const auto cl = agent.critic_update(buffer);
        if (cl && !std::isfinite(*cl)) {
          entry.aborted = true;
          entry.diagnostic = "non-finite critic loss at episode " + std::to_string(ep) + ", step " + std::to_string(t);
          break;
        }
        const auto ao = agent.actor_update(buffer);
        if (ao && !std::isfinite(*ao)) {
          entry.aborted = true;
          entry.diagnostic =
              "non-finite actor objective at episode " + std::to_string(ep) + ", step " + std::to_string(t);
          break;
        }
        if (cl) closs_sum += *cl, ++closs_n;
        if (ao) aobj_sum += *ao, ++aobj_n;
      }
      prev = std::move(action);
      obs = std::move(next);
    }
    entry.mean_reward = steps > 0 ? reward_sum / steps : kNaN;
    entry.critic_loss = closs_n > 0 ? closs_sum / closs_n : kNaN;
    entry.actor_objective = aobj_n > 0 ? aobj_sum / aobj_n : kNaN;
    if (entry.aborted) {
      if (diagnostics) *diagnostics << "train: " << entry.diagnostic << "; episode aborted\n";
      else throw std::runtime_error("train: " + entry.diagnostic);
    }
    log.episodes.push_back(std::move(entry));
    sigma *= cfg.sigma_decay;
  }
  return log;
}

std::vector<double> evaluate(Environment& env, Policy& policy, int episodes, int steps_per_episode,
                             const StepObserver& observer) {
  if (episodes < 0 || steps_per_episode < 1) throw std::invalid_argument("evaluate: bad episode shape");
  const auto& layout = policy.layout();
  std::vector<double> ssr;
  ssr.reserve(static_cast<std::size_t>(episodes));
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset();
    Matrix prev = layout.uniform();
    double sum = 0.0;
    for (int t = 0; t < steps_per_episode; ++t) {
      Matrix action = policy.act(env.observe(), prev, 0.0);
      const Action decoded = layout.decode(action);
      const StepResult res = env.step(decoded);
      sum += res.reward;
      if (observer) observer({ep, t, res.reward, res.satisfied, res.generated, &decoded});
      prev = std::move(action);
    }
    ssr.push_back(sum / steps_per_episode);
  }
  return ssr;
}

}  // namespace rgrl
