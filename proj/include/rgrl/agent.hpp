#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rgrl/autonet/adam.hpp"
#include "rgrl/autonet/layers.hpp"
#include "rgrl/autonet/tape.hpp"
#include "rgrl/environment.hpp"
#include "rgrl/rng.hpp"

namespace rgrl {

using autonet::Activation;
using autonet::Parameter;
using autonet::Tape;
using autonet::Var;

/// Baseline lattice: {dense, gcn} x {recurrence off, on}, plus a random policy.
enum class AgentKind { random, dense_rl, dense_rrl, gcn_rl, rgrl };

std::string_view to_string(AgentKind k);
/// Accepts "random", "dense-rl", "dense-rrl", "gcn-rl", "rgrl".
AgentKind parse_agent_kind(std::string_view s);
bool uses_gcn(AgentKind k);
bool is_recurrent(AgentKind k);

struct NetworkConfig {
  std::vector<int> actor_hidden{64, 64};
  std::vector<int> critic_hidden{128, 64};
  Activation hidden_activation = Activation::relu;
};

struct TrainingConfig {
  double discount = 0.9;       // chi
  double sigma = 0.2;          // initial exploration std on the logits
  double sigma_decay = 0.995;  // per episode
  std::size_t buffer_capacity = 100000;
  int critic_batch = 64;  // M_mini
  int actor_batch = 64;   // I
  double tau = 0.005;     // nu
  int target_period = 1;  // phi, in updates
  int episodes = 500;     // Psi
  int steps_per_episode = 100;
  int update_every = 1;  // env steps between gradient updates
  autonet::AdamOptions actor_adam{};
  autonet::AdamOptions critic_adam{};

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Shapes an agent is built against.
struct AgentDims {
  int n_nodes = 0;
  int feature_width = 0;
  ActionLayout layout;
  Matrix propagation;  // N x N GCN operator
};

AgentDims agent_dims(const Environment& env);

/// Policy network pi(o, a_prev). Node input row is [features | a_prev row];
/// the a_prev block is present but zero-filled when recurrence is off, so
/// both variants share the same parameter count.
class ActorNet {
 public:
  ActorNet(const AgentDims& dims, bool gcn, bool recurrent, const NetworkConfig& net, Rng& rng);

  /// obs: (B*N) x F, prev_action: (B*N) x A_w. Returns (B*N) x A_w logits.
  Var logits(Tape& tape, const Matrix& obs, const Matrix& prev_action);
  /// Group softmax of logits (+ optional noise added before the softmax).
  Var forward(Tape& tape, const Matrix& obs, const Matrix& prev_action, const Matrix* noise = nullptr);
  Matrix act(const Matrix& obs, const Matrix& prev_action, const Matrix* noise = nullptr);

  std::vector<Parameter*> parameters();
  int input_width() const { return feature_width_ + action_width_; }
  bool gcn() const { return gcn_; }
  bool recurrent() const { return recurrent_; }

 private:
  Matrix node_input(const Matrix& obs, const Matrix& prev_action) const;

  int n_nodes_;
  int feature_width_;
  int action_width_;
  bool gcn_;
  bool recurrent_;
  Matrix propagation_;
  autonet::RowGroups groups_;
  std::vector<autonet::GcnLayer> graph_layers_;
  std::vector<autonet::DenseLayer> dense_layers_;
};

/// Q(o, a) over the flattened observation and flattened action.
class CriticNet {
 public:
  CriticNet(int obs_dim, int action_dim, const NetworkConfig& net, Rng& rng);

  /// obs_flat: B x obs_dim, action_flat: B x action_dim. Returns B x 1.
  Var forward(Tape& tape, Var obs_flat, Var action_flat);
  std::vector<Parameter*> parameters();
  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return action_dim_; }

 private:
  int obs_dim_;
  int action_dim_;
  std::vector<autonet::DenseLayer> layers_;
};

struct Transition {
  Matrix prev_action;  // a(t-1), N x A_w
  Matrix obs;          // o(t), N x F
  Matrix action;       // a(t), N x A_w
  double reward = 0.0;
  Matrix next_obs;  // o(t+1)
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_.at(i); }
  /// `count` distinct indices drawn uniformly; throws if count > size().
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

/// Mini-batch stacked along rows: node-level matrices are (B*N) x width.
struct Batch {
  int size = 0;
  Matrix prev_action;
  Matrix obs;
  Matrix action;
  Matrix reward;  // B x 1
  Matrix next_obs;
};

Batch make_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices);

/// y = r + chi * Q'.
double critic_target(double reward, double next_q_target, double discount);

class Policy {
 public:
  virtual ~Policy() = default;
  virtual AgentKind kind() const = 0;
  /// Encoded N x A_w action for observation `obs` given a(t-1).
  virtual Matrix act(const Matrix& obs, const Matrix& prev_action, double sigma) = 0;
  virtual std::size_t actor_parameter_count() const = 0;
  virtual const ActionLayout& layout() const = 0;
};

/// Dirichlet(1) draw in every simplex group; no parameters.
class RandomPolicy : public Policy {
 public:
  RandomPolicy(ActionLayout layout, std::uint64_t seed);

  AgentKind kind() const override { return AgentKind::random; }
  Matrix act(const Matrix& obs, const Matrix& prev_action, double sigma) override;
  std::size_t actor_parameter_count() const override { return 0; }
  const ActionLayout& layout() const override { return layout_; }

 private:
  ActionLayout layout_;
  Rng rng_;
};

/// Actor-critic with target networks; the four learned baselines differ only
/// in the actor architecture and whether a(t-1) is fed back.
class DdpgAgent : public Policy {
 public:
  DdpgAgent(AgentKind kind, const AgentDims& dims, const NetworkConfig& net, const TrainingConfig& train,
            std::uint64_t seed);
  DdpgAgent(const DdpgAgent&) = delete;
  DdpgAgent& operator=(const DdpgAgent&) = delete;

  AgentKind kind() const override { return kind_; }
  Matrix act(const Matrix& obs, const Matrix& prev_action, double sigma) override;
  std::size_t actor_parameter_count() const override { return actor_params_; }
  std::size_t critic_parameter_count() const { return critic_params_; }
  const ActionLayout& layout() const override { return dims_.layout; }
  const AgentDims& dims() const { return dims_; }
  const TrainingConfig& training() const { return train_; }

  /// Targets y for a batch from the target networks: a' = target_pi(o', a).
  Matrix batch_targets(const Batch& batch);
  /// MSE critic loss; with `backprop` the critic gradients are reset and filled.
  double critic_loss(const Batch& batch, const Matrix& targets, bool backprop);
  /// mean Q(o, pi(o, a_prev)); with `backprop` the actor gradients are reset
  /// and filled with the gradient of -objective.
  double actor_objective(const Batch& batch, bool backprop);

  /// One Adam step on the critic; nullopt when the buffer is too small.
  /// Returns the pre-step loss; a non-finite loss skips the step.
  std::optional<double> critic_update(const ReplayBuffer& buffer);
  /// One Adam step ascending the objective; nullopt when the buffer is too small.
  std::optional<double> actor_update(const ReplayBuffer& buffer);
  void soft_update_targets();

  ActorNet& actor() { return actor_; }
  CriticNet& critic() { return critic_; }
  ActorNet& target_actor() { return target_actor_; }
  CriticNet& target_critic() { return target_critic_; }
  autonet::Adam& actor_optimizer() { return actor_opt_; }
  autonet::Adam& critic_optimizer() { return critic_opt_; }

  /// Online actor and critic parameters, in that order.
  std::vector<Parameter*> online_parameters();
  void save(const std::filesystem::path& dir);
  void load(const std::filesystem::path& dir);

 private:
  AgentKind kind_;
  AgentDims dims_;
  TrainingConfig train_;
  Rng init_rng_;
  ActorNet actor_;
  CriticNet critic_;
  ActorNet target_actor_;
  CriticNet target_critic_;
  autonet::Adam actor_opt_;
  autonet::Adam critic_opt_;
  Rng noise_rng_;
  Rng replay_rng_;
  std::size_t actor_params_ = 0;
  std::size_t critic_params_ = 0;
  long updates_ = 0;
};

std::unique_ptr<Policy> make_policy(AgentKind kind, const AgentDims& dims, const NetworkConfig& net,
                                    const TrainingConfig& train, std::uint64_t seed);

struct EpisodeLog {
  int episode = 0;
  double mean_reward = 0.0;
  double critic_loss = 0.0;      // mean over the episode's updates, NaN if none
  double actor_objective = 0.0;  // likewise
  double sigma = 0.0;
  bool aborted = false;
  std::string diagnostic;
};

struct TrainingLog {
  std::vector<EpisodeLog> episodes;
  /// Columns: episode, mean_reward, critic_loss, actor_objective, sigma.
  void write_csv(std::ostream& os) const;
};

/// One slot as seen by a rollout observer.
struct StepRecord {
  int episode = 0;
  int t = 0;
  double reward = 0.0;
  int satisfied = 0;
  int generated = 0;
  const Action* action = nullptr;
};
using StepObserver = std::function<void(const StepRecord&)>;

/// Runs `episodes` episodes of `steps_per_episode` slots from a(0) uniform,
/// storing transitions and updating after every `update_every` steps.
/// A non-finite loss aborts the episode and is reported on `diagnostics`.
TrainingLog train(Environment& env, DdpgAgent& agent, std::ostream* diagnostics = nullptr,
                  const StepObserver& observer = {});

/// Frozen rollouts with sigma = 0. Returns the per-episode SSR (mean reward).
std::vector<double> evaluate(Environment& env, Policy& policy, int episodes, int steps_per_episode,
                             const StepObserver& observer = {});

}  // namespace rgrl
