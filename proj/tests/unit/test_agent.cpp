#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "rgrl/agent.hpp"
#include "support.hpp"

using namespace rgrl;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng) {
  Matrix m(r, c);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(-1.0, 1.0);
  return m;
}

Matrix random_simplex_action(const ActionLayout& layout, Rng& rng) {
  Matrix m = Matrix::Zero(layout.n_nodes(), layout.width());
  for (int n = 0; n < layout.n_nodes(); ++n)
    for (const auto& g : layout.groups(n)) {
      double sum = 0.0;
      for (int k = 0; k < g.length; ++k) sum += m(n, g.offset + k) = rng.exponential();
      for (int k = 0; k < g.length; ++k) m(n, g.offset + k) /= sum;
    }
  return m;
}

double max_group_error(const ActionLayout& layout, const Matrix& m) {
  double worst = 0.0;
  for (int n = 0; n < layout.n_nodes(); ++n)
    for (const auto& g : layout.groups(n)) worst = std::max(worst, std::abs(m.row(n).segment(g.offset, g.length).sum() - 1.0));
  return worst;
}

NetworkConfig small_net(Activation act = Activation::tanh) {
  NetworkConfig n;
  n.actor_hidden = {6};
  n.critic_hidden = {8};
  n.hidden_activation = act;
  return n;
}

TrainingConfig small_training() {
  TrainingConfig t;
  t.episodes = 3;
  t.steps_per_episode = 12;
  t.critic_batch = 8;
  t.actor_batch = 8;
  return t;
}

Transition random_transition(const Environment& env, const ActionLayout& layout, Rng& rng) {
  Transition tr;
  tr.prev_action = random_simplex_action(layout, rng);
  tr.obs = random_matrix(env.population().n_nodes(), env.feature_width(), rng).cwiseAbs();
  tr.action = random_simplex_action(layout, rng);
  tr.reward = rng.uniform(0.0, 1.0);
  tr.next_obs = random_matrix(env.population().n_nodes(), env.feature_width(), rng).cwiseAbs();
  return tr;
}

ScenarioConfig two_user_node() {
  ScenarioConfig c = apply_scenario(ScenarioConfig{}, Scenario::single_node);
  c.n_users = 2;
  c.slices_min = 1;
  c.slices_max = 1;
  c.max_nodes = 1;
  return c;
}

}  // namespace

TEST_CASE("agent kind names round trip") {
  for (auto k : {AgentKind::random, AgentKind::dense_rl, AgentKind::dense_rrl, AgentKind::gcn_rl, AgentKind::rgrl})
    CHECK(parse_agent_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_agent_kind("ppo"), ConfigError);
  CHECK(uses_gcn(AgentKind::rgrl));
  CHECK(uses_gcn(AgentKind::gcn_rl));
  CHECK_FALSE(uses_gcn(AgentKind::dense_rrl));
  CHECK(is_recurrent(AgentKind::dense_rrl));
  CHECK_FALSE(is_recurrent(AgentKind::gcn_rl));
}

TEST_CASE("training config errors name the field") {
  TrainingConfig t;
  CHECK_NOTHROW(t.validate());
  t.discount = 1.5;
  CHECK_THROWS_WITH_AS(t.validate(), doctest::Contains("training.discount"), ConfigError);
  t = TrainingConfig{};
  t.sigma = -0.1;
  CHECK_THROWS_WITH_AS(t.validate(), doctest::Contains("training.sigma"), ConfigError);
}

TEST_CASE("critic target examples") {
  CHECK(critic_target(0.5, 1.0, 0.9) == doctest::Approx(1.4));
  CHECK(critic_target(0.7, 123.0, 0.0) == 0.7);
  CHECK(critic_target(0.0, 2.5, 1.0) == 2.5);
}

TEST_CASE("actions are simplexes for every agent and noise level") {
  ScenarioConfig c = test::small_coop(3, 4);
  auto env = make_environment(c, 1, 2);
  const auto dims = agent_dims(env);
  Rng rng(1);
  for (auto k : {AgentKind::random, AgentKind::dense_rl, AgentKind::dense_rrl, AgentKind::gcn_rl, AgentKind::rgrl}) {
    auto policy = make_policy(k, dims, small_net(Activation::relu), TrainingConfig{}, 5);
    for (double sigma : {0.0, 0.2, 3.0}) {
      const Matrix a = policy->act(env.observe(), dims.layout.uniform(), sigma);
      CHECK(a.minCoeff() >= 0.0);
      CHECK(max_group_error(dims.layout, a) <= 1e-6);
      CHECK_NOTHROW(check_action(dims.layout.decode(a), env.population()));
    }
  }
}

TEST_CASE("sigma = 0 is deterministic") {
  ScenarioConfig c = test::small_coop(2, 4);
  auto env = make_environment(c, 1, 2);
  const auto dims = agent_dims(env);
  DdpgAgent agent(AgentKind::rgrl, dims, NetworkConfig{}, TrainingConfig{}, 3);
  Rng rng(2);
  const Matrix prev = random_simplex_action(dims.layout, rng);
  CHECK(agent.act(env.observe(), prev, 0.0) == agent.act(env.observe(), prev, 0.0));
}

TEST_CASE("recurrence contract") {
  ScenarioConfig c = test::small_coop(2, 4);
  auto env = make_environment(c, 1, 2);
  const auto dims = agent_dims(env);
  Rng rng(3);
  const Matrix obs = env.observe();
  for (auto k : {AgentKind::gcn_rl, AgentKind::dense_rl}) {
    DdpgAgent agent(k, dims, NetworkConfig{}, TrainingConfig{}, 4);
    const Matrix base = agent.act(obs, dims.layout.uniform(), 0.0);
    for (int i = 0; i < 100; ++i) CHECK(agent.act(obs, random_simplex_action(dims.layout, rng), 0.0) == base);
  }
  for (auto k : {AgentKind::rgrl, AgentKind::dense_rrl}) {
    DdpgAgent agent(k, dims, NetworkConfig{}, TrainingConfig{}, 4);
    const Matrix base = agent.act(obs, dims.layout.uniform(), 0.0);
    bool differs = false;
    for (int i = 0; i < 10; ++i) differs = differs || agent.act(obs, random_simplex_action(dims.layout, rng), 0.0) != base;
    CHECK(differs);
  }
}

TEST_CASE("actor parameter counts") {
  for (int n : {2, 4, 8}) {
    ScenarioConfig c = test::small_coop(n, 4);
    c.max_users_per_node = 10;
    auto env = make_environment(c, 1, 2);
    const auto dims = agent_dims(env);
    DdpgAgent gcn(AgentKind::gcn_rl, dims, NetworkConfig{}, TrainingConfig{}, 1);
    DdpgAgent rgrl(AgentKind::rgrl, dims, NetworkConfig{}, TrainingConfig{}, 1);
    CHECK(gcn.actor_parameter_count() == rgrl.actor_parameter_count());
    static std::size_t first = 0;
    if (n == 2) first = rgrl.actor_parameter_count();
    CHECK(rgrl.actor_parameter_count() == first);
    DdpgAgent dense(AgentKind::dense_rl, dims, NetworkConfig{}, TrainingConfig{}, 1);
    DdpgAgent dense_r(AgentKind::dense_rrl, dims, NetworkConfig{}, TrainingConfig{}, 1);
    CHECK(dense.actor_parameter_count() == dense_r.actor_parameter_count());
    CHECK(dense.actor_parameter_count() > rgrl.actor_parameter_count());
    CHECK(make_policy(AgentKind::random, dims, NetworkConfig{}, TrainingConfig{}, 1)->actor_parameter_count() == 0);
  }
}

TEST_CASE("replay buffer ring and sampling") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.reward = i;
    buf.push(t);
  }
  CHECK(buf.size() == 3);
  std::vector<double> rewards;
  for (std::size_t i = 0; i < 3; ++i) rewards.push_back(buf.at(i).reward);
  std::sort(rewards.begin(), rewards.end());
  CHECK(rewards == std::vector<double>{2.0, 3.0, 4.0});
  Rng rng(1);
  CHECK_THROWS(buf.sample_indices(4, rng));
  auto idx = buf.sample_indices(3, rng);
  std::sort(idx.begin(), idx.end());
  CHECK(idx == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("replay sampling is uniform") {
  ReplayBuffer buf(100);
  for (int i = 0; i < 100; ++i) buf.push(Transition{});
  Rng rng(2024);
  const int calls = 10000;
  const int batch = 10;
  std::vector<int> hits(100, 0);
  for (int c = 0; c < calls; ++c)
    for (auto i : buf.sample_indices(batch, rng)) ++hits[i];
  const double p = static_cast<double>(batch) / 100.0;
  const double mean = calls * p;
  const double sd = std::sqrt(calls * p * (1.0 - p));
  for (int h : hits) CHECK(std::abs(h - mean) <= 3.0 * sd);
}

TEST_CASE("critic loss by hand") {
  auto env = make_environment(test::tiny_single_node(), 1, 2);
  const auto dims = agent_dims(env);
  TrainingConfig t = small_training();
  t.critic_batch = 1;
  DdpgAgent agent(AgentKind::rgrl, dims, small_net(), t, 1);
  ReplayBuffer buf(4);
  Rng rng(5);
  buf.push(random_transition(env, dims.layout, rng));
  const Batch b = make_batch(buf, {0});
  CHECK(b.size == 1);
  CHECK(b.obs.rows() == dims.n_nodes);
  CHECK(b.reward.rows() == 1);

  Tape tape;
  const Matrix obs_flat = b.obs.reshaped<Eigen::RowMajor>(1, b.obs.size());
  const Matrix act_flat = b.action.reshaped<Eigen::RowMajor>(1, b.action.size());
  const double q = tape.value(agent.critic().forward(tape, tape.constant(obs_flat), tape.constant(act_flat)))(0, 0);
  CHECK(agent.critic_loss(b, Matrix::Constant(1, 1, q + 2.0), false) == doctest::Approx(4.0));

  CHECK(agent.critic_loss(b, Matrix::Constant(1, 1, q), true) == doctest::Approx(0.0).epsilon(1e-12));
  for (auto* p : agent.critic().parameters()) CHECK(p->grad.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("critic loss gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    NetworkConfig net;
    net.critic_hidden = {5};
    net.hidden_activation = Activation::tanh;
    CriticNet critic(2, 2, net, rng);  // (4*5+5) + (5+1) = 31
    CHECK(autonet::param_count(critic) == 31);
    const Matrix o = random_matrix(6, 2, rng);
    const Matrix a = random_matrix(6, 2, rng);
    const Matrix y = random_matrix(6, 1, rng);
    auto loss = [&](bool back) {
      Tape tape;
      const Var l = tape.mse(critic.forward(tape, tape.constant(o), tape.constant(a)), y);
      if (back) tape.backward(l);
      return tape.value(l)(0, 0);
    };
    for (auto* p : critic.parameters()) p->zero_grad();
    loss(true);
    CHECK(test::max_fd_error([&] { return loss(false); }, critic.parameters()) < 1e-4);
  }
}

TEST_CASE("actor objective chain rule matches finite differences") {
  auto env = make_environment(test::tiny_single_node(), 1, 2);
  const auto dims = agent_dims(env);
  for (auto kind : {AgentKind::rgrl, AgentKind::dense_rrl}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      DdpgAgent agent(kind, dims, small_net(), small_training(), seed);
      ReplayBuffer buf(16);
      Rng rng(seed + 10);
      for (int i = 0; i < 4; ++i) buf.push(random_transition(env, dims.layout, rng));
      const Batch b = make_batch(buf, {0, 1, 2, 3});
      agent.actor_objective(b, true);
      // gradients hold d(-J)
      auto params = agent.actor().parameters();
      const double err = test::max_fd_error([&] { return -agent.actor_objective(b, false); }, params);
      CHECK_MESSAGE(err < 1e-4, to_string(kind) << " seed " << seed);
      for (auto* p : agent.critic().parameters()) CHECK(p->grad.isZero());
    }
  }
}

TEST_CASE("constant critic gives a zero actor gradient") {
  auto env = make_environment(test::tiny_single_node(), 1, 2);
  const auto dims = agent_dims(env);
  TrainingConfig t = small_training();
  t.actor_batch = 4;
  DdpgAgent agent(AgentKind::rgrl, dims, small_net(), t, 1);
  for (auto* p : agent.critic().parameters()) p->value.setZero();
  agent.critic().parameters().back()->value.setConstant(0.7);
  ReplayBuffer buf(16);
  Rng rng(3);
  for (int i = 0; i < 4; ++i) buf.push(random_transition(env, dims.layout, rng));
  std::vector<Matrix> before;
  for (auto* p : agent.actor().parameters()) before.push_back(p->value);
  const auto j = agent.actor_update(buf);
  REQUIRE(j.has_value());
  CHECK(*j == doctest::Approx(0.7));
  const auto params = agent.actor().parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(params[i]->grad.isZero());
    CHECK((params[i]->value - before[i]).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("one update moves toward the favoured vertex") {
  auto env = make_environment(two_user_node(), 1, 2);
  const auto dims = agent_dims(env);
  REQUIRE(dims.layout.width() == 1 + 2 + 4);
  NetworkConfig net = small_net();
  net.critic_hidden = {};
  TrainingConfig t = small_training();
  t.actor_batch = 1;
  DdpgAgent agent(AgentKind::rgrl, dims, net, t, 2);
  const int favoured = dims.layout.user_rb_offset();  // z of the first user
  auto cp = agent.critic().parameters();
  cp[0]->value.setZero();
  cp[0]->value(env.feature_width() + favoured, 0) = 1.0;
  ReplayBuffer buf(4);
  Rng rng(1);
  buf.push(random_transition(env, dims.layout, rng));
  const auto& tr = buf.at(0);
  const double before = agent.act(tr.obs, tr.prev_action, 0.0)(0, favoured);
  REQUIRE(agent.actor_update(buf).has_value());
  const double after = agent.act(tr.obs, tr.prev_action, 0.0)(0, favoured);
  CHECK(after > before);
}

TEST_CASE("updates wait for a full mini-batch") {
  auto env = make_environment(test::tiny_single_node(), 1, 2);
  const auto dims = agent_dims(env);
  DdpgAgent agent(AgentKind::gcn_rl, dims, small_net(), small_training(), 1);
  ReplayBuffer buf(16);
  Rng rng(3);
  for (int i = 0; i < 7; ++i) buf.push(random_transition(env, dims.layout, rng));
  CHECK_FALSE(agent.critic_update(buf).has_value());
  CHECK_FALSE(agent.actor_update(buf).has_value());
  buf.push(random_transition(env, dims.layout, rng));
  CHECK(agent.critic_update(buf).has_value());
  CHECK(agent.actor_update(buf).has_value());
}

TEST_CASE("zero episodes leave the agent untouched") {
  auto env = make_environment(test::tiny_single_node(), 1, 2);
  const auto dims = agent_dims(env);
  TrainingConfig t = small_training();
  t.episodes = 0;
  DdpgAgent agent(AgentKind::rgrl, dims, small_net(), t, 1);
  std::vector<Matrix> before;
  for (auto* p : agent.online_parameters()) before.push_back(p->value);
  const auto log = train(env, agent);
  CHECK(log.episodes.empty());
  const auto after = agent.online_parameters();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i]->value == before[i]);
}

TEST_CASE("training is deterministic") {
  auto run = [] {
    auto env = make_environment(test::tiny_single_node(), 1, 2);
    DdpgAgent agent(AgentKind::rgrl, agent_dims(env), small_net(Activation::relu), small_training(), 9);
    std::ostringstream os;
    train(env, agent).write_csv(os);
    return os.str();
  };
  const std::string a = run();
  CHECK(a == run());
  CHECK(a.rfind("episode,mean_reward,critic_loss,actor_objective,sigma\n", 0) == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 4);
}

TEST_CASE("training log records sigma decay") {
  auto env = make_environment(test::tiny_single_node(), 1, 2);
  TrainingConfig t = small_training();
  DdpgAgent agent(AgentKind::gcn_rl, agent_dims(env), small_net(), t, 2);
  const auto log = train(env, agent);
  REQUIRE(log.episodes.size() == 3);
  CHECK(log.episodes[0].sigma == t.sigma);
  CHECK(log.episodes[2].sigma == doctest::Approx(t.sigma * t.sigma_decay * t.sigma_decay));
  for (const auto& e : log.episodes) {
    CHECK(e.mean_reward >= 0.0);
    CHECK(e.mean_reward <= 1.0);
    CHECK_FALSE(e.aborted);
  }
}

TEST_CASE("a non-finite loss aborts the episode") {
  auto env = make_environment(test::tiny_single_node(), 1, 2);
  DdpgAgent agent(AgentKind::rgrl, agent_dims(env), small_net(), small_training(), 1);
  agent.critic().parameters().front()->value(0, 0) = std::nan("");
  agent.target_critic().parameters().front()->value(0, 0) = std::nan("");
  std::ostringstream diag;
  const auto log = train(env, agent, &diag);
  bool aborted = false;
  for (const auto& e : log.episodes) aborted = aborted || e.aborted;
  CHECK(aborted);
  CHECK_FALSE(diag.str().empty());

  DdpgAgent again(AgentKind::rgrl, agent_dims(env), small_net(), small_training(), 1);
  again.critic().parameters().front()->value(0, 0) = std::nan("");
  CHECK_THROWS(train(env, again));
}

TEST_CASE("agent checkpoint round trip") {
  auto env = make_environment(test::tiny_single_node(), 1, 2);
  const auto dims = agent_dims(env);
  DdpgAgent a(AgentKind::rgrl, dims, small_net(), small_training(), 1);
  train(env, a);
  const auto dir = std::filesystem::temp_directory_path() / "rgrl_agent_ckpt";
  std::filesystem::remove_all(dir);
  a.save(dir);
  DdpgAgent b(AgentKind::rgrl, dims, small_net(), small_training(), 77);
  b.load(dir);
  const Matrix obs = env.observe();
  CHECK(a.act(obs, dims.layout.uniform(), 0.0) == b.act(obs, dims.layout.uniform(), 0.0));
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation returns one SSR per episode") {
  auto env = make_environment(test::tiny_single_node(), 1, 2);
  const auto dims = agent_dims(env);
  RandomPolicy random(dims.layout, 3);
  int steps = 0;
  const auto ssr = evaluate(env, random, 4, 10, [&](const StepRecord& r) {
    ++steps;
    CHECK(r.action != nullptr);
  });
  CHECK(ssr.size() == 4);
  CHECK(steps == 40);
  for (double s : ssr) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}
