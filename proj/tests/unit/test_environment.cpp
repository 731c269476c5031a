#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rgrl/environment.hpp"
#include "support.hpp"

using namespace rgrl;

namespace {

// Dirichlet(1) in every group of the layout.
Action random_action(const ActionLayout& layout, Rng& rng) {
  Matrix m = Matrix::Zero(layout.n_nodes(), layout.width());
  for (int n = 0; n < layout.n_nodes(); ++n)
    for (const auto& g : layout.groups(n)) {
      double sum = 0.0;
      for (int k = 0; k < g.length; ++k) sum += m(n, g.offset + k) = rng.exponential();
      for (int k = 0; k < g.length; ++k) m(n, g.offset + k) /= sum;
    }
  return layout.decode(m);
}

SlotDraws fixed_draws(std::size_t n, double arrival_u, double size_u, double fading) {
  SlotDraws d;
  d.arrival_uniform.assign(n, arrival_u);
  d.size_uniform.assign(n, size_u);
  d.fading.assign(n, fading);
  return d;
}

}  // namespace

TEST_CASE("Pareto sample mean matches zeta delta / (zeta - 1)") {
  Rng rng(11);
  const double delta = 125.0;
  const double zeta = 5.0;
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) sum += pareto_inverse_cdf(delta, zeta, rng.uniform_open());
  CHECK(std::abs(sum / n - 156.25) / 156.25 < 0.01);
}

TEST_CASE("mMTC task sizes exceed the threshold") {
  Rng rng(3);
  UserProfile u;
  u.arrival_prob = 0.5;
  u.pareto_shape = 7.0;
  u.threshold_bits = 125.0 * 8.0;
  for (int i = 0; i < 10000; ++i) {
    const auto t = sample_task(u, rng.uniform_open(), rng.uniform_open());
    if (t.arrived) CHECK(t.size_bits > 1000.0);
    else CHECK(t.size_bits == 0.0);
  }
  CHECK(sample_task(u, 0.1, 1.0).size_bits > 1000.0);
}

TEST_CASE("kappa = 1 always arrives") {
  Rng rng(5);
  UserProfile u;
  u.arrival_prob = 1.0;
  u.threshold_bits = 8.0;
  for (int i = 0; i < 10000; ++i) CHECK(sample_task(u, rng.uniform_open(), rng.uniform_open()).arrived);
}

TEST_CASE("masked compute shares renormalize over neighbours") {
  const std::vector<double> row{1.0, 1.0, 0.0};
  const std::vector<double> frac{0.2, 0.3, 0.5};
  const auto s = masked_compute_shares(row, frac);
  CHECK(s[0] == doctest::Approx(0.4));
  CHECK(s[1] == doctest::Approx(0.6));
  CHECK(s[2] == 0.0);
}

TEST_CASE("masked shares fall back to uniform over the neighbourhood") {
  const std::vector<double> row{1.0, 0.0, 1.0};
  const std::vector<double> frac{0.0, 1.0, 0.0};
  const auto s = masked_compute_shares(row, frac);
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == 0.0);
  CHECK(s[2] == doctest::Approx(0.5));
}

TEST_CASE("computing speed orientations") {
  CHECK(compute_rate(1e10, 15.0, RcOrientation::corrected) == doctest::Approx(6.667e8).epsilon(1e-3));
  CHECK(compute_rate(1e10, 15.0, RcOrientation::paper) == doctest::Approx(1.5e-9));
  CHECK(compute_rate(0.0, 15.0, RcOrientation::corrected) == 0.0);
}

TEST_CASE("transmit rate example and linearity in RBs") {
  CHECK(transmit_rate(1.0, 0.18e6, 3.0) == doctest::Approx(0.36e6));
  CHECK(transmit_rate(2.0, 0.18e6, 3.0) == doctest::Approx(0.72e6));
  const auto b = LinkBudget::from(ScenarioConfig{});
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double h = rng.exponential() * 1e-3;
    const double z = rng.uniform(0.1, 10.0);
    const double g1 = snr(h, z, b, 0.18e6);
    CHECK(std::abs(g1 - snr(h, 2.0 * z, b, 0.18e6)) <= 1e-12 * g1);
    CHECK(std::abs(g1 - snr(h, b, 0.18e6)) <= 1e-12 * g1);
    CHECK(transmit_rate(2.0 * z, 0.18e6, g1) == doctest::Approx(2.0 * transmit_rate(z, 0.18e6, g1)));
  }
}

TEST_CASE("population structure") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    ScenarioConfig c;
    c.n_nodes = 3;
    c.n_users = 30;
    c.slices_min = 2;
    c.slices_max = 5;
    for (auto t : kServiceTypes) c.service(t).min_users = 2;
    const auto pop = build_population(c, seed);
    REQUIRE(pop.n_nodes() == 3);
    CHECK(pop.n_users() == 30);
    int total = 0;
    for (int n = 0; n < 3; ++n) {
      const auto& node = pop.nodes[static_cast<std::size_t>(n)];
      const int s = static_cast<int>(node.slices.size());
      CHECK(s >= 2);
      CHECK(s <= 5);
      std::array<int, 3> per_type{};
      int slot = 0;
      for (int k = 0; k < s; ++k) {
        const auto& sl = node.slices[static_cast<std::size_t>(k)];
        CHECK(!sl.users.empty());
        for (int u : sl.users) {
          const auto& p = pop.users[static_cast<std::size_t>(u)];
          CHECK(p.node == n);
          CHECK(p.slice == k);
          CHECK(p.slot == slot++);
          CHECK(p.service == sl.service);
          ++per_type[static_cast<std::size_t>(p.service)];
        }
        for (int q = 0; q < std::min(k, 3); ++q)
          if (k < 3) CHECK(node.slices[static_cast<std::size_t>(q)].service != sl.service);
      }
      for (auto t : kServiceTypes) {
        bool present = false;
        for (const auto& sl : node.slices) present = present || sl.service == t;
        if (present) CHECK(per_type[static_cast<std::size_t>(t)] >= 2);
      }
      CHECK(node.n_users == slot);
      total += node.n_users;
    }
    CHECK(total == 30);
  }
}

TEST_CASE("action layout encodes and decodes") {
  ScenarioConfig c = test::small_coop(3, 5);
  auto env = make_environment(c, 4, 5);
  ActionLayout layout(env.population(), c.max_nodes, false);
  CHECK(layout.width() == c.max_nodes + 2 * env.population().max_slices + 2 * env.population().max_users_per_node);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Action a = random_action(layout, rng);
    CHECK_NOTHROW(check_action(a, env.population()));
    const Action b = layout.decode(layout.encode(a));
    CHECK(layout.encode(b) == layout.encode(a));
  }
  const Action u = layout.decode(layout.uniform());
  CHECK(max_simplex_error(u) <= 1e-15);
  CHECK(layout.encode(u) == layout.encode(uniform_action(env.population())));
}

TEST_CASE("non-cooperative layout pins the compute split") {
  ScenarioConfig c = apply_scenario(test::small_coop(3, 5), Scenario::noncoop_multi);
  auto env = make_environment(c, 2, 3);
  ActionLayout layout(env.population(), c.max_nodes, true);
  for (int n = 0; n < 3; ++n) {
    const auto g = layout.groups(n).front();
    CHECK(g.offset == n);
    CHECK(g.length == 1);
  }
}

TEST_CASE("check_action rejects broken simplices") {
  auto env = make_environment(test::tiny_single_node(), 1, 2);
  Action a = uniform_action(env.population());
  CHECK_NOTHROW(check_action(a, env.population()));
  a.slice_rb[0][0] += 0.1;
  CHECK_THROWS_AS(check_action(a, env.population()), std::invalid_argument);
  a = uniform_action(env.population());
  a.user_compute[0][0][0] = -0.5;
  a.user_compute[0][0][1] = 1.5;
  CHECK_THROWS_AS(check_action(a, env.population()), std::invalid_argument);
}

TEST_CASE("latency of 10 ms satisfies eMBB and violates uRLLC") {
  ScenarioConfig c = test::tiny_single_node();
  auto env = make_environment(c, 1, 2);
  const Action a = uniform_action(env.population());
  const auto rc = effective_compute(a, env.graph(), env.population(), c);
  const auto rt = effective_rate(a, env.gains(), env.population(), c);
  const auto n = static_cast<std::size_t>(env.population().n_users());
  // arrival_u = 0 arrives for every kappa; size_u = 1 gives the threshold
  const auto draws = fixed_draws(n, 0.0, 1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = env.population().users[i];
    const double d = sample_task(p, 0.0, 1.0).size_bits;
    const double cq_next = std::max(d - rc[i], 0.0);
    const double target = 0.01 * std::min(rc[i], rt[i]);
    // pick V so that Q' + V' = 10 ms of bottleneck service
    auto& st = env.mutable_users()[i];
    st.cq_bits = 0.0;
    st.tq_bits = target - cq_next - std::min(d, rc[i]) + rt[i];
    REQUIRE(st.tq_bits >= 0.0);
  }
  const auto res = env.step(a, draws);
  CHECK(res.generated == static_cast<int>(n));
  int satisfied = 0;
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(res.latency_s[i] == doctest::Approx(0.01).epsilon(1e-9));
    const auto svc = env.population().users[i].service;
    const bool ok = res.latency_s[i] <= env.population().users[i].latency_req_s;
    if (svc == ServiceType::embb) CHECK(ok);
    if (svc == ServiceType::urllc) CHECK_FALSE(ok);
    satisfied += ok;
  }
  CHECK(res.satisfied == satisfied);
  CHECK(res.reward == doctest::Approx(static_cast<double>(satisfied) / n));
}

TEST_CASE("queues stay non-negative and the reward stays in [0, 1]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ScenarioConfig c = test::small_coop(3, 6);
    c.obs_window = 2;
    c.rb_count = 1 + static_cast<int>(seed % 3);
    c.compute_hz = 1e6 * static_cast<double>(1 + seed);
    auto env = make_environment(c, seed, seed + 100);
    ActionLayout layout(env.population(), c.max_nodes, false);
    Rng rng(seed);
    for (int t = 0; t < 200; ++t) {
      const auto res = env.step(random_action(layout, rng));
      CHECK(res.reward >= 0.0);
      CHECK(res.reward <= 1.0);
      CHECK(res.satisfied <= res.generated);
      if (res.generated == 0) CHECK(res.reward == 1.0);
      for (const auto& u : env.users()) {
        CHECK(u.cq_bits >= 0.0);
        CHECK(u.tq_bits >= 0.0);
        CHECK(std::isfinite(u.cq_bits));
      }
      for (double l : res.latency_s) CHECK(l >= 0.0);
      const Matrix h = env.observe();
      CHECK(h.allFinite());
      CHECK(h.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("no arrivals and no service leave the queues fixed") {
  ScenarioConfig c = test::tiny_single_node();
  for (auto t : kServiceTypes) c.service(t).arrival_prob = {0.5, 0.5};
  auto env = make_environment(c, 1, 2);
  Action a = uniform_action(env.population());
  // starve the second user of every slice
  for (std::size_t s = 0; s < a.user_compute[0].size(); ++s) {
    a.user_compute[0][s] = {1.0, 0.0};
    a.user_rb[0][s] = {1.0, 0.0};
  }
  for (auto& u : env.mutable_users()) {
    u.cq_bits = 5e5;
    u.tq_bits = 2e5;
  }
  const auto n = static_cast<std::size_t>(env.population().n_users());
  const auto res = env.step(a, fixed_draws(n, 0.9, 0.5, 1.0));
  CHECK(res.generated == 0);
  CHECK(res.reward == 1.0);
  for (const auto& node : env.population().nodes)
    for (const auto& sl : node.slices) {
      const auto& starved = env.users()[static_cast<std::size_t>(sl.users[1])];
      CHECK(starved.cq_bits == 5e5);
      CHECK(starved.tq_bits == 2e5);
      CHECK(std::isinf(res.latency_s[static_cast<std::size_t>(sl.users[1])]));
    }
}

TEST_CASE("empty queues report zero latency") {
  ScenarioConfig c = test::tiny_single_node();
  for (auto t : kServiceTypes) c.service(t).arrival_prob = {0.5, 0.5};
  auto env = make_environment(c, 1, 2);
  Action a = uniform_action(env.population());
  a.user_rb[0][0] = {1.0, 0.0};
  const auto n = static_cast<std::size_t>(env.population().n_users());
  const auto res = env.step(a, fixed_draws(n, 0.9, 0.5, 1.0));
  for (double l : res.latency_s) CHECK(l == 0.0);
}

TEST_CASE("observation layout") {
  ScenarioConfig c = test::tiny_single_node();
  c.obs_window = 2;
  c.max_users_per_node = 8;
  auto env = make_environment(c, 1, 2);
  const Matrix h = env.observe();
  CHECK(h.rows() == 1);
  CHECK(h.cols() == 8 * 5);
  CHECK(env.feature_width() == 40);
  for (int u = 0; u < 6; ++u) {
    CHECK(h(0, u * 5) == 0.0);
    CHECK(h(0, u * 5 + 1) == 0.0);
    const auto& st = env.users()[static_cast<std::size_t>(u)];
    CHECK(h(0, u * 5 + 2) == doctest::Approx(std::log1p(st.gain / env.mean_gain())));
  }
  for (int k = 30; k < 40; ++k) CHECK(h(0, k) == 0.0);
  auto& st = env.mutable_users()[0];
  st.cq_bits = c.backlog_scale_bits;
  CHECK(env.observe()(0, 0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("recent task history rotates newest first") {
  ScenarioConfig c = test::tiny_single_node();
  c.history_window = 3;
  c.obs_window = 3;
  auto env = make_environment(c, 1, 2);
  const Action a = uniform_action(env.population());
  const auto n = static_cast<std::size_t>(env.population().n_users());
  std::vector<double> sizes;
  for (double su : {0.9, 0.5, 0.2}) {
    env.step(a, fixed_draws(n, 0.0, su, 1.0));
    sizes.push_back(env.users()[0].task_bits);
  }
  const auto& r = env.users()[0].recent_tasks;
  CHECK(r[0] == sizes[2]);
  CHECK(r[1] == sizes[1]);
  CHECK(r[2] == sizes[0]);
}

TEST_CASE("same seeds give the same trajectory") {
  ScenarioConfig c = test::small_coop(2, 5);
  auto e1 = make_environment(c, 3, 4);
  auto e2 = make_environment(c, 3, 4);
  const Action a = uniform_action(e1.population());
  for (int t = 0; t < 50; ++t) {
    const auto r1 = e1.step(a);
    const auto r2 = e2.step(a);
    CHECK(r1.reward == r2.reward);
    CHECK(e1.observe() == e2.observe());
  }
}

TEST_CASE("ring mean gain matches a Monte Carlo estimate") {
  Rng rng(2);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double d = std::sqrt(rng.uniform(100.0, 10000.0));
    sum += std::pow(d, -2.0);
  }
  CHECK(sum / n == doctest::Approx(ring_mean_gain(10.0, 100.0, 2.0)).epsilon(0.01));
  CHECK(ring_mean_gain(10.0, 100.0, 3.0) > 0.0);
}
