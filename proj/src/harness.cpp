#include "rgrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace rgrl {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what);
}

template <typename T>
T get_field(const json& v, const std::string& field) {
  try {
    if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t> || std::is_same_v<T, std::size_t>) {
      if (!v.is_number_integer()) fail(field, "expected an integer");
      if constexpr (!std::is_same_v<T, int>)
        if (v.is_number_integer() && v.get<long long>() < 0) fail(field, "must be non-negative");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) fail(field, "expected a number");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(field, "expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(field, "expected a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    fail(field, e.what());
  }
}

template <typename T>
std::vector<T> get_list(const json& v, const std::string& field) {
  if (!v.is_array()) fail(field, "expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_field<T>(v[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Activation parse_activation(const std::string& s, const std::string& field) {
  for (auto a : {Activation::identity, Activation::relu, Activation::tanh, Activation::sigmoid})
    if (s == to_string(a)) return a;
  fail(field, "expected identity, relu, tanh or sigmoid");
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
  os << "\n";
}

std::string point_dir(const SweepPoint& p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "point%03d", p.index);
  return buf;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Experiment

std::vector<SweepPoint> Experiment::sweep_points() const {
  const std::vector<int> us = users.empty() ? std::vector<int>{scenario.n_users} : users;
  const std::vector<int> ns = nodes.empty() ? std::vector<int>{scenario.n_nodes} : nodes;
  const std::vector<double> cs = compute_hz.empty() ? std::vector<double>{scenario.compute_hz} : compute_hz;
  const std::vector<int> zs = rb_counts.empty() ? std::vector<int>{scenario.rb_count} : rb_counts;
  std::vector<SweepPoint> out;
  for (int z : zs)
    for (double c : cs)
      for (int n : ns)
        for (int u : us) out.push_back({static_cast<int>(out.size()), u, n, c, z});
  return out;
}

ScenarioConfig Experiment::config_at(const SweepPoint& p) const {
  ScenarioConfig c = scenario;
  c.n_users = p.n_users;
  c.n_nodes = p.n_nodes;
  c.compute_hz = p.compute_hz;
  c.rb_count = p.rb_count;
  return apply_scenario(c, c.scenario);
}

void Experiment::validate() const {
  if (scenario.scenario == Scenario::single_node && scenario.n_nodes != 1)
    fail("N", "the single-node scenario requires N = 1");
  if (scenario.scenario == Scenario::single_node)
    for (int n : nodes)
      if (n != 1) fail("experiment.sweep.N", "the single-node scenario requires N = 1");
  if (scenario.scenario == Scenario::noncoop_multi && scenario.max_neighbors != 0)
    fail("A_max", "the non-cooperative scenario requires A_max = 0");
  if (agents.empty()) fail("experiment.agents", "at least one agent is required");
  if (eval_episodes < 1) fail("experiment.eval_episodes", "must be positive");
  if (eval_steps < 0) fail("experiment.eval_steps", "must be non-negative");
  if (workers < 1) fail("experiment.workers", "must be positive");
  training.validate();
  for (const auto& p : sweep_points()) {
    ScenarioConfig c = scenario;
    c.n_users = p.n_users;
    c.n_nodes = p.n_nodes;
    c.compute_hz = p.compute_hz;
    c.rb_count = p.rb_count;
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (sweep point " + std::to_string(p.index) + ")");
    }
    if (c.max_nodes < c.n_nodes) fail("max_nodes", "must be at least N at every sweep point");
  }
}

// ---------------------------------------------------------------------------
// Statistics

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BoxStats box_stats(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("box_stats: empty input");
  BoxStats s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.variance = ss / static_cast<double>(values.size());
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  if (s.min == s.max) {
    s.mean = s.min;
    s.variance = 0.0;
  }
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  return s;
}

// ---------------------------------------------------------------------------
// Running

Environment make_point_environment(const Experiment& exp, const SweepPoint& point, std::uint64_t dynamics_seed) {
  const ScenarioConfig cfg = exp.config_at(point);
  const std::uint64_t structure_seed = mix_seed(exp.train_seed, static_cast<std::uint64_t>(point.index));
  NodeLayout layout = build_layout(cfg, structure_seed);
  Graph graph = build_graph(layout, cfg.max_neighbors, cfg.coop_penalty);
  Population pop = build_population(cfg, structure_seed);
  return Environment(cfg, std::move(layout), std::move(graph), std::move(pop), dynamics_seed);
}

std::uint64_t train_dynamics_seed(const Experiment& exp) { return derive_seed(exp.train_seed, "train-dynamics"); }
std::uint64_t eval_dynamics_seed(const Experiment& exp) { return derive_seed(exp.eval_seed, "eval-dynamics"); }
std::uint64_t agent_seed(const Experiment& exp) { return derive_seed(exp.train_seed, "agent"); }

EvalReport run_job(const Experiment& exp, const SweepPoint& point, AgentKind agent,
                   const std::filesystem::path& job_dir, std::ostream* log) {
  Environment train_env = make_point_environment(exp, point, train_dynamics_seed(exp));
  Environment eval_env = make_point_environment(exp, point, eval_dynamics_seed(exp));
  const ScenarioConfig& cfg = train_env.config();
  const AgentDims dims = agent_dims(train_env);
  auto policy = make_policy(agent, dims, exp.network, exp.training, agent_seed(exp));

  if (!job_dir.empty()) std::filesystem::create_directories(job_dir);
  if (auto* ddpg = dynamic_cast<DdpgAgent*>(policy.get())) {
    const TrainingLog tlog = train(train_env, *ddpg, log);
    if (!job_dir.empty()) {
      std::ostringstream os;
      tlog.write_csv(os);
      write_text(job_dir / "train_log.csv", os.str());
      if (exp.write_checkpoints) ddpg->save(job_dir / "checkpoint");
    }
  }

  const bool noncoop = cfg.scenario == Scenario::noncoop_multi;
  std::ostringstream traj;
  traj << "episode,t,reward,satisfied,generated\n";
  auto observer = [&](const StepRecord& r) {
    if (noncoop) {
      const auto& c = r.action->node_compute;
      for (std::size_t n = 0; n < c.size(); ++n)
        for (std::size_t j = 0; j < c[n].size(); ++j)
          if (c[n][j] != (n == j ? 1.0 : 0.0))
            throw std::logic_error("non-cooperative scenario executed a cross-node compute share");
    }
    if (exp.write_trajectories)
      traj << r.episode << "," << r.t << "," << format_double(r.reward) << "," << r.satisfied << "," << r.generated
           << "\n";
  };
  const int steps = exp.eval_steps > 0 ? exp.eval_steps : exp.training.steps_per_episode;
  EvalReport rep;
  rep.agent = agent;
  rep.point = point;
  rep.ssr = evaluate(eval_env, *policy, exp.eval_episodes, steps, observer);
  rep.stats = box_stats(rep.ssr);
  rep.actor_params = policy->actor_parameter_count();
  if (auto* ddpg = dynamic_cast<DdpgAgent*>(policy.get())) rep.critic_params = ddpg->critic_parameter_count();
  if (!job_dir.empty()) {
    std::ostringstream os;
    os << "episode,ssr\n";
    for (std::size_t i = 0; i < rep.ssr.size(); ++i) os << i << "," << format_double(rep.ssr[i]) << "\n";
    write_text(job_dir / "eval_ssr.csv", os.str());
    if (exp.write_trajectories) write_text(job_dir / "trajectory.csv", traj.str());
  }
  return rep;
}

std::vector<EvalReport> run_experiment(const Experiment& exp, const std::filesystem::path& out_dir,
                                       std::ostream* log) {
  exp.validate();
  const auto points = exp.sweep_points();
  struct Job {
    SweepPoint point;
    AgentKind agent;
  };
  std::vector<Job> jobs;
  for (const auto& p : points)
    for (auto a : exp.agents) jobs.push_back({p, a});

  std::vector<EvalReport> reports(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::mutex log_mutex;
  std::size_t next = 0;
  std::mutex next_mutex;
  auto worker = [&]() {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= jobs.size()) return;
        i = next++;
      }
      const auto& job = jobs[i];
      const auto dir = out_dir.empty() ? std::filesystem::path()
                                       : out_dir / point_dir(job.point) / std::string(to_string(job.agent));
      std::ostringstream job_log;
      try {
        reports[i] = run_job(exp, job.point, job.agent, dir, log ? &job_log : nullptr);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        *log << job_log.str() << "[" << point_dir(job.point) << "/" << to_string(job.agent) << "] "
             << (errors[i].empty() ? "mean SSR " + format_double(reports[i].stats.mean) : "failed: " + errors[i])
             << "\n";
      }
    }
  };
  const int n_threads = std::min<int>(exp.workers, static_cast<int>(jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (std::size_t i = 0; i < jobs.size(); ++i)
    if (!errors[i].empty())
      throw std::runtime_error(point_dir(jobs[i].point) + "/" + std::string(to_string(jobs[i].agent)) + ": " +
                               errors[i]);
  return reports;
}

// ---------------------------------------------------------------------------
// Reports

std::string summary_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  write_csv_row(os, {"point", "U", "N", "C_B_hz", "Z_B", "agent", "episodes", "mean", "variance", "min", "q1",
                     "median", "q3", "max", "actor_params", "critic_params"});
  for (const auto& r : reports) {
    write_csv_row(os, {std::to_string(r.point.index), std::to_string(r.point.n_users),
                       std::to_string(r.point.n_nodes), format_double(r.point.compute_hz),
                       std::to_string(r.point.rb_count), std::string(to_string(r.agent)), std::to_string(r.ssr.size()),
                       format_double(r.stats.mean), format_double(r.stats.variance), format_double(r.stats.min),
                       format_double(r.stats.q1), format_double(r.stats.median), format_double(r.stats.q3),
                       format_double(r.stats.max), std::to_string(r.actor_params), std::to_string(r.critic_params)});
  }
  return os.str();
}

json reports_json(const std::vector<EvalReport>& reports) {
  json out;
  out["schema_version"] = kReportSchemaVersion;
  auto& arr = out["reports"] = json::array();
  for (const auto& r : reports) {
    arr.push_back({{"agent", std::string(to_string(r.agent))},
                   {"point",
                    {{"index", r.point.index},
                     {"U", r.point.n_users},
                     {"N", r.point.n_nodes},
                     {"C_B_hz", r.point.compute_hz},
                     {"Z_B", r.point.rb_count}}},
                   {"ssr", r.ssr},
                   {"mean", r.stats.mean},
                   {"variance", r.stats.variance},
                   {"min", r.stats.min},
                   {"q1", r.stats.q1},
                   {"median", r.stats.median},
                   {"q3", r.stats.q3},
                   {"max", r.stats.max},
                   {"actor_params", r.actor_params},
                   {"critic_params", r.critic_params}});
  }
  return out;
}

std::vector<EvalReport> reports_from_json(const json& j) {
  if (!j.is_object() || !j.contains("schema_version") || !j.contains("reports"))
    fail("reports", "expected an object with schema_version and reports");
  const int version = get_field<int>(j.at("schema_version"), "schema_version");
  if (version != kReportSchemaVersion)
    fail("schema_version", "unsupported version " + std::to_string(version));
  std::vector<EvalReport> out;
  for (const auto& e : j.at("reports")) {
    EvalReport r;
    r.agent = parse_agent_kind(get_field<std::string>(e.at("agent"), "agent"));
    const auto& p = e.at("point");
    r.point = {get_field<int>(p.at("index"), "point.index"), get_field<int>(p.at("U"), "point.U"),
               get_field<int>(p.at("N"), "point.N"), get_field<double>(p.at("C_B_hz"), "point.C_B_hz"),
               get_field<int>(p.at("Z_B"), "point.Z_B")};
    r.ssr = get_list<double>(e.at("ssr"), "ssr");
    if (r.ssr.empty()) fail("ssr", "empty evaluation run");
    r.stats = box_stats(r.ssr);
    r.actor_params = get_field<std::size_t>(e.at("actor_params"), "actor_params");
    r.critic_params = get_field<std::size_t>(e.at("critic_params"), "critic_params");
    out.push_back(std::move(r));
  }
  return out;
}

void summarize(const std::vector<EvalReport>& reports, const std::filesystem::path& out_dir) {
  if (reports.empty()) throw std::invalid_argument("summarize: no reports");
  write_text(out_dir / "summary.csv", summary_csv(reports));
  write_text(out_dir / "summary.json", reports_json(reports).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Configuration files

void from_json(const json& j, TrainingConfig& c) {
  if (!j.is_object()) fail("training", "expected an object");
  for (const auto& [key, v] : j.items()) {
    const std::string f = "training." + key;
    if (key == "discount") c.discount = get_field<double>(v, f);
    else if (key == "sigma") c.sigma = get_field<double>(v, f);
    else if (key == "sigma_decay") c.sigma_decay = get_field<double>(v, f);
    else if (key == "buffer_capacity") c.buffer_capacity = get_field<std::size_t>(v, f);
    else if (key == "critic_batch") c.critic_batch = get_field<int>(v, f);
    else if (key == "actor_batch") c.actor_batch = get_field<int>(v, f);
    else if (key == "tau") c.tau = get_field<double>(v, f);
    else if (key == "target_period") c.target_period = get_field<int>(v, f);
    else if (key == "episodes") c.episodes = get_field<int>(v, f);
    else if (key == "steps_per_episode") c.steps_per_episode = get_field<int>(v, f);
    else if (key == "update_every") c.update_every = get_field<int>(v, f);
    else if (key == "actor_lr") c.actor_adam.learning_rate = get_field<double>(v, f);
    else if (key == "critic_lr") c.critic_adam.learning_rate = get_field<double>(v, f);
    else fail(f, "unknown configuration key");
  }
}

void to_json(json& j, const TrainingConfig& c) {
  j = {{"discount", c.discount},
       {"sigma", c.sigma},
       {"sigma_decay", c.sigma_decay},
       {"buffer_capacity", c.buffer_capacity},
       {"critic_batch", c.critic_batch},
       {"actor_batch", c.actor_batch},
       {"tau", c.tau},
       {"target_period", c.target_period},
       {"episodes", c.episodes},
       {"steps_per_episode", c.steps_per_episode},
       {"update_every", c.update_every},
       {"actor_lr", c.actor_adam.learning_rate},
       {"critic_lr", c.critic_adam.learning_rate}};
}

void from_json(const json& j, NetworkConfig& c) {
  if (!j.is_object()) fail("network", "expected an object");
  for (const auto& [key, v] : j.items()) {
    const std::string f = "network." + key;
    if (key == "actor_hidden") c.actor_hidden = get_list<int>(v, f);
    else if (key == "critic_hidden") c.critic_hidden = get_list<int>(v, f);
    else if (key == "hidden_activation") c.hidden_activation = parse_activation(get_field<std::string>(v, f), f);
    else fail(f, "unknown configuration key");
  }
  for (int h : c.actor_hidden)
    if (h < 1) fail("network.actor_hidden", "layer widths must be positive");
  for (int h : c.critic_hidden)
    if (h < 1) fail("network.critic_hidden", "layer widths must be positive");
}

void to_json(json& j, const NetworkConfig& c) {
  j = {{"actor_hidden", c.actor_hidden},
       {"critic_hidden", c.critic_hidden},
       {"hidden_activation", std::string(to_string(c.hidden_activation))}};
}

Experiment experiment_from_json(const json& j) {
  if (!j.is_object()) fail("config", "expected a JSON object");
  Experiment exp;
  const bool sectioned = j.contains("scenario") || j.contains("training") || j.contains("network") ||
                         j.contains("experiment");
  if (!sectioned) {
    from_json(j, exp.scenario);
  } else {
    for (const auto& [key, v] : j.items()) {
      if (key == "scenario") from_json(v, exp.scenario);
      else if (key == "training") from_json(v, exp.training);
      else if (key == "network") from_json(v, exp.network);
      else if (key == "experiment") {
        if (!v.is_object()) fail("experiment", "expected an object");
        for (const auto& [k, e] : v.items()) {
          const std::string f = "experiment." + k;
          if (k == "agents") {
            exp.agents.clear();
            for (const auto& s : get_list<std::string>(e, f)) exp.agents.push_back(parse_agent_kind(s));
          } else if (k == "sweep") {
            if (!e.is_object()) fail(f, "expected an object with U, N, C_B_hz or Z_B lists");
            for (const auto& [axis, values] : e.items()) {
              const std::string fa = f + "." + axis;
              if (axis == "U") exp.users = get_list<int>(values, fa);
              else if (axis == "N") exp.nodes = get_list<int>(values, fa);
              else if (axis == "C_B_hz") exp.compute_hz = get_list<double>(values, fa);
              else if (axis == "Z_B") exp.rb_counts = get_list<int>(values, fa);
              else fail(fa, "unknown sweep axis");
            }
          } else if (k == "train_seed") exp.train_seed = get_field<std::uint64_t>(e, f);
          else if (k == "eval_seed") exp.eval_seed = get_field<std::uint64_t>(e, f);
          else if (k == "eval_episodes") exp.eval_episodes = get_field<int>(e, f);
          else if (k == "eval_steps") exp.eval_steps = get_field<int>(e, f);
          else if (k == "workers") exp.workers = get_field<int>(e, f);
          else if (k == "trajectories") exp.write_trajectories = get_field<bool>(e, f);
          else if (k == "checkpoints") exp.write_checkpoints = get_field<bool>(e, f);
          else fail(f, "unknown configuration key");
        }
      } else {
        fail(key, "unknown section (expected scenario, network, training or experiment)");
      }
    }
  }
  exp.scenario.validate();
  exp.training.validate();
  return exp;
}

json to_json(const Experiment& exp) {
  json agents = json::array();
  for (auto a : exp.agents) agents.push_back(std::string(to_string(a)));
  json sweep = json::object();
  if (!exp.users.empty()) sweep["U"] = exp.users;
  if (!exp.nodes.empty()) sweep["N"] = exp.nodes;
  if (!exp.compute_hz.empty()) sweep["C_B_hz"] = exp.compute_hz;
  if (!exp.rb_counts.empty()) sweep["Z_B"] = exp.rb_counts;
  return {{"scenario", exp.scenario},
          {"network", exp.network},
          {"training", exp.training},
          {"experiment",
           {{"agents", agents},
            {"sweep", sweep},
            {"train_seed", exp.train_seed},
            {"eval_seed", exp.eval_seed},
            {"eval_episodes", exp.eval_episodes},
            {"eval_steps", exp.eval_steps},
            {"workers", exp.workers},
            {"trajectories", exp.write_trajectories},
            {"checkpoints", exp.write_checkpoints}}}};
}

Experiment load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: malformed JSON in '" + path + "': " + e.what());
  }
  return experiment_from_json(j);
}

}  // namespace rgrl
