#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "rgrl/agent.hpp"
#include "rgrl/harness.hpp"

namespace fs = std::filesystem;
using namespace rgrl;

namespace {

struct Options {
  std::string config;
  std::string scenario;
  std::string agent = "rgrl";
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> eval_seed;
  std::string out = "out";
  std::string checkpoint;
  std::string input;
  std::optional<int> episodes;
  std::optional<int> steps;
  std::optional<int> eval_episodes;
  std::optional<int> workers;
  bool quiet = false;
};

Experiment resolve(const Options& o) {
  Experiment exp = o.config.empty() ? Experiment{} : load_experiment(o.config);
  if (!o.scenario.empty()) {
    exp.scenario.scenario = parse_scenario(o.scenario);
    exp.scenario = apply_scenario(exp.scenario, exp.scenario.scenario);
    if (exp.scenario.scenario == Scenario::single_node) exp.nodes.clear();
  }
  if (o.seed) exp.train_seed = *o.seed;
  if (o.eval_seed) exp.eval_seed = *o.eval_seed;
  if (o.episodes) exp.training.episodes = *o.episodes;
  if (o.steps) exp.training.steps_per_episode = *o.steps;
  if (o.eval_episodes) exp.eval_episodes = *o.eval_episodes;
  if (o.workers) exp.workers = *o.workers;
  exp.validate();
  return exp;
}

std::ostream* log_sink(const Options& o) { return o.quiet ? nullptr : &std::cerr; }

void note(const Options& o, const std::string& msg) {
  if (!o.quiet) std::cerr << msg << "\n";
}

SweepPoint base_point(const Experiment& exp) {
  return {0, exp.scenario.n_users, exp.scenario.n_nodes, exp.scenario.compute_hz, exp.scenario.rb_count};
}

int cmd_train(const Options& o) {
  const Experiment exp = resolve(o);
  const AgentKind kind = parse_agent_kind(o.agent);
  const fs::path out = o.out;
  fs::create_directories(out);
  write_text(out / "config.json", to_json(exp).dump(2) + "\n");
  Environment env = make_point_environment(exp, base_point(exp), train_dynamics_seed(exp));
  auto policy = make_policy(kind, agent_dims(env), exp.network, exp.training, agent_seed(exp));
  auto* agent = dynamic_cast<DdpgAgent*>(policy.get());
  std::ostringstream csv;
  if (!agent) {
    TrainingLog{}.write_csv(csv);
    write_text(out / "train_log.csv", csv.str());
    note(o, "random agent has no parameters; wrote an empty training log");
    return 0;
  }
  const TrainingLog log = train(env, *agent, log_sink(o), [&](const StepRecord& r) {
    if (!o.quiet && r.t == 0 && r.episode % 50 == 0) std::cerr << "episode " << r.episode << "\n";
  });
  log.write_csv(csv);
  write_text(out / "train_log.csv", csv.str());
  const fs::path ckpt = o.checkpoint.empty() ? out / "checkpoint" : fs::path(o.checkpoint);
  agent->save(ckpt);
  if (!log.episodes.empty())
    note(o, "final episode mean reward " + format_double(log.episodes.back().mean_reward));
  note(o, "wrote " + (out / "train_log.csv").string() + " and " + ckpt.string());
  return 0;
}

int cmd_eval(const Options& o) {
  const Experiment exp = resolve(o);
  const AgentKind kind = parse_agent_kind(o.agent);
  const fs::path out = o.out;
  Environment env = make_point_environment(exp, base_point(exp), eval_dynamics_seed(exp));
  auto policy = make_policy(kind, agent_dims(env), exp.network, exp.training, agent_seed(exp));
  if (auto* agent = dynamic_cast<DdpgAgent*>(policy.get())) {
    if (o.checkpoint.empty()) throw ConfigError("checkpoint: required to evaluate a learned agent");
    agent->load(o.checkpoint);
  }
  std::ostringstream traj;
  traj << "episode,t,reward,satisfied,generated\n";
  const int steps = exp.eval_steps > 0 ? exp.eval_steps : exp.training.steps_per_episode;
  EvalReport rep;
  rep.agent = kind;
  rep.point = base_point(exp);
  rep.ssr = evaluate(env, *policy, exp.eval_episodes, steps, [&](const StepRecord& r) {
    traj << r.episode << "," << r.t << "," << format_double(r.reward) << "," << r.satisfied << "," << r.generated
         << "\n";
  });
  rep.stats = box_stats(rep.ssr);
  rep.actor_params = policy->actor_parameter_count();
  if (auto* agent = dynamic_cast<DdpgAgent*>(policy.get())) rep.critic_params = agent->critic_parameter_count();
  std::ostringstream ssr;
  ssr << "episode,ssr\n";
  for (std::size_t i = 0; i < rep.ssr.size(); ++i) ssr << i << "," << format_double(rep.ssr[i]) << "\n";
  write_text(out / "eval_ssr.csv", ssr.str());
  if (exp.write_trajectories) write_text(out / "trajectory.csv", traj.str());
  summarize({rep}, out);
  note(o, std::string(to_string(kind)) + ": mean SSR " + format_double(rep.stats.mean) + " over " +
              std::to_string(rep.ssr.size()) + " episodes");
  return 0;
}

int cmd_sweep(const Options& o) {
  Experiment exp = resolve(o);
  if (!o.agent.empty() && o.agent != "all") exp.agents = {parse_agent_kind(o.agent)};
  const fs::path out = o.out;
  fs::create_directories(out);
  write_text(out / "config.json", to_json(exp).dump(2) + "\n");
  const auto reports = run_experiment(exp, out, log_sink(o));
  summarize(reports, out);
  if (!o.quiet) std::cout << summary_csv(reports);
  return 0;
}

int cmd_report(const Options& o) {
  fs::path in = o.input.empty() ? fs::path(o.out) : fs::path(o.input);
  if (fs::is_directory(in)) in /= "summary.json";
  std::ifstream f(in);
  if (!f) throw ConfigError("input: cannot open '" + in.string() + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("input: malformed JSON in '" + in.string() + "': " + e.what());
  }
  const auto reports = reports_from_json(j);
  summarize(reports, o.out);
  std::cout << summary_csv(reports);
  return 0;
}

int cmd_validate(const Options& o) {
  const Experiment exp = resolve(o);
  const auto points = exp.sweep_points();
  if (!o.quiet)
    std::cout << "ok: scenario " << to_string(exp.scenario.scenario) << ", " << points.size() << " sweep point(s), "
              << exp.agents.size() << " agent(s)\n";
  return 0;
}

void add_common(CLI::App* cmd, Options& o, bool with_agent) {
  cmd->add_option("--config", o.config, "JSON configuration file");
  cmd->add_option("--scenario", o.scenario, "coop-multi, single-node or noncoop-multi");
  if (with_agent) cmd->add_option("--agent", o.agent, "random, dense-rl, dense-rrl, gcn-rl or rgrl");
  cmd->add_option("--seed", o.seed, "training and structure seed");
  cmd->add_option("--eval-seed", o.eval_seed, "evaluation dynamics seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_flag("--quiet", o.quiet, "suppress progress output");
  cmd->add_option("--episodes", o.episodes, "training episodes");
  cmd->add_option("--steps", o.steps, "steps per episode");
  cmd->add_option("--eval-episodes", o.eval_episodes, "evaluation episodes");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MEC-assisted RAN slicing simulator and recurrent graph RL agents"};
  app.require_subcommand(1);
  Options o;

  auto* train_cmd = app.add_subcommand("train", "train one agent and write its log and checkpoint");
  add_common(train_cmd, o, true);
  train_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint directory (default <out>/checkpoint)");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate one agent with exploration off");
  add_common(eval_cmd, o, true);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint directory written by train");

  auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate every agent at every sweep point");
  add_common(sweep_cmd, o, false);
  sweep_cmd->add_option("--agent", o.agent, "restrict the roster to one agent ('all' keeps the config roster)");
  sweep_cmd->add_option("--workers", o.workers, "parallel jobs");

  auto* report_cmd = app.add_subcommand("report", "rebuild summary tables from a summary.json");
  report_cmd->add_option("--in", o.input, "summary.json or a directory holding one");
  report_cmd->add_option("--out", o.out, "output directory");
  report_cmd->add_flag("--quiet", o.quiet, "suppress progress output");

  auto* validate_cmd = app.add_subcommand("validate-config", "check a configuration file and exit");
  add_common(validate_cmd, o, false);

  CLI11_PARSE(app, argc, argv);
  if (sweep_cmd->parsed() && sweep_cmd->count("--agent") == 0) o.agent.clear();

  try {
    if (train_cmd->parsed()) return cmd_train(o);
    if (eval_cmd->parsed()) return cmd_eval(o);
    if (sweep_cmd->parsed()) return cmd_sweep(o);
    if (report_cmd->parsed()) return cmd_report(o);
    if (validate_cmd->parsed()) return cmd_validate(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
