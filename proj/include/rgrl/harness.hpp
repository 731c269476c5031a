#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "rgrl/agent.hpp"
#include "rgrl/config.hpp"

namespace rgrl {

/// Values overriding the base scenario at one sweep point.
struct SweepPoint {
  int index = 0;
  int n_users = 0;
  int n_nodes = 0;
  double compute_hz = 0.0;
  int rb_count = 0;
};

struct Experiment {
  ScenarioConfig scenario;
  NetworkConfig network;
  TrainingConfig training;
  // Sweep axes; an empty axis keeps the base scenario value.
  std::vector<int> users;
  std::vector<int> nodes;
  std::vector<double> compute_hz;
  std::vector<int> rb_counts;
  std::vector<AgentKind> agents{AgentKind::random, AgentKind::dense_rl, AgentKind::dense_rrl, AgentKind::gcn_rl,
                                AgentKind::rgrl};
  std::uint64_t train_seed = 1;
  std::uint64_t eval_seed = 2;
  int eval_episodes = 100;
  int eval_steps = 0;  // 0 uses training.steps_per_episode
  int workers = 1;
  bool write_trajectories = true;
  bool write_checkpoints = true;

  /// Cartesian product of the axes, U fastest.
  std::vector<SweepPoint> sweep_points() const;
  /// Scenario at a sweep point, with the scenario's structure applied.
  ScenarioConfig config_at(const SweepPoint& p) const;
  /// Checks every sweep point before anything runs; throws ConfigError.
  void validate() const;
};

/// Box-plot statistics; quartiles use linear interpolation between order
/// statistics (h = (n - 1) p).
struct BoxStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

BoxStats box_stats(const std::vector<double>& values);
double quantile(std::vector<double> values, double p);

struct EvalReport {
  AgentKind agent = AgentKind::random;
  SweepPoint point;
  std::vector<double> ssr;  // per evaluation episode
  BoxStats stats;
  std::size_t actor_params = 0;
  std::size_t critic_params = 0;
};

/// Builds each sweep point's topology once, then trains (unless random),
/// freezes and evaluates every agent on it. Jobs run on up to `workers`
/// threads; results come back in (point, agent) order regardless.
std::vector<EvalReport> run_experiment(const Experiment& exp, const std::filesystem::path& out_dir,
                                       std::ostream* log = nullptr);

/// Environment for a sweep point. The topology and user sets depend only on
/// (train_seed, point index) so every agent at a point sees the same network.
Environment make_point_environment(const Experiment& exp, const SweepPoint& point, std::uint64_t dynamics_seed);
std::uint64_t train_dynamics_seed(const Experiment& exp);
std::uint64_t eval_dynamics_seed(const Experiment& exp);
std::uint64_t agent_seed(const Experiment& exp);

/// One job of run_experiment.
EvalReport run_job(const Experiment& exp, const SweepPoint& point, AgentKind agent,
                   const std::filesystem::path& job_dir, std::ostream* log = nullptr);

constexpr int kReportSchemaVersion = 1;

std::string summary_csv(const std::vector<EvalReport>& reports);
nlohmann::json reports_json(const std::vector<EvalReport>& reports);
std::vector<EvalReport> reports_from_json(const nlohmann::json& j);
/// Writes summary.csv and summary.json under `out_dir`.
void summarize(const std::vector<EvalReport>& reports, const std::filesystem::path& out_dir);

/// Full configuration file: {"scenario": {...}, "network": {...},
/// "training": {...}, "experiment": {...}}; every section is optional and a
/// file without sections is read as a bare scenario.
Experiment load_experiment(const std::string& path);
Experiment experiment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Experiment& exp);

void from_json(const nlohmann::json& j, TrainingConfig& cfg);
void to_json(nlohmann::json& j, const TrainingConfig& cfg);
void from_json(const nlohmann::json& j, NetworkConfig& cfg);
void to_json(nlohmann::json& j, const NetworkConfig& cfg);

/// printf("%.17g") for doubles; round-trips exactly.
std::string format_double(double v);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace rgrl
