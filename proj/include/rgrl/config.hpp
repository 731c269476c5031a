#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace rgrl {

/// Raised for any invalid or inconsistent configuration. The message always
/// starts with the offending field path, e.g. "services.eMBB.kappa: ...".
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ServiceType { embb = 0, mmtc = 1, urllc = 2 };
inline constexpr std::array<ServiceType, 3> kServiceTypes{ServiceType::embb, ServiceType::mmtc,
                                                         ServiceType::urllc};
std::string_view to_string(ServiceType t);

enum class Scenario { coop_multi, single_node, noncoop_multi };
std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view s);

/// Orientation of the computing-speed relation. `corrected` is C / cycles_per_bit.
enum class RcOrientation { corrected, paper };
/// Transmission queue update rule.
///   processed: V += min(Q_prev + d, RC*dt) - RT*dt   (bits actually leaving the CQ)
///   corrected: V += (RC - RT)*dt
///   paper:     V += (RT - RC)*dt
enum class TqUpdate { processed, corrected, paper };
/// Which adjacency the GCN propagation operator is built from.
enum class GcnOperator { binary, weighted };

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct ServiceProfile {
  int min_users = 1;          // U_mini, per node and service type
  double latency_req_s = 0.0;  // l_req
  Range arrival_prob;          // kappa
  Range pareto_shape;          // zeta
  Range threshold_bytes;       // Pareto threshold
};

/// Physical, service and padding constants of one scenario. Defaults carry the
/// reference physical constants at desk scale (N = 8, U = 10 N).
struct ScenarioConfig {
  Scenario scenario = Scenario::coop_multi;

  int n_nodes = 8;
  int n_users = 80;
  int slices_min = 3;
  int slices_max = 6;

  double area_m = 200.0;
  double coverage_radius_m = 100.0;
  double user_ring_min_m = 10.0;
  double user_ring_max_m = 100.0;
  double pathloss_exponent = 2.0;

  int max_neighbors = 3;
  double coop_penalty = 0.9;

  std::array<ServiceProfile, 3> services{{
      {1, 0.05, {0.6, 0.8}, {5.0, 10.0}, {0.1e6, 0.3e6}},
      {1, 0.02, {0.4, 0.6}, {5.0, 10.0}, {125.0, 125.0}},
      {1, 0.001, {0.8, 1.0}, {5.0, 10.0}, {10.0, 300.0}},
  }};

  double compute_hz = 10e9;          // C_B
  int rb_count = 10;                 // Z_B
  double rb_power_dbm = 11.0;        // P_B per RB
  double rb_bandwidth_hz = 0.18e6;   // W_B
  double noise_dbm_per_hz = -204.0;  // N0
  double cycles_per_bit = 15.0;
  double slot_s = 1.0;
  int history_window = 100;          // T, bookkeeping horizon

  int obs_window = 0;                // recent task sizes per user in the observation
  double backlog_scale_bits = 1e6;
  int max_nodes = 8;                 // padding of the node-level compute block
  int max_users_per_node = 0;        // observation/action padding; 0 derives it

  RcOrientation rc_orientation = RcOrientation::corrected;
  TqUpdate tq_update = TqUpdate::processed;
  GcnOperator gcn_operator = GcnOperator::binary;

  const ServiceProfile& service(ServiceType t) const { return services[static_cast<int>(t)]; }
  ServiceProfile& service(ServiceType t) { return services[static_cast<int>(t)]; }

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Linear-scale SI constants derived once from the dB-scale configuration.
struct LinkBudget {
  double rb_power_w = 0.0;
  double noise_w_per_hz = 0.0;
  static LinkBudget from(const ScenarioConfig& cfg);
};

double dbm_to_watts(double dbm);

/// Forces the degenerate structure a scenario implies (single-node: N = 1;
/// non-cooperative: A_max = 0).
ScenarioConfig apply_scenario(ScenarioConfig cfg, Scenario scenario);

void to_json(nlohmann::json& j, const ScenarioConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ScenarioConfig& cfg);

ScenarioConfig load_scenario_config(const std::string& path);

}  // namespace rgrl
