#include "rgrl/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace rgrl {

using nlohmann::json;

std::string_view to_string(ServiceType t) {
  switch (t) {
    case ServiceType::embb: return "eMBB";
    case ServiceType::mmtc: return "mMTC";
    case ServiceType::urllc: return "uRLLC";
  }
  return "?";
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::coop_multi: return "coop-multi";
    case Scenario::single_node: return "single-node";
    case Scenario::noncoop_multi: return "noncoop-multi";
  }
  return "?";
}

Scenario parse_scenario(std::string_view s) {
  if (s == "coop-multi") return Scenario::coop_multi;
  if (s == "single-node") return Scenario::single_node;
  if (s == "noncoop-multi") return Scenario::noncoop_multi;
  throw ConfigError("scenario: unknown scenario '" + std::string(s) +
                    "' (expected coop-multi, single-node or noncoop-multi)");
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what);
}

void require_positive(const std::string& field, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) fail(field, "must be positive and finite");
}

void require_range(const std::string& field, const Range& r) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi)) fail(field, "must be finite");
  if (r.lo > r.hi) fail(field, "lower bound exceeds upper bound");
}

std::string service_field(ServiceType t, const char* key) {
  return "services." + std::string(to_string(t)) + "." + key;
}

std::string_view to_string(RcOrientation o) { return o == RcOrientation::corrected ? "corrected" : "paper"; }
std::string_view to_string(GcnOperator o) { return o == GcnOperator::binary ? "binary" : "weighted"; }
std::string_view to_string(TqUpdate u) {
  switch (u) {
    case TqUpdate::processed: return "processed";
    case TqUpdate::corrected: return "corrected";
    case TqUpdate::paper: return "paper";
  }
  return "?";
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range parse_range(const json& j, const std::string& field) {
  if (j.is_number()) return {j.get<double>(), j.get<double>()};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  fail(field, "expected a number or a [lo, hi] pair");
}

template <typename T>
T get_as(const json& j, const std::string& field) {
  try {
    if constexpr (std::is_same_v<T, int>) {
      if (!j.is_number_integer()) fail(field, "expected an integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!j.is_number()) fail(field, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) fail(field, "expected a string");
    }
    return j.get<T>();
  } catch (const json::exception& e) {
    fail(field, e.what());
  }
}

void parse_service(const json& j, ServiceProfile& p, ServiceType t) {
  if (!j.is_object()) fail(service_field(t, ""), "expected an object");
  for (const auto& [key, value] : j.items()) {
    const std::string field = service_field(t, key.c_str());
    if (key == "U_mini") p.min_users = get_as<int>(value, field);
    else if (key == "l_req_s") p.latency_req_s = get_as<double>(value, field);
    else if (key == "kappa") p.arrival_prob = parse_range(value, field);
    else if (key == "zeta") p.pareto_shape = parse_range(value, field);
    else if (key == "delta_bytes") p.threshold_bytes = parse_range(value, field);
    else fail(field, "unknown key");
  }
}

}  // namespace

void ScenarioConfig::validate() const {
  if (n_nodes < 1) fail("N", "at least one edge node is required");
  if (n_users < 1) fail("U", "at least one user is required");
  if (slices_min < 1 || slices_max < slices_min) fail("S_range", "need 1 <= min <= max");
  if (n_users / n_nodes < slices_max)
    fail("U", "U / N must cover S_range max so that every slice can hold a user");
  require_positive("d0_m", area_m);
  require_positive("d_r_m", coverage_radius_m);
  if (!(user_ring_min_m >= 0.0)) fail("d_min_m", "must be non-negative");
  if (!(user_ring_min_m < user_ring_max_m)) fail("d_min_m", "must be smaller than d_max_m");
  if (!(user_ring_max_m <= coverage_radius_m)) fail("d_max_m", "must not exceed d_r_m");
  if (user_ring_min_m == 0.0) fail("d_min_m", "must be positive (path loss diverges at 0 m)");
  require_positive("beta", pathloss_exponent);
  if (max_neighbors < 0 || max_neighbors > n_nodes) fail("A_max", "must lie in [0, N]");
  if (!(coop_penalty > 0.0 && coop_penalty <= 1.0)) fail("theta", "must lie in (0, 1]");
  for (ServiceType t : kServiceTypes) {
    const auto& p = service(t);
    if (p.min_users < 1) fail(service_field(t, "U_mini"), "must be at least 1");
    require_positive(service_field(t, "l_req_s"), p.latency_req_s);
    require_range(service_field(t, "kappa"), p.arrival_prob);
    if (!(p.arrival_prob.lo > 0.0 && p.arrival_prob.hi <= 1.0))
      fail(service_field(t, "kappa"), "arrival probability must lie in (0, 1]");
    require_range(service_field(t, "zeta"), p.pareto_shape);
    if (!(p.pareto_shape.lo > 1.0)) fail(service_field(t, "zeta"), "Pareto shape must exceed 1");
    require_range(service_field(t, "delta_bytes"), p.threshold_bytes);
    if (!(p.threshold_bytes.lo > 0.0)) fail(service_field(t, "delta_bytes"), "must be positive");
  }
  // with at least three slices every service type is present on every node
  int per_node_min = 0;
  for (ServiceType t : kServiceTypes) per_node_min += service(t).min_users;
  if (slices_min >= 3 && n_users / n_nodes < per_node_min)
    fail("U", "U / N = " + std::to_string(n_users / n_nodes) +
                  " users per node cannot cover the per-service U_mini total of " +
                  std::to_string(per_node_min));
  require_positive("C_B_hz", compute_hz);
  if (rb_count < 1) fail("Z_B", "at least one resource block is required");
  if (!std::isfinite(rb_power_dbm)) fail("P_B_dbm", "must be finite");
  require_positive("W_B_hz", rb_bandwidth_hz);
  if (!std::isfinite(noise_dbm_per_hz)) fail("N0_dbm_per_hz", "must be finite");
  require_positive("varpi_cycles_per_bit", cycles_per_bit);
  require_positive("slot_s", slot_s);
  if (history_window < 1) fail("T", "must be at least 1");
  if (obs_window < 0 || obs_window > history_window) fail("T_obs", "must lie in [0, T]");
  require_positive("backlog_scale_bits", backlog_scale_bits);
  if (max_nodes < n_nodes) fail("max_nodes", "padding must be at least N");
  if (max_users_per_node < 0) fail("max_users_per_node", "must be non-negative");
  if (max_users_per_node > 0 && max_users_per_node < (n_users + n_nodes - 1) / n_nodes)
    fail("max_users_per_node", "padding is smaller than the users assigned to one node");
  if (scenario == Scenario::single_node && n_nodes != 1)
    fail("N", "the single-node scenario requires N = 1");
  if (scenario == Scenario::noncoop_multi && max_neighbors != 0)
    fail("A_max", "the non-cooperative scenario requires A_max = 0");
}

double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }

LinkBudget LinkBudget::from(const ScenarioConfig& cfg) {
  return {dbm_to_watts(cfg.rb_power_dbm), dbm_to_watts(cfg.noise_dbm_per_hz)};
}

ScenarioConfig apply_scenario(ScenarioConfig cfg, Scenario scenario) {
  cfg.scenario = scenario;
  if (scenario == Scenario::single_node) {
    cfg.n_nodes = 1;
    cfg.max_neighbors = 0;
  } else if (scenario == Scenario::noncoop_multi) {
    cfg.max_neighbors = 0;
  }
  return cfg;
}

void to_json(json& j, const ScenarioConfig& c) {
  json services = json::object();
  for (ServiceType t : kServiceTypes) {
    const auto& p = c.service(t);
    services[std::string(to_string(t))] = {{"U_mini", p.min_users},
                                           {"l_req_s", p.latency_req_s},
                                           {"kappa", range_json(p.arrival_prob)},
                                           {"zeta", range_json(p.pareto_shape)},
                                           {"delta_bytes", range_json(p.threshold_bytes)}};
  }
  j = json{{"scenario_id", std::string(to_string(c.scenario))},
           {"N", c.n_nodes},
           {"U", c.n_users},
           {"S_range", json::array({c.slices_min, c.slices_max})},
           {"d0_m", c.area_m},
           {"d_r_m", c.coverage_radius_m},
           {"d_min_m", c.user_ring_min_m},
           {"d_max_m", c.user_ring_max_m},
           {"beta", c.pathloss_exponent},
           {"A_max", c.max_neighbors},
           {"theta", c.coop_penalty},
           {"services", services},
           {"C_B_hz", c.compute_hz},
           {"Z_B", c.rb_count},
           {"P_B_dbm", c.rb_power_dbm},
           {"W_B_hz", c.rb_bandwidth_hz},
           {"N0_dbm_per_hz", c.noise_dbm_per_hz},
           {"varpi_cycles_per_bit", c.cycles_per_bit},
           {"slot_s", c.slot_s},
           {"T", c.history_window},
           {"T_obs", c.obs_window},
           {"backlog_scale_bits", c.backlog_scale_bits},
           {"max_nodes", c.max_nodes},
           {"max_users_per_node", c.max_users_per_node},
           {"rc_orientation", std::string(to_string(c.rc_orientation))},
           {"tq_update", std::string(to_string(c.tq_update))},
           {"gcn_operator", std::string(to_string(c.gcn_operator))}};
}

void from_json(const json& j, ScenarioConfig& c) {
  if (!j.is_object()) throw ConfigError("scenario: expected a JSON object");
  using Handler = std::function<void(const json&, const std::string&)>;
  const std::map<std::string, Handler> handlers = {
      {"scenario_id", [&](const json& v, const std::string& f) { c.scenario = parse_scenario(get_as<std::string>(v, f)); }},
      {"N", [&](const json& v, const std::string& f) { c.n_nodes = get_as<int>(v, f); }},
      {"U", [&](const json& v, const std::string& f) { c.n_users = get_as<int>(v, f); }},
      {"S_range",
       [&](const json& v, const std::string& f) {
         if (!v.is_array() || v.size() != 2) fail(f, "expected [min, max]");
         c.slices_min = get_as<int>(v[0], f);
         c.slices_max = get_as<int>(v[1], f);
       }},
      {"d0_m", [&](const json& v, const std::string& f) { c.area_m = get_as<double>(v, f); }},
      {"d_r_m", [&](const json& v, const std::string& f) { c.coverage_radius_m = get_as<double>(v, f); }},
      {"d_min_m", [&](const json& v, const std::string& f) { c.user_ring_min_m = get_as<double>(v, f); }},
      {"d_max_m", [&](const json& v, const std::string& f) { c.user_ring_max_m = get_as<double>(v, f); }},
      {"beta", [&](const json& v, const std::string& f) { c.pathloss_exponent = get_as<double>(v, f); }},
      {"A_max", [&](const json& v, const std::string& f) { c.max_neighbors = get_as<int>(v, f); }},
      {"theta", [&](const json& v, const std::string& f) { c.coop_penalty = get_as<double>(v, f); }},
      {"services",
       [&](const json& v, const std::string& f) {
         if (!v.is_object()) fail(f, "expected an object keyed by eMBB, mMTC, uRLLC");
         for (const auto& [name, body] : v.items()) {
           bool found = false;
           for (ServiceType t : kServiceTypes) {
             if (name == to_string(t)) {
               parse_service(body, c.service(t), t);
               found = true;
             }
           }
           if (!found) fail(f + "." + name, "unknown service type");
         }
       }},
      {"C_B_hz", [&](const json& v, const std::string& f) { c.compute_hz = get_as<double>(v, f); }},
      {"Z_B", [&](const json& v, const std::string& f) { c.rb_count = get_as<int>(v, f); }},
      {"P_B_dbm", [&](const json& v, const std::string& f) { c.rb_power_dbm = get_as<double>(v, f); }},
      {"W_B_hz", [&](const json& v, const std::string& f) { c.rb_bandwidth_hz = get_as<double>(v, f); }},
      {"N0_dbm_per_hz", [&](const json& v, const std::string& f) { c.noise_dbm_per_hz = get_as<double>(v, f); }},
      {"varpi_cycles_per_bit", [&](const json& v, const std::string& f) { c.cycles_per_bit = get_as<double>(v, f); }},
      {"slot_s", [&](const json& v, const std::string& f) { c.slot_s = get_as<double>(v, f); }},
      {"T", [&](const json& v, const std::string& f) { c.history_window = get_as<int>(v, f); }},
      {"T_obs", [&](const json& v, const std::string& f) { c.obs_window = get_as<int>(v, f); }},
      {"backlog_scale_bits", [&](const json& v, const std::string& f) { c.backlog_scale_bits = get_as<double>(v, f); }},
      {"max_nodes", [&](const json& v, const std::string& f) { c.max_nodes = get_as<int>(v, f); }},
      {"max_users_per_node", [&](const json& v, const std::string& f) { c.max_users_per_node = get_as<int>(v, f); }},
      {"rc_orientation",
       [&](const json& v, const std::string& f) {
         const auto s = get_as<std::string>(v, f);
         if (s == "corrected") c.rc_orientation = RcOrientation::corrected;
         else if (s == "paper") c.rc_orientation = RcOrientation::paper;
         else fail(f, "expected corrected or paper");
       }},
      {"tq_update",
       [&](const json& v, const std::string& f) {
         const auto s = get_as<std::string>(v, f);
         if (s == "processed") c.tq_update = TqUpdate::processed;
         else if (s == "corrected") c.tq_update = TqUpdate::corrected;
         else if (s == "paper") c.tq_update = TqUpdate::paper;
         else fail(f, "expected processed, corrected or paper");
       }},
      {"gcn_operator",
       [&](const json& v, const std::string& f) {
         const auto s = get_as<std::string>(v, f);
         if (s == "binary") c.gcn_operator = GcnOperator::binary;
         else if (s == "weighted") c.gcn_operator = GcnOperator::weighted;
         else fail(f, "expected binary or weighted");
       }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = handlers.find(key);
    if (it == handlers.end()) fail(key, "unknown configuration key");
    it->second(value, key);
  }
}

ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: malformed JSON in '" + path + "': " + e.what());
  }
  ScenarioConfig cfg;
  from_json(j.contains("scenario") ? j.at("scenario") : j, cfg);
  cfg.validate();
  return cfg;
}

}  // namespace rgrl
