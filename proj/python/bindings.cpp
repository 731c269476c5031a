#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "rgrl/agent.hpp"
#include "rgrl/harness.hpp"

namespace py = pybind11;
using namespace rgrl;

namespace {

Experiment experiment_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return experiment_from_json(j);
}

/// Environment plus the action layout agents use.
class PyEnvironment {
 public:
  PyEnvironment(const std::string& config_json, std::uint64_t seed, std::uint64_t dynamics_seed)
      : exp_(experiment_from_string(config_json)) {
    exp_.train_seed = seed;
    exp_.validate();
    const SweepPoint p{0, exp_.scenario.n_users, exp_.scenario.n_nodes, exp_.scenario.compute_hz,
                       exp_.scenario.rb_count};
    env_ = std::make_unique<Environment>(make_point_environment(exp_, p, dynamics_seed));
    dims_ = std::make_unique<AgentDims>(agent_dims(*env_));
  }

  void reset() { env_->reset(); }
  Matrix observe() const { return env_->observe(); }
  Matrix uniform_action() const { return dims_->layout.uniform(); }

  py::dict step(const Matrix& encoded) {
    const StepResult r = env_->step(dims_->layout.decode(encoded));
    py::dict d;
    d["reward"] = r.reward;
    d["satisfied"] = r.satisfied;
    d["generated"] = r.generated;
    d["latency_s"] = r.latency_s;
    d["compute_rate"] = r.compute_rate;
    d["transmit_rate"] = r.transmit_rate;
    return d;
  }

  int n_nodes() const { return env_->population().n_nodes(); }
  int n_users() const { return env_->population().n_users(); }
  int feature_width() const { return env_->feature_width(); }
  int action_width() const { return dims_->layout.width(); }
  Matrix weighted_adjacency() const { return env_->graph().weighted_adjacency; }
  Matrix propagation() const { return dims_->propagation; }
  std::vector<std::vector<std::pair<int, int>>> groups() const {
    std::vector<std::vector<std::pair<int, int>>> out;
    for (int n = 0; n < dims_->layout.n_nodes(); ++n) {
      std::vector<std::pair<int, int>> g;
      for (const auto& s : dims_->layout.groups(n)) g.emplace_back(s.offset, s.length);
      out.push_back(std::move(g));
    }
    return out;
  }

  std::size_t actor_param_count(const std::string& agent) const {
    auto policy = make_policy(parse_agent_kind(agent), *dims_, exp_.network, exp_.training, 0);
    return policy->actor_parameter_count();
  }

 private:
  Experiment exp_;
  std::unique_ptr<Environment> env_;
  std::unique_ptr<AgentDims> dims_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MEC-assisted RAN slicing simulator and recurrent graph RL agents";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("validate_config", [](const std::string& text) { experiment_from_string(text).validate(); },
        py::arg("config_json"), "Raises ConfigError naming the first invalid field.");
  m.def("default_config", []() { return to_json(Experiment{}).dump(); });
  m.def("pareto_inverse_cdf", &pareto_inverse_cdf, py::arg("threshold"), py::arg("shape"), py::arg("uniform"));
  m.def(
      "snr",
      [](double gain, double rbs, double power_dbm, double noise_dbm_per_hz, double bandwidth_hz) {
        ScenarioConfig c;
        c.rb_power_dbm = power_dbm;
        c.noise_dbm_per_hz = noise_dbm_per_hz;
        return snr(gain, rbs, LinkBudget::from(c), bandwidth_hz);
      },
      py::arg("gain"), py::arg("rbs"), py::arg("power_dbm"), py::arg("noise_dbm_per_hz"), py::arg("bandwidth_hz"));
  m.def("quantile", &quantile, py::arg("values"), py::arg("p"));
  m.def(
      "run_sweep",
      [](const std::string& config_json, const std::string& out_dir) {
        const Experiment exp = experiment_from_string(config_json);
        std::vector<EvalReport> reports;
        {
          py::gil_scoped_release release;
          reports = run_experiment(exp, out_dir);
        }
        summarize(reports, out_dir);
        return summary_csv(reports);
      },
      py::arg("config_json"), py::arg("out_dir"));

  py::class_<PyEnvironment>(m, "Environment")
      .def(py::init<const std::string&, std::uint64_t, std::uint64_t>(), py::arg("config_json"), py::arg("seed") = 1,
           py::arg("dynamics_seed") = 2)
      .def("reset", &PyEnvironment::reset)
      .def("observe", &PyEnvironment::observe)
      .def("uniform_action", &PyEnvironment::uniform_action)
      .def("step", &PyEnvironment::step, py::arg("action"))
      .def("actor_param_count", &PyEnvironment::actor_param_count, py::arg("agent"))
      .def_property_readonly("n_nodes", &PyEnvironment::n_nodes)
      .def_property_readonly("n_users", &PyEnvironment::n_users)
      .def_property_readonly("feature_width", &PyEnvironment::feature_width)
      .def_property_readonly("action_width", &PyEnvironment::action_width)
      .def_property_readonly("weighted_adjacency", &PyEnvironment::weighted_adjacency)
      .def_property_readonly("propagation", &PyEnvironment::propagation)
      .def_property_readonly("groups", &PyEnvironment::groups);
}
