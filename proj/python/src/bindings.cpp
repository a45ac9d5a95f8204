#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mvelab/config.hpp"
#include "mvelab/errors.hpp"
#include "mvelab/reporting.hpp"
#include "mvelab/trainer.hpp"
#include "mvelab/verify.hpp"

namespace py = pybind11;
using namespace mvelab;

namespace {

ExperimentConfig config_from(const std::string& profile, const std::map<std::string, std::string>& overrides) {
  ExperimentConfig c = named_profile(profile);
  for (const auto& [k, v] : overrides) set_config_value(c, k, v);
  validate(c);
  return c;
}

py::dict rows_to_dict(const std::vector<MetricsRow>& rows) {
  std::vector<double> step, mean, sd, be, mse;
  for (const auto& r : rows) {
    step.push_back(static_cast<double>(r.env_step));
    mean.push_back(r.eval_return_mean);
    sd.push_back(r.eval_return_std);
    be.push_back(r.critic_bellman_error);
    mse.push_back(r.model_one_step_mse);
  }
  py::dict d;
  d["env_step"] = step;
  d["eval_return_mean"] = mean;
  d["eval_return_std"] = sd;
  d["critic_bellman_error"] = be;
  d["model_one_step_mse"] = mse;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Model-based value expansion on DDPG";

  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);

  py::class_<EnvSpec>(m, "Env")
      .def(py::init(&make_env), py::arg("name"))
      .def_readonly("name", &EnvSpec::name)
      .def_readonly("state_dim", &EnvSpec::state_dim)
      .def_readonly("action_dim", &EnvSpec::action_dim)
      .def_readonly("gamma", &EnvSpec::gamma)
      .def_readonly("episode_length", &EnvSpec::episode_length)
      .def_readonly("action_low", &EnvSpec::action_low)
      .def_readonly("action_high", &EnvSpec::action_high)
      .def("reset", [](const EnvSpec& e, std::uint64_t seed) { return env_reset(e, seed); },
           py::arg("seed"))
      .def("step",
           [](const EnvSpec& e, const Vec& s, const Vec& a) {
             const Transition t = env_step(e, s, a);
             return py::make_tuple(t.next_state, t.reward);
           },
           py::arg("state"), py::arg("action"));
  m.def("env_names", &env_names);

  m.def("config_keys", &config_keys);
  m.def(
      "canonical_config",
      [](const std::string& profile, const std::map<std::string, std::string>& overrides) {
        return to_canonical_text(config_from(profile, overrides));
      },
      py::arg("profile") = "desk", py::arg("overrides") = std::map<std::string, std::string>{});

  m.def(
      "train",
      [](const std::map<std::string, std::string>& overrides, std::uint64_t seed,
         const std::string& profile, const std::string& out_dir) {
        const ExperimentConfig c = config_from(profile, overrides);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_seed(c, seed, out_dir);
        }
        py::dict d;
        d["failed"] = r.failed;
        d["failure"] = r.failure;
        d["metrics"] = rows_to_dict(r.rows);
        d["run_id"] = run_id(c, seed);
        return d;
      },
      py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("seed") = 0,
      py::arg("profile") = "desk", py::arg("out_dir") = "");

  m.def(
      "load_metrics", [](const std::string& path) { return rows_to_dict(read_metrics_csv(path)); },
      py::arg("path"));

  m.def(
      "policy_action",
      [](const std::string& run_dir, const Vec& state) {
        const LoadedRun run = load_run(run_dir);
        return policy_action(run.agent.actor, run.agent.scale, state);
      },
      py::arg("run_dir"), py::arg("state"));

  m.def(
      "oracle_identity_max_residual",
      [](const std::string& env_name, int horizon, int n_states, std::uint64_t seed) {
        const EnvSpec env = make_env(env_name);
        const AgentState agent = make_agent(env, {}, seed);
        Rng rng(seed + 1);
        Mat starts(env.state_dim, n_states);
        for (int j = 0; j < n_states; ++j) starts.col(j) = env_reset(env, rng);
        return oracle_identity_residuals(env, agent, starts, horizon).maxCoeff();
      },
      py::arg("env"), py::arg("horizon"), py::arg("n_states") = 100, py::arg("seed") = 0);

  m.def(
      "bound_trial",
      [](const std::string& env_name, int horizon, double gamma, bool oracle, std::uint64_t seed) {
        AuditTrialConfig cfg;
        cfg.env = env_name;
        cfg.horizon = horizon;
        cfg.gamma = gamma;
        cfg.oracle = oracle;
        const BoundReport r = run_bound_trial(cfg, seed);
        py::dict d;
        d["mse_mve"] = r.mse_mve;
        d["mse_critic_pushforward"] = r.mse_critic_pushforward;
        d["epsilon"] = r.epsilon;
        d["applicable"] = r.applicable;
        d["all_hold"] = r.all_hold();
        d["all_hold_exact"] = r.all_hold_exact();
        return d;
      },
      py::arg("env") = "hillclimb", py::arg("horizon") = 3, py::arg("gamma") = 0.9,
      py::arg("oracle") = false, py::arg("seed") = 0);

  m.def(
      "hillclimb_counterexample",
      [](double delta, double epsilon_s, const std::vector<double>& alphas, double gamma) {
        const CounterexampleReport r = check_hillclimb_counterexample(delta, epsilon_s, alphas, gamma);
        py::dict d;
        d["g_zero"] = r.g_zero;
        d["g_far"] = r.g_far;
        d["delta_j"] = r.delta_j;
        d["holds"] = r.holds();
        return d;
      },
      py::arg("delta") = 0.1, py::arg("epsilon_s") = 0.05,
      py::arg("alphas") = std::vector<double>{1e-3, 1e-2}, py::arg("gamma") = 0.99);

  m.def("spearman", &spearman, py::arg("x"), py::arg("y"));
  m.def("smooth_series", &smooth_series, py::arg("values"), py::arg("window") = 20);
}
