// mvelab command-line front end.
//
//   mvelab run <config> [--profile desk|full] [--set key=value]... [--threads N]
//   mvelab sweep <config-dir> [--out DIR] [--axes k1,k2] [--threads N]
//   mvelab verify <check> [flags]      checks: bound, oracle-identity, ascent,
//                                      counterexample, mismatch
//   mvelab qdensity <run-dir> [--episodes N]
//   mvelab model-error <run-dir> [--horizon H] [--starts N]

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "mvelab/checkpoint.hpp"
#include "mvelab/errors.hpp"
#include "mvelab/reporting.hpp"
#include "mvelab/verify.hpp"

using namespace mvelab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig build_config(const std::string& path, const std::string& profile,
                              const std::vector<std::string>& overrides) {
  ExperimentConfig c = load_config(path, named_profile(profile));
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, "--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
      return s;
    };
    set_config_value(c, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  validate(c);
  return c;
}

int cmd_run(const std::string& path, const std::string& profile,
            const std::vector<std::string>& overrides, int threads) {
  const ExperimentConfig c = build_config(path, profile, overrides);
  const ExperimentResult res = run_experiment(c, threads);
  int failed = 0;
  for (const auto& r : res.runs) {
    std::cout << "seed " << r.seed << " -> " << r.dir;
    if (r.failed) {
      ++failed;
      std::cout << "  FAILED: " << r.failure;
    } else if (!r.rows.empty()) {
      std::cout << "  final return " << r.rows.back().eval_return_mean;
    }
    std::cout << "\n";
  }
  return failed == 0 ? 0 : 1;
}

int cmd_sweep(const std::string& dir, std::string out, const std::string& axes, int threads) {
  const auto entries = load_sweep_dir(dir);
  if (out.empty()) out = (fs::path(dir) / "sweep_out").string();
  std::vector<std::string> axis_list = default_sweep_axes();
  if (!axes.empty()) {
    axis_list.clear();
    std::stringstream ss(axes);
    std::string a;
    while (std::getline(ss, a, ',')) axis_list.push_back(a);
  }
  const SweepResult res = sweep(entries, out, axis_list, threads);
  for (const auto& f : res.failures) std::cout << "failed run: " << f << "\n";
  std::map<std::string, SweepPoint> last;
  for (const auto& p : res.points) last[p.config_id] = p;
  for (const auto& [id, p] : last)
    std::cout << id << "  step " << p.env_step << "  mean " << p.mean << "  std " << p.std
              << "  seeds " << p.n << "\n";
  std::cout << "wrote " << (fs::path(out) / "sweep.csv").string() << "\n";
  return 0;
}

int verify_bound(const std::string& env, const std::vector<int>& horizons, int trials,
                 double gamma, std::uint64_t seed, const std::string& out) {
  int violations = 0, applicable = 0, total = 0;
  std::ofstream csv;
  if (!out.empty()) csv.open(out);
  for (int h : horizons) {
    for (int i = 0; i < trials; ++i) {
      AuditTrialConfig cfg;
      cfg.env = env;
      cfg.horizon = h;
      cfg.gamma = gamma;
      const BoundReport r = run_bound_trial(cfg, derive_seed(seed, 1000 * h + i));
      ++total;
      applicable += r.applicable;
      if (!r.all_hold()) {
        ++violations;
        print_bound_report(std::cout, r);
      }
      if (csv.is_open()) write_bound_report_csv(csv, r);
    }
    for (bool oracle : {true, false}) {
      AuditTrialConfig cfg;
      cfg.env = env;
      cfg.horizon = oracle ? h : 0;
      cfg.gamma = gamma;
      cfg.oracle = oracle;
      const BoundReport r = run_bound_trial(cfg, derive_seed(seed, 99 + h));
      const bool ok = r.all_hold_exact();
      std::cout << (oracle ? "eps=0 collapse H=" + std::to_string(h) : std::string("H=0 collapse"))
                << ": " << (ok ? "exact" : "VIOLATED") << "\n";
      violations += !ok;
    }
  }
  std::cout << env << ": " << total << " trials, " << applicable << " applicable, " << violations
            << " violations\n";
  return violations == 0 ? 0 : 1;
}

int verify_oracle_identity(const std::string& env_name, const std::vector<int>& horizons, int n,
                           std::uint64_t seed) {
  const EnvSpec env = make_env(env_name);
  const AgentState agent = make_agent(env, {}, seed);
  Rng rng(derive_seed(seed, 1));
  Mat starts(env.state_dim, n);
  for (int j = 0; j < n; ++j) starts.col(j) = env_reset(env, rng);
  bool ok = true;
  for (int h : horizons) {
    const Vec res = oracle_identity_residuals(env, agent, starts, h);
    std::cout << env_name << " H=" << h << " max residual " << res.maxCoeff() << "\n";
    ok = ok && res.maxCoeff() < 1e-6;
  }
  return ok ? 0 : 1;
}

int verify_ascent(int trials, std::uint64_t seed, double gamma) {
  int ok = 0;
  for (int i = 0; i < trials; ++i) {
    AscentTrialConfig cfg;
    cfg.gamma = gamma;
    const AscentTrial t = run_ascent_trial(cfg, derive_seed(seed, i));
    const bool pass = t.critic_ok && t.ascent.ascends_at_smallest;
    ok += pass;
    std::cout << "trial " << i << "  bellman " << t.bellman_error << "  |g| " << t.ascent.grad_norm;
    for (std::size_t k = 0; k < t.ascent.alphas.size(); ++k)
      std::cout << "  dJ(" << t.ascent.alphas[k] << ")=" << t.ascent.delta_j[k] << "+-"
                << t.ascent.std_err[k];
    std::cout << "  negated dJ=" << t.negated.delta_j[0] << (pass ? "  ok" : "  FAIL") << "\n";
  }
  std::cout << ok << "/" << trials << " trials ascend\n";
  return ok == trials ? 0 : 1;
}

int verify_counterexample(double delta, double eps, double gamma) {
  const CounterexampleReport r = check_hillclimb_counterexample(delta, eps, {1e-3, 1e-2}, gamma);
  std::cout << std::setprecision(10) << "delta " << delta << " eps " << eps << " gamma " << gamma
            << "\n  g(0) = " << r.g_zero << "\n  g(1+eps) = " << r.g_far
            << "\n  direction = " << r.direction << "\n";
  for (std::size_t k = 0; k < r.alphas.size(); ++k)
    std::cout << "  dJ(alpha=" << r.alphas[k] << ") = " << r.delta_j[k] << "\n";
  std::cout << (r.holds() ? "counterexample holds" : "counterexample does NOT hold") << "\n";
  return r.holds() ? 0 : 1;
}

int verify_mismatch(int horizon, std::uint64_t seed, double gamma) {
  MismatchTrialConfig cfg;
  cfg.horizon = horizon;
  cfg.gamma = gamma;
  const MismatchTrial t = run_mismatch_trial(cfg, seed);
  std::cout << "bellman " << t.bellman_error << "\nmse_beta " << t.report.mse_beta
            << "\nmse_pushforward " << t.report.mse_pushforward << "\nstd_err(diff) "
            << t.report.diff_std_err << "\n"
            << (t.report.pushforward_worse() ? "pushforward worse" : "no significant gap") << "\n";
  return 0;
}

int cmd_qdensity(const std::string& dir, int episodes, std::uint64_t seed) {
  const LoadedRun run = load_run(dir);
  const EnvSpec env = make_env(run.config.env);
  const QDensity q = qdensity_export(run.agent, env, episodes, env.gamma, seed);
  std::ofstream out(fs::path(dir) / "qdensity.csv");
  write_qdensity_csv(out, q);
  std::cout << "pairs " << q.predicted.size() << "  pearson " << q.correlation
            << (q.predicted_zero_variance ? "  (predicted column has zero variance)" : "") << "\n";
  return 0;
}

int cmd_model_error(const std::string& dir, int horizon, int starts, std::uint64_t seed) {
  const LoadedRun run = load_run(dir);
  require(run.model.has_value(), "model-error: run '" + dir + "' has no dynamics model");
  const EnvSpec env = make_env(run.config.env);
  const Policy pi = [&](const Vec& s) { return policy_action(run.agent.actor, run.agent.scale, s); };
  Rng rng(seed);
  const auto curve = open_loop_error_curve(*run.model, env, pi, horizon, starts, rng);
  std::ofstream out(fs::path(dir) / "model_error.csv");
  write_model_error_csv(out, curve);
  std::vector<double> d, m;
  for (const auto& p : curve) {
    d.push_back(p.depth);
    m.push_back(p.mean_l2);
  }
  std::cout << "depth 1 " << curve.front().mean_l2 << "  depth " << horizon << " "
            << curve.back().mean_l2 << "  spearman " << spearman(d, m) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mvelab: model-based value expansion experiments"};
  app.require_subcommand(1);

  std::string path, profile = "desk", out, axes, env = "hillclimb";
  std::vector<std::string> overrides;
  int threads = 1;

  auto* run = app.add_subcommand("run", "train every seed of a config");
  run->add_option("config", path, "config file")->required();
  run->add_option("--profile", profile, "base profile: desk or full");
  run->add_option("--set", overrides, "override key=value");
  run->add_option("--threads", threads, "seeds trained concurrently");

  auto* sw = app.add_subcommand("sweep", "run every *.cfg in a directory and aggregate");
  sw->add_option("config-dir", path, "directory of .cfg files")->required();
  sw->add_option("--out", out, "output directory (default <config-dir>/sweep_out)");
  sw->add_option("--axes", axes, "comma separated keys allowed to differ");
  sw->add_option("--threads", threads, "seeds trained concurrently");

  std::string check;
  std::vector<int> horizons{1, 3, 5};
  int trials = -1, n = 1000, episodes = 10, horizon = -1, starts = 100;
  double gamma = -1.0, delta = 0.1, eps = 0.05;
  std::uint64_t seed = 0;
  auto* ver = app.add_subcommand("verify", "numerical checks of the theory");
  ver->add_option("check", check, "bound | oracle-identity | ascent | counterexample | mismatch")
      ->required()
      ->check(CLI::IsMember({"bound", "oracle-identity", "ascent", "counterexample", "mismatch"}));
  ver->add_option("--env", env, "environment");
  ver->add_option("--horizons", horizons, "horizons to audit");
  ver->add_option("--horizon", horizon, "horizon (mismatch)");
  ver->add_option("--trials", trials, "randomized trials");
  ver->add_option("--n", n, "start states (oracle-identity)");
  ver->add_option("--gamma", gamma, "discount");
  ver->add_option("--delta", delta, "hillclimb step fraction (counterexample)");
  ver->add_option("--eps", eps, "offset of the far beta atom (counterexample)");
  ver->add_option("--seed", seed, "base seed");
  ver->add_option("--out", out, "bound_report.csv path (bound)");

  auto* qd = app.add_subcommand("qdensity", "predicted Q vs observed return for a run");
  qd->add_option("run-dir", path, "run directory")->required();
  qd->add_option("--episodes", episodes, "greedy episodes");
  qd->add_option("--seed", seed, "start-state seed");

  auto* me = app.add_subcommand("model-error", "open-loop model error curve for a run");
  me->add_option("run-dir", path, "run directory")->required();
  me->add_option("--horizon", horizon, "largest depth");
  me->add_option("--starts", starts, "start states");
  me->add_option("--seed", seed, "start-state seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(path, profile, overrides, threads);
    if (*sw) return cmd_sweep(path, out, axes, threads);
    if (*qd) return cmd_qdensity(path, episodes, seed);
    if (*me) return cmd_model_error(path, horizon > 0 ? horizon : 30, starts, seed);
    if (*ver) {
      const auto or_default = [](auto v, auto d) { return v > 0 ? v : d; };
      if (check == "bound")
        return verify_bound(env, horizons, or_default(trials, 100), or_default(gamma, 0.9), seed, out);
      if (check == "oracle-identity") return verify_oracle_identity(env, {1, 5, 10}, n, seed);
      if (check == "ascent")
        return verify_ascent(or_default(trials, 10), seed, or_default(gamma, 0.9));
      if (check == "counterexample") return verify_counterexample(delta, eps, or_default(gamma, 0.99));
      if (check == "mismatch")
        return verify_mismatch(or_default(horizon, 10), seed, or_default(gamma, 0.9));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
