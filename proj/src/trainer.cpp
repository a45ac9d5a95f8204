#include "mvelab/trainer.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "mvelab/checkpoint.hpp"
#include "mvelab/errors.hpp"

namespace mvelab {

namespace fs = std::filesystem;

namespace {

// Stream tags for derive_seed. Exploration and training never share a stream.
constexpr std::uint64_t kAgentStream = 11;
constexpr std::uint64_t kModelInitStream = 12;
constexpr std::uint64_t kExploreStream = 13;
constexpr std::uint64_t kTrainStream = 14;
constexpr std::uint64_t kModelFitStream = 15;
constexpr std::uint64_t kEvalStream = 16;

// Dynamics normalization is recomputed from the whole buffer this often.
constexpr std::int64_t kNormalizationRefresh = 1000;

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_field(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ContractViolation("metrics: bad number '" + s + "'");
  return v;
}

void write_row(std::ostream& out, const MetricsRow& r) {
  out << r.env_step << ',' << fmt(r.eval_return_mean) << ',' << fmt(r.eval_return_std) << ','
      << fmt(r.critic_bellman_error) << ',' << fmt(r.model_one_step_mse) << '\n';
}

bool agent_finite(const AgentState& a) {
  return a.actor.values.allFinite() && a.critic.values.allFinite() &&
         a.target_actor.values.allFinite() && a.target_critic.values.allFinite();
}

void write_meta(const std::string& dir, const ExperimentConfig& config, std::uint64_t seed,
                const RunResult& r) {
  std::ofstream meta(fs::path(dir) / "meta.txt");
  meta << "status = " << (r.failed ? "failed" : "ok") << "\n";
  meta << "run_id = " << run_id(config, seed) << "\n";
  meta << "seed = " << seed << "\n";
  if (r.failed) meta << "failure = " << r.failure << "\n";
  const std::int64_t last = r.rows.empty() ? 0 : r.rows.back().env_step;
  meta << "last_env_step = " << last << "\n";
  meta << "# config\n" << to_canonical_text(config);
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) write_row(out, r);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "metrics: cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  require(line == kMetricsHeader, "metrics: unexpected header in '" + path + "'");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    require(f.size() == 5, "metrics: expected 5 columns in '" + path + "'");
    MetricsRow r;
    r.env_step = static_cast<std::int64_t>(parse_field(f[0]));
    r.eval_return_mean = parse_field(f[1]);
    r.eval_return_std = parse_field(f[2]);
    r.critic_bellman_error = parse_field(f[3]);
    r.model_one_step_mse = parse_field(f[4]);
    rows.push_back(r);
  }
  return rows;
}

EvalResult evaluate_policy(const EnvSpec& env, const MlpParams& actor, const ActionScale& scale,
                           int episodes, std::uint64_t seed) {
  require(episodes > 0, "evaluate_policy: episodes must be positive");
  Rng rng(seed);
  EvalResult out;
  for (int e = 0; e < episodes; ++e) {
    Vec s = env_reset(env, rng);
    double ret = 0.0;
    for (int t = 0; t < env.episode_length; ++t) {
      Transition tr = env_step(env, s, policy_action(actor, scale, s));
      ret += tr.reward;
      s = tr.next_state;
      out.transitions.push_back(std::move(tr));
    }
    out.returns.push_back(ret);
  }
  double sum = 0.0;
  for (double r : out.returns) sum += r;
  out.mean = sum / episodes;
  double sq = 0.0;
  for (double r : out.returns) sq += (r - out.mean) * (r - out.mean);
  out.std = std::sqrt(sq / episodes);
  return out;
}

std::string run_id(const ExperimentConfig& config, std::uint64_t seed) {
  // FNV-1a over the canonical text, mixed with the seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_canonical_text(config)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h = derive_seed(h, seed);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 12);
}

RunResult run_seed(const ExperimentConfig& config, std::uint64_t seed, const std::string& dir) {
  validate(config);
  const auto started = std::chrono::steady_clock::now();
  const EnvSpec env = make_env(config.env);
  const double gamma = env.gamma;

  RunResult result;
  result.seed = seed;
  result.dir = dir;
  result.agent = make_agent(env, config.agent, derive_seed(seed, kAgentStream));
  AgentState& agent = result.agent;

  const bool needs_model = uses_model(config.mve);
  if (config.oracle_dynamics) {
    if (needs_model) result.model = make_oracle_model(env);
  } else if (needs_model || config.always_fit_model) {
    result.model = make_dynamics_model(env, config.dynamics, derive_seed(seed, kModelInitStream));
  }
  const bool learned_model = result.model && !result.model->oracle;

  Rng explore_rng(derive_seed(seed, kExploreStream));
  Rng train_rng(derive_seed(seed, kTrainStream));
  Rng model_rng(derive_seed(seed, kModelFitStream));
  const std::uint64_t eval_seed = derive_seed(seed, kEvalStream);

  ReplayBuffer replay(static_cast<std::size_t>(config.replay_capacity));
  ReplayBuffer imagined(static_cast<std::size_t>(config.replay_capacity));
  ExplorationState explore = make_exploration(agent, config.noise);
  if (config.noise.kind == NoiseKind::parameter) resample_perturbation(explore, agent, explore_rng);

  std::ofstream metrics, timing;
  if (!dir.empty()) {
    fs::create_directories(dir);
    metrics.open(fs::path(dir) / "metrics.csv");
    timing.open(fs::path(dir) / "timing.csv");
    require(metrics && timing, "run: cannot write into '" + dir + "'");
    metrics << kMetricsHeader << '\n';
    timing << "env_step,wall_time\n";
  }

  auto log_eval = [&](std::int64_t step) {
    const EvalResult ev =
        evaluate_policy(env, agent.actor, agent.scale, config.eval_episodes, eval_seed);
    MetricsRow row;
    row.env_step = step;
    row.eval_return_mean = ev.mean;
    row.eval_return_std = ev.std;
    row.critic_bellman_error = bellman_error(agent, make_batch(ev.transitions), gamma);
    row.model_one_step_mse = std::nan("");
    if (result.model) {
      row.model_one_step_mse =
          (learned_model && result.model->trained_on == 0) ? std::nan("")
                                                           : one_step_mse(*result.model, ev.transitions);
    }
    row.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.rows.push_back(row);
    if (metrics.is_open()) {
      write_row(metrics, row);
      metrics.flush();
      timing << step << ',' << fmt(row.wall_time) << '\n';
      timing.flush();
    }
  };

  const MveConfig plain{0, MveMode::off, 0, 0};
  try {
    log_eval(0);
    Vec state = env_reset(env, explore_rng);
    int episode_t = 0;
    Mat episode_states(env.state_dim, env.episode_length);

    for (std::int64_t step = 1; step <= config.total_steps; ++step) {
      const Vec action = explore_action(agent, explore, state, config.noise, explore_rng);
      Transition tr = env_step(env, state, action);
      episode_states.col(episode_t) = state;
      state = tr.next_state;
      replay.add(std::move(tr));
      if (++episode_t == env.episode_length) {
        if (config.noise.kind == NoiseKind::parameter) {
          adapt_parameter_noise(explore, agent, episode_states, config.noise);
          resample_perturbation(explore, agent, explore_rng);
        }
        state = env_reset(env, explore_rng);
        episode_t = 0;
      }

      if (learned_model && step >= config.model_warmup_steps && config.dynamics_steps > 0) {
        const bool refresh = result.model->trained_on == 0 || step % kNormalizationRefresh == 0;
        fit_dynamics_inplace(*result.model, replay.contents(), config.dynamics_steps,
                             config.dynamics_batch, model_rng, refresh);
      }

      if (step >= config.warmup_steps) {
        const bool model_ready =
            needs_model && result.model && (result.model->oracle || result.model->trained_on > 0);
        for (int g = 0; g < config.gradient_steps; ++g) {
          if (model_ready && config.mve.mode == MveMode::imagination_buffer) {
            imagination_buffer_step(agent, *result.model, replay, imagined, config.mve, gamma,
                                    config.batch_size, train_rng);
          } else {
            const TransitionBatch batch =
                replay.sample_batch(static_cast<std::size_t>(config.batch_size), train_rng);
            if (model_ready)
              train_iteration(agent, &*result.model, batch, config.mve, gamma);
            else
              train_iteration(agent, nullptr, batch, plain, gamma);
          }
        }
        if (!agent_finite(agent)) throw DivergedError("agent parameters are not finite");
      }

      if (step % config.eval_interval == 0 || step == config.total_steps) log_eval(step);
    }
  } catch (const DivergedError& e) {
    result.failed = true;
    result.failure = e.what();
  } catch (const ContractViolation& e) {
    // A state leaving the finite range is divergence of the closed loop.
    result.failed = true;
    result.failure = e.what();
  }

  if (!dir.empty()) {
    write_meta(dir, config, seed, result);
    if (!result.failed) {
      save_agent((fs::path(dir) / "agent.json").string(), agent);
      if (result.model) save_model((fs::path(dir) / "model.json").string(), *result.model);
    }
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, int threads, bool write_files) {
  validate(config);
  ExperimentResult out;
  out.runs.resize(config.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      const std::uint64_t seed = config.seeds[i];
      const std::string dir =
          write_files ? (fs::path(config.output_dir) / ("seed_" + std::to_string(seed))).string()
                      : std::string();
      out.runs[i] = run_seed(config, seed, dir);
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(config.seeds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

LoadedRun load_run(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "meta.txt");
  require(static_cast<bool>(in), "run: no meta.txt in '" + dir + "'");
  LoadedRun run;
  std::string line, config_text, status;
  bool in_config = false;
  while (std::getline(in, line)) {
    if (in_config) {
      config_text += line + "\n";
    } else if (line == "# config") {
      in_config = true;
    } else if (line.rfind("seed = ", 0) == 0) {
      run.seed = std::stoull(line.substr(7));
    } else if (line.rfind("status = ", 0) == 0) {
      status = line.substr(9);
    }
  }
  require(status == "ok", "run: '" + dir + "' did not finish (status " + status + ")");
  run.config = parse_config(config_text);
  run.agent = load_agent((fs::path(dir) / "agent.json").string());
  const fs::path model_path = fs::path(dir) / "model.json";
  if (fs::exists(model_path))
    run.model = load_model(model_path.string(), make_env(run.config.env));
  return run;
}

}  // namespace mvelab
