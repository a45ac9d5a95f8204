#include "mvelab/reporting.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "mvelab/errors.hpp"

namespace mvelab {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

std::vector<double> zscore(const std::vector<double>& v, bool& zero_variance) {
  const double m = mean_of(v);
  double sq = 0.0;
  for (double x : v) sq += (x - m) * (x - m);
  const double sd = v.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(v.size()));
  zero_variance = !(sd > 1e-12 * (1.0 + std::abs(m)));
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = zero_variance ? 0.0 : (v[i] - m) / sd;
  return out;
}

}  // namespace

std::vector<double> smooth_series(const std::vector<double>& values, int window) {
  require(window >= 1, "smooth_series: window must be >= 1");
  const auto n = static_cast<std::ptrdiff_t>(values.size());
  const std::ptrdiff_t back = (window - 1) / 2;
  const std::ptrdiff_t fwd = window / 2;
  std::vector<double> out(values.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - back);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + fwd);
    double s = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) s += values[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::vector<MetricsRow> smooth_curve(const std::vector<MetricsRow>& rows, int window) {
  require(window >= 1, "smooth_curve: window must be >= 1");
  auto column = [&](double MetricsRow::*m) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.*m);
    return smooth_series(v, window);
  };
  const auto mean = column(&MetricsRow::eval_return_mean);
  const auto sd = column(&MetricsRow::eval_return_std);
  const auto be = column(&MetricsRow::critic_bellman_error);
  const auto mm = column(&MetricsRow::model_one_step_mse);
  std::vector<MetricsRow> out = rows;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].eval_return_mean = mean[i];
    out[i].eval_return_std = sd[i];
    out[i].critic_bellman_error = be[i];
    out[i].model_one_step_mse = mm[i];
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double quantile_of(std::vector<double> v, double q) {
  require(!v.empty(), "quantile_of: empty sample");
  require(q >= 0.0 && q <= 1.0, "quantile_of: q must be in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median_of(std::vector<double> v) { return quantile_of(std::move(v), 0.5); }

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), "pearson: size mismatch");
  if (x.size() < 2) return std::nan("");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), "spearman: size mismatch");
  return pearson(ranks(x), ranks(y));
}

QDensity qdensity_export(const EnvSpec& env, const Policy& policy, const QFunction& q,
                         int n_episodes, double gamma, std::uint64_t seed) {
  require(n_episodes > 0, "qdensity_export: n_episodes must be positive");
  require(gamma >= 0.0 && gamma <= 1.0, "qdensity_export: gamma must be in [0, 1]");
  Rng rng(seed);
  QDensity out;
  for (int e = 0; e < n_episodes; ++e) {
    Vec s = env_reset(env, rng);
    std::vector<double> rewards;
    for (int t = 0; t < env.episode_length; ++t) {
      const Vec a = clip_action(env, policy(s));
      out.predicted.push_back(q(s, a));
      const Transition tr = env_step(env, s, a);
      rewards.push_back(tr.reward);
      s = tr.next_state;
    }
    std::vector<double> ret(rewards.size());
    double g = 0.0;
    for (std::size_t k = rewards.size(); k-- > 0;) {
      g = rewards[k] + gamma * g;
      ret[k] = g;
    }
    out.observed.insert(out.observed.end(), ret.begin(), ret.end());
  }
  out.predicted_normalized = zscore(out.predicted, out.predicted_zero_variance);
  out.observed_normalized = zscore(out.observed, out.observed_zero_variance);
  out.correlation = (out.predicted_zero_variance || out.observed_zero_variance)
                        ? 0.0
                        : pearson(out.predicted, out.observed);
  return out;
}

QDensity qdensity_export(const AgentState& agent, const EnvSpec& env, int n_episodes, double gamma,
                         std::uint64_t seed) {
  const Policy policy = [&](const Vec& s) { return policy_action(agent.actor, agent.scale, s); };
  const QFunction q = [&](const Vec& s, const Vec& a) { return q_value(agent.critic, s, a); };
  return qdensity_export(env, policy, q, n_episodes, gamma, seed);
}

void write_qdensity_csv(std::ostream& out, const QDensity& q) {
  out << "predicted,observed,predicted_raw,observed_raw\n";
  for (std::size_t i = 0; i < q.predicted.size(); ++i)
    out << fmt(q.predicted_normalized[i]) << ',' << fmt(q.observed_normalized[i]) << ','
        << fmt(q.predicted[i]) << ',' << fmt(q.observed[i]) << '\n';
}

const std::vector<std::string>& default_sweep_axes() {
  static const std::vector<std::string> axes{"mve.mode", "mve.h", "mve.ib_ratio",
                                             "mve.ib_rollouts", "dynamics.oracle"};
  return axes;
}

void check_sweep_axes(const std::vector<SweepEntry>& entries, const std::vector<std::string>& axes) {
  require(!entries.empty(), "sweep: no configs");
  std::set<std::string> ids;
  for (const auto& e : entries) {
    require(!e.config_id.empty(), "sweep: empty config id");
    require(ids.insert(e.config_id).second, "sweep: duplicate config id '" + e.config_id + "'");
  }
  for (std::size_t i = 1; i < entries.size(); ++i) {
    for (const auto& key : differing_keys(entries[0].config, entries[i].config)) {
      if (key == "run.output_dir") continue;
      require(std::find(axes.begin(), axes.end(), key) != axes.end(),
              "sweep: '" + entries[i].config_id + "' differs from '" + entries[0].config_id +
                  "' in undeclared axis " + key);
    }
  }
}

std::vector<SweepPoint> aggregate_runs(const std::string& config_id, const ExperimentResult& runs) {
  std::map<std::int64_t, std::vector<double>> by_step;
  int survivors = 0;
  for (const auto& r : runs.runs) {
    if (r.failed) continue;
    ++survivors;
    for (const auto& row : r.rows) by_step[row.env_step].push_back(row.eval_return_mean);
  }
  std::vector<SweepPoint> out;
  for (const auto& [step, vals] : by_step) {
    if (static_cast<int>(vals.size()) != survivors) continue;
    SweepPoint p;
    p.config_id = config_id;
    p.env_step = step;
    p.n = survivors;
    p.mean = mean_of(vals);
    double sq = 0.0;
    for (double v : vals) sq += (v - p.mean) * (v - p.mean);
    p.std = std::sqrt(sq / static_cast<double>(vals.size()));
    out.push_back(p);
  }
  return out;
}

SweepResult sweep(const std::vector<SweepEntry>& entries, const std::string& out_dir,
                  const std::vector<std::string>& axes, int threads) {
  check_sweep_axes(entries, axes);
  SweepResult result;
  for (const auto& e : entries) {
    ExperimentConfig c = e.config;
    c.output_dir = (fs::path(out_dir) / e.config_id).string();
    ExperimentResult runs = run_experiment(c, threads, !out_dir.empty());
    for (const auto& r : runs.runs)
      if (r.failed)
        result.failures.push_back(e.config_id + " seed " + std::to_string(r.seed) + ": " +
                                  r.failure);
    const auto pts = aggregate_runs(e.config_id, runs);
    result.points.insert(result.points.end(), pts.begin(), pts.end());
    result.runs.emplace_back(e.config_id, std::move(runs));
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "sweep.csv");
    write_sweep_csv(csv, result.points);
    std::ofstream svg(fs::path(out_dir) / "sweep.svg");
    write_sweep_svg(svg, result.points, fs::path(out_dir).filename().string());
  }
  return result;
}

std::vector<SweepEntry> load_sweep_dir(const std::string& dir, const ExperimentConfig& base) {
  require(fs::is_directory(dir), "sweep: '" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& f : fs::directory_iterator(dir))
    if (f.is_regular_file() && f.path().extension() == ".cfg") files.push_back(f.path());
  std::sort(files.begin(), files.end());
  std::vector<SweepEntry> out;
  for (const auto& f : files) out.push_back({f.stem().string(), load_config(f.string(), base)});
  require(!out.empty(), "sweep: no .cfg files in '" + dir + "'");
  return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
  out << "config_id,env_step,mean,std\n";
  for (const auto& p : points)
    out << p.config_id << ',' << p.env_step << ',' << fmt(p.mean) << ',' << fmt(p.std) << '\n';
}

void write_sweep_svg(std::ostream& out, const std::vector<SweepPoint>& points,
                     const std::string& title) {
  const double W = 720, H = 440, L = 70, R = 170, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  std::vector<std::string> ids;
  for (const auto& p : points) {
    if (std::find(ids.begin(), ids.end(), p.config_id) == ids.end()) ids.push_back(p.config_id);
    if (!std::isfinite(p.mean)) continue;
    const double lo = p.mean - p.std, hi = p.mean + p.std;
    if (first) {
      x0 = x1 = static_cast<double>(p.env_step);
      y0 = lo;
      y1 = hi;
      first = false;
    }
    x0 = std::min(x0, static_cast<double>(p.env_step));
    x1 = std::max(x1, static_cast<double>(p.env_step));
    y0 = std::min(y0, lo);
    y1 = std::max(y1, hi);
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << L << "\" y=\"24\" font-size=\"14\">" << title << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
        << static_cast<long long>(xv) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
        << fmt(std::round(yv * 100) / 100) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\">env step</text>\n";

  for (std::size_t c = 0; c < ids.size(); ++c) {
    const char* color = colors[c % 8];
    std::string line, upper, lower;
    for (const auto& p : points) {
      if (p.config_id != ids[c] || !std::isfinite(p.mean)) continue;
      const double x = px(static_cast<double>(p.env_step));
      line += fmt(x) + "," + fmt(py(p.mean)) + " ";
      upper += fmt(x) + "," + fmt(py(p.mean + p.std)) + " ";
      lower = fmt(x) + "," + fmt(py(p.mean - p.std)) + " " + lower;
    }
    out << "<polygon points=\"" << upper << lower << "\" fill=\"" << color
        << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    out << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (c + 1) << "\" fill=\"" << color
        << "\">" << ids[c] << "</text>\n";
  }
  out << "</svg>\n";
}

void write_model_error_csv(std::ostream& out, const std::vector<ErrorPoint>& curve) {
  out << "depth,mean_l2,std_l2\n";
  for (const auto& p : curve) out << p.depth << ',' << fmt(p.mean_l2) << ',' << fmt(p.std_l2) << '\n';
}

}  // namespace mvelab
