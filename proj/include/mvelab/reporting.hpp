#pragma once

// Post-processing of runs: curve smoothing, critic-vs-return density export,
// multi-config sweeps with aggregate CSV and SVG charts, and the open-loop
// model error table.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mvelab/trainer.hpp"

namespace mvelab {

/// Centered moving average. Point i averages indices
/// [i - (window-1)/2, i + window/2] clipped to the series.
std::vector<double> smooth_series(const std::vector<double>& values, int window = 20);

/// Smooths every numeric column of the rows; env_step is kept as is.
std::vector<MetricsRow> smooth_curve(const std::vector<MetricsRow>& rows, int window = 20);

double mean_of(const std::vector<double>& v);
double median_of(std::vector<double> v);
/// Linear-interpolated quantile, q in [0, 1].
double quantile_of(std::vector<double> v, double q);
/// NaN when either side has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);
/// Pearson on average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------- Q density

using QFunction = std::function<double(const Vec&, const Vec&)>;

struct QDensity {
  std::vector<double> predicted;  ///< raw Q(s, a)
  std::vector<double> observed;   ///< raw discounted return to episode end
  std::vector<double> predicted_normalized;
  std::vector<double> observed_normalized;
  bool predicted_zero_variance = false;
  bool observed_zero_variance = false;
  double correlation = 0.0;  ///< Pearson; 0 when a column has zero variance
};

/// Greedy episodes of `policy`. For every visited (s_t, a_t) records Q(s_t, a_t)
/// and sum_{k>=t} gamma^{k-t} r_k up to the episode end, no bootstrap.
QDensity qdensity_export(const EnvSpec& env, const Policy& policy, const QFunction& q,
                         int n_episodes, double gamma, std::uint64_t seed);
QDensity qdensity_export(const AgentState& agent, const EnvSpec& env, int n_episodes, double gamma,
                         std::uint64_t seed);

/// predicted,observed,predicted_raw,observed_raw
void write_qdensity_csv(std::ostream& out, const QDensity& q);

// -------------------------------------------------------------------- sweep

struct SweepEntry {
  std::string config_id;
  ExperimentConfig config;
};

struct SweepPoint {
  std::string config_id;
  std::int64_t env_step = 0;
  double mean = 0.0;
  double std = 0.0;  ///< population std across surviving seeds
  int n = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::vector<std::pair<std::string, ExperimentResult>> runs;
  std::vector<std::string> failures;  ///< "config_id seed <s>: message"
};

/// Keys a sweep may vary by default.
const std::vector<std::string>& default_sweep_axes();

/// Throws ContractViolation when two configs differ outside `axes`
/// (run.output_dir is always allowed to differ).
void check_sweep_axes(const std::vector<SweepEntry>& entries, const std::vector<std::string>& axes);

/// Aggregates eval_return_mean per env_step across the runs that did not
/// fail. Steps are kept only when every surviving seed logged them.
std::vector<SweepPoint> aggregate_runs(const std::string& config_id, const ExperimentResult& runs);

/// Runs each entry into <out_dir>/<config_id>/seed_<s>, then writes
/// <out_dir>/sweep.csv and <out_dir>/sweep.svg.
SweepResult sweep(const std::vector<SweepEntry>& entries, const std::string& out_dir,
                  const std::vector<std::string>& axes = default_sweep_axes(), int threads = 1);

/// Loads every *.cfg in a directory (sorted); config_id is the file stem.
std::vector<SweepEntry> load_sweep_dir(const std::string& dir,
                                       const ExperimentConfig& base = desk_profile());

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points);

/// One polyline per config_id with a +-std band.
void write_sweep_svg(std::ostream& out, const std::vector<SweepPoint>& points,
                     const std::string& title);

// -------------------------------------------------------------- model error

void write_model_error_csv(std::ostream& out, const std::vector<ErrorPoint>& curve);

}  // namespace mvelab
