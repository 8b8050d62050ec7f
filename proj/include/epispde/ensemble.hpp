#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "epispde/stepper.hpp"

namespace epispde {

/// Welford accumulator with parallel (count, mean, M2) combination.
struct Accumulator {
  long long count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
    if (x < min) min = x;
    if (x > max) max = x;
  }

  double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
  double stderr_of_mean() const {
    return count > 0 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0;
  }
  /// E[X^2] over the sample: mean^2 + M2/count (exact identity).
  double second_moment() const {
    return count > 0 ? mean * mean + m2 / static_cast<double>(count) : 0.0;
  }
};

Accumulator merge(const Accumulator& a, const Accumulator& b);

enum class Observable : int {
  MassS = 0,
  MassI,
  TotalMass,
  Perm,
  MassIP,
};
inline constexpr int kObservableCount = 5;

/// Per-time accumulators of the path observables across an ensemble.
struct EnsembleStats {
  std::vector<double> times;
  std::vector<std::array<Accumulator, kObservableCount>> series;
  std::uint64_t clipped_cells = 0;
  std::uint64_t cell_steps = 0;

  void init(std::vector<double> record_times);
  void add_path(const Trajectory& traj);

  const Accumulator& at(std::size_t time_idx, Observable obs) const {
    return series[time_idx][static_cast<std::size_t>(obs)];
  }
  std::vector<double> means(Observable obs) const;
  /// sqrt(E[perm^2]) per time: the ensemble permanence statistic
  /// (expectation inside the root, as in the permanence definition).
  std::vector<double> perm_statistic() const;
  double clip_fraction() const {
    return cell_steps > 0 ? static_cast<double>(clipped_cells) / static_cast<double>(cell_steps)
                          : 0.0;
  }
};

/// Parallel-variance combination per time point.  Associative and
/// commutative to 1e-12 relative; requires identical time grids.
EnsembleStats merge_stats(const EnsembleStats& a, const EnsembleStats& b);

struct EnsembleConfig {
  int n_paths = 1;
  std::uint64_t seed = 0;
  int path_offset = 0;  // first path index (for split/merged runs)
  int n_threads = 0;    // 0 = EPISPDE_THREADS or hardware
};

/// n_paths independent trajectories from one initial state.  RNG streams are
/// addressed by (seed, path index) and accumulation happens in path order in
/// fixed-size chunks, so the statistics are bit-identical for any worker
/// count.  A path failure aborts with its path index and step.
EnsembleStats run_ensemble(const ModelSystem& system, const SystemState& init, double T,
                           const EnsembleConfig& cfg);

struct AnalysisConfig {
  double window_frac = 0.5;  // fit/average window is [window_frac * T, T]
  double eps_slope = 0.01;
  double eps_perm = 0.01;
  double p = 0.5;
};

/// Theory column for a sweep row: what the threshold signs predict.
/// Comparisons use a 1e-9 dead band so exact-boundary rows read "boundary".
std::string predict_class(const ThresholdReport& report, bool space_independent_noise);

struct SweepRow {
  double value = 0.0;
  ThresholdReport report;
  std::string predicted;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double slope_stderr = std::numeric_limits<double>::quiet_NaN();
  double perm_avg = std::numeric_limits<double>::quiet_NaN();
  std::string verdict;  // extinct | permanent | inconclusive
  std::string note;
};

struct SweepResult {
  std::string param;
  std::vector<SweepRow> rows;
};

/// Hook that installs one axis value into the model/noise before a row runs.
using AxisApplier = std::function<void(double value, ModelParams& params, NoiseSpec& noise)>;

/// One ensemble per axis value; each row carries the threshold report, the
/// predicted class, and the empirical verdict:
///   extinct    if the fitted slope of ln E int I is < -eps_slope with
///              2-stderr significance (or the mean underflowed to zero),
///   permanent  if the windowed time average of sqrt(E[perm^2]) > eps_perm,
///   inconclusive otherwise.
SweepResult sweep(const Grid& grid, const ModelParams& base_params,
                  const NoiseSpec& base_noise, const StepConfig& step_cfg,
                  const SystemState& init, double horizon, const std::string& param_name,
                  std::span<const double> values, const EnsembleConfig& mc,
                  const AnalysisConfig& analysis, const AxisApplier& apply_axis);

}  // namespace epispde
