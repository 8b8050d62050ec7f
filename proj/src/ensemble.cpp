#include "epispde/ensemble.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace epispde {

namespace {

// Fixed chunk so the fold order never depends on the worker count.
constexpr int kChunkPaths = 64;

}  // namespace

Accumulator merge(const Accumulator& a, const Accumulator& b) {
  if (a.count == 0) return b;
  if (b.count == 0) return a;
  Accumulator out;
  out.count = a.count + b.count;
  const double delta = b.mean - a.mean;
  const double na = static_cast<double>(a.count);
  const double nb = static_cast<double>(b.count);
  const double n = static_cast<double>(out.count);
  out.mean = a.mean + delta * nb / n;
  out.m2 = a.m2 + b.m2 + delta * delta * na * nb / n;
  out.min = a.min < b.min ? a.min : b.min;
  out.max = a.max > b.max ? a.max : b.max;
  return out;
}

void EnsembleStats::init(std::vector<double> record_times) {
  times = std::move(record_times);
  series.assign(times.size(), {});
  clipped_cells = 0;
  cell_steps = 0;
}

void EnsembleStats::add_path(const Trajectory& traj) {
  if (traj.samples.size() != times.size())
    throw std::invalid_argument("EnsembleStats: trajectory does not match the time grid");
  for (std::size_t idx = 0; idx < times.size(); ++idx) {
    const ObservableSample& s = traj.samples[idx];
    auto& acc = series[idx];
    acc[static_cast<std::size_t>(Observable::MassS)].add(s.mass_s);
    acc[static_cast<std::size_t>(Observable::MassI)].add(s.mass_i);
    acc[static_cast<std::size_t>(Observable::TotalMass)].add(s.mass_s + s.mass_i);
    acc[static_cast<std::size_t>(Observable::Perm)].add(s.perm);
    acc[static_cast<std::size_t>(Observable::MassIP)].add(s.mass_i_pow_p);
  }
  clipped_cells += traj.clipped_cells;
  cell_steps += traj.cell_steps;
}

std::vector<double> EnsembleStats::means(Observable obs) const {
  std::vector<double> out(times.size());
  for (std::size_t idx = 0; idx < times.size(); ++idx) out[idx] = at(idx, obs).mean;
  return out;
}

std::vector<double> EnsembleStats::perm_statistic() const {
  std::vector<double> out(times.size());
  for (std::size_t idx = 0; idx < times.size(); ++idx)
    out[idx] = std::sqrt(at(idx, Observable::Perm).second_moment());
  return out;
}

EnsembleStats merge_stats(const EnsembleStats& a, const EnsembleStats& b) {
  if (a.times != b.times) throw std::invalid_argument("merge_stats: time-grid mismatch");
  EnsembleStats out;
  out.times = a.times;
  out.series.resize(a.series.size());
  for (std::size_t idx = 0; idx < a.series.size(); ++idx)
    for (std::size_t obs = 0; obs < kObservableCount; ++obs)
      out.series[idx][obs] = merge(a.series[idx][obs], b.series[idx][obs]);
  out.clipped_cells = a.clipped_cells + b.clipped_cells;
  out.cell_steps = a.cell_steps + b.cell_steps;
  return out;
}

EnsembleStats run_ensemble(const ModelSystem& system, const SystemState& init, double T,
                           const EnsembleConfig& cfg) {
  if (cfg.n_paths < 1) throw std::invalid_argument("run_ensemble: n_paths must be >= 1");
  EnsembleStats stats;
  stats.init(record_times(system.config().dt, T, system.config().record_every));

  const int workers = resolve_thread_count(cfg.n_threads);
  std::vector<Trajectory> slots(static_cast<std::size_t>(std::min(cfg.n_paths, kChunkPaths)));

  for (int chunk_start = 0; chunk_start < cfg.n_paths; chunk_start += kChunkPaths) {
    const int chunk_size = std::min(kChunkPaths, cfg.n_paths - chunk_start);
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    int error_path = -1;

    const auto worker = [&] {
      for (;;) {
        const int local = next.fetch_add(1);
        if (local >= chunk_size) return;
        const int path = cfg.path_offset + chunk_start + local;
        try {
          slots[static_cast<std::size_t>(local)] = system.simulate_path(
              init, T, RngStream{cfg.seed, static_cast<std::uint32_t>(path)});
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) {
            error = std::current_exception();
            error_path = path;
          }
          return;
        }
      }
    };

    std::vector<std::thread> pool;
    const int spawn = std::min(workers, chunk_size);
    for (int w = 1; w < spawn; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (error) {
      try {
        std::rethrow_exception(error);
      } catch (const std::exception& e) {
        throw std::runtime_error("run_ensemble: path " + std::to_string(error_path) +
                                 " failed: " + e.what());
      }
    }
    // canonical fold: ascending path index regardless of which worker ran what
    for (int local = 0; local < chunk_size; ++local)
      stats.add_path(slots[static_cast<std::size_t>(local)]);
  }
  return stats;
}

std::string predict_class(const ThresholdReport& report, bool space_independent_noise) {
  constexpr double kDeadBand = 1e-9;
  if (report.r_hat > kDeadBand && report.lambda_star > kDeadBand) return "permanent-predicted";
  if (report.mu2_minus_alpha_star > kDeadBand) return "extinct-predicted";
  if (space_independent_noise && report.mu2_minus_alpha_star + report.a2 / 2.0 > kDeadBand)
    return "extinct-predicted";
  return "boundary";
}

SweepResult sweep(const Grid& grid, const ModelParams& base_params,
                  const NoiseSpec& base_noise, const StepConfig& step_cfg,
                  const SystemState& init, double horizon, const std::string& param_name,
                  std::span<const double> values, const EnsembleConfig& mc,
                  const AnalysisConfig& analysis, const AxisApplier& apply_axis) {
  if (values.empty()) throw std::invalid_argument("sweep: empty axis");
  SweepResult result;
  result.param = param_name;

  for (double value : values) {
    SweepRow row;
    row.value = value;

    ModelParams params = base_params;
    NoiseSpec noise = base_noise;
    apply_axis(value, params, noise);
    params = validate_params(std::move(params), grid);

    const bool si = noise.mode() == NoiseMode::SpaceIndependent;
    row.report = compute_thresholds(params, noise, grid,
                                    si ? std::optional<double>(analysis.p) : std::nullopt);
    row.predicted = predict_class(row.report, si);

    ModelSystem system(grid, params, noise, step_cfg, analysis.p);
    const EnsembleStats stats = run_ensemble(system, init, horizon, mc);

    const double t_lo = analysis.window_frac * horizon;
    const double t_hi = horizon;
    bool extinct = false;
    try {
      const DecayFit fit =
          fit_decay_rate(stats.times, stats.means(Observable::MassI), t_lo, t_hi);
      row.slope = fit.slope;
      row.slope_stderr = fit.stderr_slope;
      extinct = fit.slope + 2.0 * fit.stderr_slope < -analysis.eps_slope;
    } catch (const UnderflowError& e) {
      extinct = true;  // the ensemble mean reached zero inside the window
      row.note = e.what();
    }

    const std::vector<double> perm = stats.perm_statistic();
    std::vector<double> win_vals, win_times;
    for (std::size_t idx = 0; idx < stats.times.size(); ++idx)
      if (stats.times[idx] >= t_lo && stats.times[idx] <= t_hi) {
        win_vals.push_back(perm[idx]);
        win_times.push_back(stats.times[idx]);
      }
    if (win_vals.size() >= 2) row.perm_avg = time_average(win_vals, win_times);

    if (extinct)
      row.verdict = "extinct";
    else if (row.perm_avg > analysis.eps_perm)
      row.verdict = "permanent";
    else
      row.verdict = "inconclusive";
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace epispde
