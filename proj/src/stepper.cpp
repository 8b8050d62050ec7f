#include "epispde/stepper.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

namespace epispde {

std::uint64_t step_count(double dt, double T) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_count: dt must be > 0");
  if (!(T >= dt)) throw std::invalid_argument("step_count: horizon must cover at least one step");
  // tolerance so T/dt that is integral up to round-off is not bumped upward
  return static_cast<std::uint64_t>(std::ceil(T / dt - 1e-9));
}

std::vector<double> record_times(double dt, double T, int record_every) {
  if (record_every < 1) throw std::invalid_argument("record_times: record_every must be >= 1");
  const std::uint64_t steps = step_count(dt, T);
  std::vector<double> times;
  times.push_back(0.0);
  for (std::uint64_t k = 1; k <= steps; ++k)
    if (k % static_cast<std::uint64_t>(record_every) == 0 || k == steps)
      times.push_back(static_cast<double>(k) * dt);
  return times;
}

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("EPISPDE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

ModelSystem::ModelSystem(const Grid& grid, ModelParams params, NoiseSpec noise,
                         StepConfig cfg, double observable_p)
    : grid_(grid),
      params_(validate_params(std::move(params), grid)),
      noise_(std::move(noise)),
      cfg_(cfg),
      p_(observable_p),
      sg1_(grid, params_.k1),
      sg2_(grid, params_.k2),
      prop1_(sg1_.propagator(cfg.dt)),
      prop2_(sg2_.propagator(cfg.dt)),
      sampler_(noise_, grid) {
  if (!(cfg_.dt > 0.0)) throw std::invalid_argument("ModelSystem: dt must be > 0");
  if (cfg_.record_every < 1)
    throw std::invalid_argument("ModelSystem: record_every must be >= 1");
  if (!(p_ > 0.0 && p_ < 1.0))
    throw std::invalid_argument("ModelSystem: observable exponent p must lie in (0,1)");
}

void ModelSystem::step_raw(const double* s, const double* i, const double* dw1,
                           const double* dw2, double* s_out, double* i_out,
                           std::uint64_t step_index, std::uint64_t* clipped) const {
  const int n = grid_.n;
  const double dt = cfg_.dt;
  const double* lam = params_.lambda.data();
  const double* m1 = params_.mu1.data();
  const double* m2 = params_.mu2.data();
  const double* al = params_.alpha.data();

  for (int j = 0; j < n; ++j) {
    const Reaction r = reaction_terms(s[j], i[j], lam[j], m1[j], m2[j], al[j]);
    s_out[j] = s[j] + dt * r.f1 + s[j] * dw1[j];
    i_out[j] = i[j] + dt * r.f2 + i[j] * dw2[j];
  }
  prop1_.apply(s_out, s_out);
  prop2_.apply(i_out, i_out);

  std::uint64_t clip = 0;
  for (int j = 0; j < n; ++j) {
    if (!std::isfinite(s_out[j]) || !std::isfinite(i_out[j]))
      throw std::runtime_error("step " + std::to_string(step_index) + ", cell " +
                               std::to_string(j) +
                               ": non-finite value (dt too large for the noise intensity)");
    if (s_out[j] < 0.0) {
      s_out[j] = 0.0;
      ++clip;
    }
    if (i_out[j] < 0.0) {
      i_out[j] = 0.0;
      ++clip;
    }
  }
  if (clipped != nullptr) *clipped += clip;
}

SystemState ModelSystem::step(const SystemState& state, const RngStream& rng,
                              std::uint64_t step_index, std::uint64_t* clipped) const {
  if (!(state.s.grid() == grid_) || !(state.i.grid() == grid_))
    throw std::invalid_argument("step: state not sized to grid");
  state.s.require_finite("step: S");
  state.i.require_finite("step: I");
  if (state.s.min_value() < 0.0 || state.i.min_value() < 0.0)
    throw std::invalid_argument("step: state must be nonnegative");

  std::vector<double> dw1(static_cast<std::size_t>(grid_.n));
  std::vector<double> dw2(static_cast<std::size_t>(grid_.n));
  sampler_.sample(1, cfg_.dt, rng, step_index, dw1.data());
  sampler_.sample(2, cfg_.dt, rng, step_index, dw2.data());

  SystemState out{Field(grid_), Field(grid_), state.t + cfg_.dt};
  step_raw(state.s.data(), state.i.data(), dw1.data(), dw2.data(), out.s.data(),
           out.i.data(), step_index, clipped);
  out.s.flag_nonnegative();
  out.i.flag_nonnegative();
  return out;
}

Trajectory ModelSystem::simulate_path(const SystemState& init, double T,
                                      const RngStream& rng,
                                      const std::vector<double>* snapshot_times,
                                      std::vector<std::pair<double, SystemState>>* snapshots) const {
  if (!(init.s.grid() == grid_) || !(init.i.grid() == grid_))
    throw std::invalid_argument("simulate_path: initial state not sized to grid");
  init.s.require_finite("simulate_path: S0");
  init.i.require_finite("simulate_path: I0");
  if (init.s.min_value() < 0.0 || init.i.min_value() < 0.0)
    throw std::invalid_argument("simulate_path: initial state must be nonnegative");

  const int n = grid_.n;
  const double dt = cfg_.dt;
  const std::uint64_t steps = step_count(dt, T);

  std::vector<double> s(init.s.values()), i(init.i.values());
  std::vector<double> s_next(static_cast<std::size_t>(n)), i_next(static_cast<std::size_t>(n));
  std::vector<double> dw1(static_cast<std::size_t>(n)), dw2(static_cast<std::size_t>(n));

  // map requested snapshot times to their nearest step index
  std::vector<std::pair<std::uint64_t, double>> snap_steps;
  if (snapshot_times != nullptr && snapshots != nullptr) {
    for (double ts : *snapshot_times) {
      const auto k = static_cast<std::uint64_t>(std::llround(ts / dt));
      snap_steps.emplace_back(k > steps ? steps : k, ts);
    }
    std::sort(snap_steps.begin(), snap_steps.end());
  }

  Trajectory traj;
  const auto record = [&](std::uint64_t k) {
    ObservableSample sample;
    sample.t = static_cast<double>(k) * dt;
    sample.mass_s = integrate_cells(s.data(), n, grid_.h);
    sample.mass_i = integrate_cells(i.data(), n, grid_.h);
    double perm_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const double sq = i[static_cast<std::size_t>(j)] * i[static_cast<std::size_t>(j)];
      perm_sum += sq < 1.0 ? sq : 1.0;
    }
    sample.perm = std::sqrt(perm_sum * grid_.h);
    sample.mass_i_pow_p = sample.mass_i > 0.0 ? std::pow(sample.mass_i, p_) : 0.0;
    traj.samples.push_back(sample);
  };
  std::size_t snap_idx = 0;
  const auto snapshot_check = [&](std::uint64_t k) {
    while (snap_idx < snap_steps.size() && snap_steps[snap_idx].first == k) {
      SystemState st{Field(grid_, s), Field(grid_, i), static_cast<double>(k) * dt};
      snapshots->emplace_back(snap_steps[snap_idx].second, std::move(st));
      ++snap_idx;
    }
  };

  record(0);
  snapshot_check(0);
  for (std::uint64_t k = 0; k < steps; ++k) {
    sampler_.sample(1, dt, rng, k, dw1.data());
    sampler_.sample(2, dt, rng, k, dw2.data());
    try {
      step_raw(s.data(), i.data(), dw1.data(), dw2.data(), s_next.data(), i_next.data(), k,
               &traj.clipped_cells);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("simulate_path: " + std::string(e.what()));
    }
    s.swap(s_next);
    i.swap(i_next);
    traj.cell_steps += 2ULL * static_cast<std::uint64_t>(n);
    if ((k + 1) % static_cast<std::uint64_t>(cfg_.record_every) == 0 || k + 1 == steps)
      record(k + 1);
    snapshot_check(k + 1);
  }

  traj.final_state.s = Field(grid_, std::move(s));
  traj.final_state.i = Field(grid_, std::move(i));
  traj.final_state.s.flag_nonnegative();
  traj.final_state.i.flag_nonnegative();
  traj.final_state.t = static_cast<double>(steps) * dt;
  return traj;
}

ConvergenceResult self_convergence(const Grid& grid, const ModelParams& params,
                                   const NoiseSpec& noise, const SystemState& init,
                                   double T, std::span<const double> dt_levels,
                                   int n_paths, std::uint64_t seed, int n_threads) {
  const std::size_t levels = dt_levels.size();
  if (levels < 3)
    throw std::invalid_argument("self_convergence: need at least 3 dt levels");
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    const double ratio = dt_levels[l] / dt_levels[l + 1];
    if (std::fabs(ratio - 2.0) > 1e-9)
      throw std::invalid_argument("self_convergence: dt levels must be a halving sequence");
  }
  if (n_paths < 1) throw std::invalid_argument("self_convergence: n_paths must be >= 1");

  const double dt_fine = dt_levels[levels - 1];
  const auto steps_fine = static_cast<std::uint64_t>(std::llround(T / dt_fine));
  if (std::fabs(static_cast<double>(steps_fine) * dt_fine - T) > 1e-9 * T ||
      steps_fine % (1ULL << (levels - 1)) != 0)
    throw std::invalid_argument(
        "self_convergence: horizon must be a whole multiple of the coarsest step");

  std::vector<std::unique_ptr<ModelSystem>> systems;
  std::vector<std::uint64_t> strides;
  for (std::size_t l = 0; l < levels; ++l) {
    systems.push_back(std::make_unique<ModelSystem>(
        grid, params, noise, StepConfig{dt_levels[l], 1}));
    strides.push_back(static_cast<std::uint64_t>(std::llround(dt_levels[l] / dt_fine)));
  }
  const NoiseSampler sampler(noise, grid);
  const int n = grid.n;

  // squared level-pair differences per path, reduced later in path order
  std::vector<std::vector<double>> sq_diffs(static_cast<std::size_t>(n_paths));

  const auto run_path = [&](int path) {
    std::vector<std::vector<double>> s(levels, init.s.values());
    std::vector<std::vector<double>> ii(levels, init.i.values());
    std::vector<std::vector<double>> acc1(levels, std::vector<double>(static_cast<std::size_t>(n), 0.0));
    std::vector<std::vector<double>> acc2(levels, std::vector<double>(static_cast<std::size_t>(n), 0.0));
    std::vector<double> dw1(static_cast<std::size_t>(n)), dw2(static_cast<std::size_t>(n));
    std::vector<double> s_next(static_cast<std::size_t>(n)), i_next(static_cast<std::size_t>(n));
    const RngStream rng{seed, static_cast<std::uint32_t>(path)};

    for (std::uint64_t fs = 0; fs < steps_fine; ++fs) {
      sampler.sample(1, dt_fine, rng, fs, dw1.data());
      sampler.sample(2, dt_fine, rng, fs, dw2.data());
      for (std::size_t l = 0; l < levels; ++l) {
        for (int j = 0; j < n; ++j) {
          acc1[l][static_cast<std::size_t>(j)] += dw1[static_cast<std::size_t>(j)];
          acc2[l][static_cast<std::size_t>(j)] += dw2[static_cast<std::size_t>(j)];
        }
        if ((fs + 1) % strides[l] == 0) {
          systems[l]->step_raw(s[l].data(), ii[l].data(), acc1[l].data(), acc2[l].data(),
                               s_next.data(), i_next.data(), (fs + 1) / strides[l] - 1,
                               nullptr);
          s[l].swap(s_next);
          ii[l].swap(i_next);
          std::fill(acc1[l].begin(), acc1[l].end(), 0.0);
          std::fill(acc2[l].begin(), acc2[l].end(), 0.0);
        }
      }
    }

    std::vector<double> diffs(levels - 1);
    for (std::size_t l = 0; l + 1 < levels; ++l) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        const double ds = s[l][static_cast<std::size_t>(j)] - s[l + 1][static_cast<std::size_t>(j)];
        const double di = ii[l][static_cast<std::size_t>(j)] - ii[l + 1][static_cast<std::size_t>(j)];
        sum += ds * ds + di * di;
      }
      diffs[l] = sum * grid.h;
    }
    sq_diffs[static_cast<std::size_t>(path)] = std::move(diffs);
  };

  const int workers = std::min(resolve_thread_count(n_threads), n_paths);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int path = next.fetch_add(1);
        if (path >= n_paths) return;
        try {
          run_path(path);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);

  ConvergenceResult result;
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    double mean_sq = 0.0;
    for (int path = 0; path < n_paths; ++path)
      mean_sq += sq_diffs[static_cast<std::size_t>(path)][l];
    mean_sq /= static_cast<double>(n_paths);
    result.points.push_back({dt_levels[l], std::sqrt(mean_sq)});
  }

  double x_mean = 0.0, y_mean = 0.0;
  for (const auto& pt : result.points) {
    if (!(pt.rms_diff > 0.0))
      throw std::runtime_error(
          "self_convergence: zero difference between levels; order undefined");
    x_mean += std::log2(pt.dt);
    y_mean += std::log2(pt.rms_diff);
  }
  x_mean /= static_cast<double>(result.points.size());
  y_mean /= static_cast<double>(result.points.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& pt : result.points) {
    const double dx = std::log2(pt.dt) - x_mean;
    sxx += dx * dx;
    sxy += dx * (std::log2(pt.rms_diff) - y_mean);
  }
  result.order = sxy / sxx;
  return result;
}

}  // namespace epispde
