#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "epispde/grid.hpp"
#include "epispde/model.hpp"
#include "epispde/noise.hpp"
#include "epispde/observables.hpp"
#include "epispde/spectral.hpp"

namespace epispde {

/// Time-stepping knobs.  The scheme is fixed: exponential Euler-Maruyama on
/// the mild form, positivity by clipping to zero after each step.
struct StepConfig {
  double dt = 1e-3;
  int record_every = 10;
};

struct SystemState {
  Field s;
  Field i;
  double t = 0.0;
};

/// Observable samples along one path, plus clip accounting so
/// discretization-induced positivity repair is visible.
struct Trajectory {
  std::vector<ObservableSample> samples;
  std::uint64_t clipped_cells = 0;
  std::uint64_t cell_steps = 0;
  SystemState final_state;
};

/// The recording instants simulate_path produces for a horizon T:
/// t_k = k dt at k = 0, every record_every-th step, and the final step.
std::vector<double> record_times(double dt, double T, int record_every);
std::uint64_t step_count(double dt, double T);

/// Worker count: requested if > 0, else EPISPDE_THREADS, else hardware.
int resolve_thread_count(int requested);

/// Everything fixed along a path: validated params, noise sampler, the two
/// exact propagators e^{dt A_i}, and the observable exponent p.
/// Immutable after construction and shared read-only across path workers.
class ModelSystem {
 public:
  ModelSystem(const Grid& grid, ModelParams params, NoiseSpec noise, StepConfig cfg,
              double observable_p = 0.5);

  ModelSystem(const ModelSystem&) = delete;
  ModelSystem& operator=(const ModelSystem&) = delete;

  const Grid& grid() const { return grid_; }
  const ModelParams& params() const { return params_; }
  const NoiseSpec& noise() const { return noise_; }
  const StepConfig& config() const { return cfg_; }
  double observable_p() const { return p_; }
  const DiscreteSemigroup& semigroup_s() const { return sg1_; }
  const DiscreteSemigroup& semigroup_i() const { return sg2_; }

  /// One exponential Euler-Maruyama update with caller-supplied noise
  /// increments:  Z+ = max(0, e^{dt A}[Z + dt F*(Z) + Z o dW]).
  /// Throws std::runtime_error (with step and cell index) if a non-finite
  /// value appears, which signals dt too large for the noise intensity.
  void step_raw(const double* s, const double* i, const double* dw1, const double* dw2,
                double* s_out, double* i_out, std::uint64_t step_index,
                std::uint64_t* clipped) const;

  /// Convenience single-step form: samples the increments at step_index
  /// from the stream and advances state.t by dt.
  SystemState step(const SystemState& state, const RngStream& rng,
                   std::uint64_t step_index, std::uint64_t* clipped = nullptr) const;

  /// ceil(T/dt) steps from init, recording observables on the record_times
  /// schedule.  Deterministic given (seed, path index).  Optional snapshots
  /// capture full fields at the listed times (matched to the nearest step).
  Trajectory simulate_path(const SystemState& init, double T, const RngStream& rng,
                           const std::vector<double>* snapshot_times = nullptr,
                           std::vector<std::pair<double, SystemState>>* snapshots =
                               nullptr) const;

 private:
  Grid grid_;
  ModelParams params_;
  NoiseSpec noise_;
  StepConfig cfg_;
  double p_;
  DiscreteSemigroup sg1_;
  DiscreteSemigroup sg2_;
  DiscreteSemigroup::Propagator prop1_;
  DiscreteSemigroup::Propagator prop2_;
  NoiseSampler sampler_;
};

struct ConvergencePoint {
  double dt = 0.0;
  double rms_diff = 0.0;  // vs the next finer level, at the horizon
};

struct ConvergenceResult {
  double order = 0.0;  // least-squares slope of log2(rms) vs log2(dt)
  std::vector<ConvergencePoint> points;
};

/// Coupled-path self-convergence study: all levels consume the same
/// Brownian increments (fine increments aggregated for coarse levels).
/// dt_levels must be a halving sequence with at least 3 levels, and T a
/// multiple of the coarsest step.
ConvergenceResult self_convergence(const Grid& grid, const ModelParams& params,
                                   const NoiseSpec& noise, const SystemState& init,
                                   double T, std::span<const double> dt_levels,
                                   int n_paths, std::uint64_t seed, int n_threads = 0);

}  // namespace epispde
