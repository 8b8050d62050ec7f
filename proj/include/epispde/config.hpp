#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "epispde/ensemble.hpp"

namespace epispde {

/// Configuration-level failure: syntax (with line number) or a rejected
/// semantic value.  Mapped to exit code 2 by the CLI.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spatial profile syntax for rate and initial fields:
///   {constant: v}            v everywhere
///   {cosine: base, amp, m}   base + amp cos(m pi x)
///   {file: path}             one value per cell, whitespace separated
struct FieldSpec {
  enum class Kind { Unset, Constant, Cosine, File };
  Kind kind = Kind::Unset;
  double base = 0.0;
  double amp = 0.0;
  int mode = 1;
  std::string path;
};

struct NoiseConfig {
  std::string mode;    // "kl" | "space_independent"
  std::string family = "geometric";
  double a = 0.0;
  double q_or_r = 0.5;
  int K = 1;
  double sigma1 = 0.0;  // noise intensity sigma_i; variance is sigma_i^2
  double sigma2 = 0.0;
  double tail_tol = 1e-6;  // relative to the full trace
};

/// Parsed key-value configuration.  Unknown and duplicate keys are errors;
/// defaults exist only for the documented optional keys.
struct RunConfig {
  int n = 128;
  double dt = 1e-3;
  double horizon = 0.0;
  int record_every = 10;

  FieldSpec lambda, mu1, mu2, alpha;
  double k1 = 0.0, k2 = 0.0;
  NoiseConfig noise;
  FieldSpec s0, i0;

  std::uint64_t seed = 0;
  int n_paths = 0;

  AnalysisConfig analysis;

  std::vector<double> snapshot_times;
  std::string snapshot_path;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

Field materialize(const FieldSpec& spec, const Grid& grid, const std::string& name);

/// Fully validated run: objects ready to simulate.
struct Simulation {
  Grid grid;
  ModelParams params;
  NoiseSpec noise;
  StepConfig step;
  SystemState init;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  int n_paths = 0;
  AnalysisConfig analysis;
  std::vector<double> snapshot_times;
  std::string snapshot_path;
};

/// Materializes fields and validates everything; semantic violations are
/// reported as ConfigError.
Simulation build_simulation(const RunConfig& cfg);

std::string format_g17(double v);

std::string results_to_csv(const EnsembleStats& stats);
std::string results_to_csv(const SweepResult& sweep);

/// Atomic write (temp file + rename); deterministic bytes for
/// deterministic inputs.
void write_results(const EnsembleStats& stats, const std::string& path);
void write_results(const SweepResult& sweep, const std::string& path);

void write_snapshot(const SystemState& state, const std::string& path);

}  // namespace epispde
