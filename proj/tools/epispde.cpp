#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "epispde/config.hpp"
#include "epispde/verify.hpp"

namespace {

using namespace epispde;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitVerify = 4;

bool field_is_constant(const Field& f) {
  for (int j = 1; j < f.size(); ++j)
    if (f[j] != f[0]) return false;
  return true;
}

int cmd_thresholds(const std::string& config_path) {
  const Simulation sim = build_simulation(load_config_file(config_path));
  const bool si = sim.noise.mode() == NoiseMode::SpaceIndependent;
  const ThresholdReport report = compute_thresholds(
      sim.params, sim.noise, sim.grid, si ? std::optional<double>(sim.analysis.p) : std::nullopt);

  std::cout << "r_hat = " << format_g17(report.r_hat) << "\n";
  std::cout << "mu2_minus_alpha_star = " << format_g17(report.mu2_minus_alpha_star) << "\n";
  std::cout << "mu_star = " << format_g17(report.mu_star) << "\n";
  std::cout << "lambda_star = " << format_g17(report.lambda_star) << "\n";
  std::cout << "a2 = " << format_g17(report.a2) << "\n";
  if (report.r_p)
    std::cout << "r_p = " << format_g17(*report.r_p) << " (p = " << format_g17(*report.p)
              << ")\n";
  if (si && field_is_constant(sim.params.mu2))
    std::cout << "boundary_alpha = " << format_g17(sim.params.mu2[0] + report.a2 / 2.0)
              << "\n";
  std::cout << "classification = " << predict_class(report, si) << "\n";
  return kExitOk;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path) {
  const Simulation sim = build_simulation(load_config_file(config_path));
  ModelSystem system(sim.grid, sim.params, sim.noise, sim.step, sim.analysis.p);
  EnsembleConfig mc;
  mc.n_paths = sim.n_paths;
  mc.seed = sim.seed;
  const EnsembleStats stats = run_ensemble(system, sim.init, sim.horizon, mc);
  write_results(stats, out_path);
  std::cout << "wrote " << stats.times.size() << " time points x " << sim.n_paths
            << " paths to " << out_path << " (clip fraction " << stats.clip_fraction()
            << ")\n";

  if (!sim.snapshot_times.empty()) {
    std::vector<std::pair<double, SystemState>> snaps;
    system.simulate_path(sim.init, sim.horizon, RngStream{sim.seed, 0}, &sim.snapshot_times,
                         &snaps);
    for (const auto& [t, state] : snaps) {
      const std::string path = sim.snapshot_path + "_t" + format_g17(t) + ".txt";
      write_snapshot(state, path);
      std::cout << "snapshot (path 0) at t=" << format_g17(t) << " -> " << path << "\n";
    }
  }
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& param, double from, double to,
              double step, const std::string& out_path) {
  if (!(step > 0.0) || to < from)
    throw ConfigError("sweep: need --step > 0 and --to >= --from");
  const Simulation sim = build_simulation(load_config_file(config_path));

  std::vector<double> values;
  for (double v = from; v <= to + 1e-12 * std::max(1.0, std::fabs(to)); v += step)
    values.push_back(v);

  AxisApplier apply;
  if (param == "alpha" || param == "mu1" || param == "mu2" || param == "lambda") {
    apply = [&](double v, ModelParams& p, NoiseSpec&) {
      Field f(sim.grid, v);
      if (param == "alpha")
        p.alpha = std::move(f);
      else if (param == "mu1")
        p.mu1 = std::move(f);
      else if (param == "mu2")
        p.mu2 = std::move(f);
      else
        p.lambda = std::move(f);
    };
  } else if (param == "sigma1" || param == "sigma2") {
    if (sim.noise.mode() != NoiseMode::SpaceIndependent)
      throw ConfigError("sweep: sigma axes require space_independent noise");
    apply = [&](double v, ModelParams&, NoiseSpec& noise) {
      const double s1 = param == "sigma1" ? v : noise.species(1).sigma;
      const double s2 = param == "sigma2" ? v : noise.species(2).sigma;
      noise = NoiseSpec::space_independent(s1, s2);
    };
  } else {
    throw ConfigError("sweep: unknown --param '" + param +
                      "' (alpha, mu1, mu2, lambda, sigma1, sigma2)");
  }

  EnsembleConfig mc;
  mc.n_paths = sim.n_paths;
  mc.seed = sim.seed;
  const SweepResult result = sweep(sim.grid, sim.params, sim.noise, sim.step, sim.init,
                                   sim.horizon, param, values, mc, sim.analysis, apply);
  write_results(result, out_path);
  for (const SweepRow& row : result.rows)
    std::cout << param << "=" << row.value << "  predicted=" << row.predicted
              << "  verdict=" << row.verdict << "\n";
  std::cout << "wrote " << result.rows.size() << " rows to " << out_path << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& config_path) {
  const Simulation sim = build_simulation(load_config_file(config_path));
  return run_verification(sim, std::cout) ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"epispde: stochastic reaction-diffusion SIR simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path, param;
  double from = 0.0, to = 0.0, step = 0.0;

  CLI::App* thresholds = app.add_subcommand("thresholds", "print the threshold report");
  thresholds->add_option("config", config_path, "config file")->required();

  CLI::App* simulate = app.add_subcommand("simulate", "run the ensemble, write a CSV table");
  simulate->add_option("config", config_path, "config file")->required();
  simulate->add_option("-o,--output", out_path, "output CSV path")->required();

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "map a parameter axis");
  sweep_cmd->add_option("config", config_path, "config file")->required();
  sweep_cmd->add_option("--param", param, "axis: alpha|mu1|mu2|lambda|sigma1|sigma2")
      ->required();
  sweep_cmd->add_option("--from", from, "first value")->required();
  sweep_cmd->add_option("--to", to, "last value")->required();
  sweep_cmd->add_option("--step", step, "increment")->required();
  sweep_cmd->add_option("-o,--output", out_path, "output CSV path")->required();

  CLI::App* verify = app.add_subcommand("verify", "run the built-in invariant suite");
  verify->add_option("config", config_path, "config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (thresholds->parsed()) return cmd_thresholds(config_path);
    if (simulate->parsed()) return cmd_simulate(config_path, out_path);
    if (sweep_cmd->parsed()) return cmd_sweep(config_path, param, from, to, step, out_path);
    if (verify->parsed()) return cmd_verify(config_path);
  } catch (const epispde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
