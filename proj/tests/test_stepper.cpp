#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "epispde/stepper.hpp"

using namespace epispde;

namespace {

ModelParams constant_params(const Grid& g, double lam, double m1, double m2, double al,
                            double k1 = 0.01, double k2 = 0.01) {
  return ModelParams{Field(g, lam), Field(g, m1), Field(g, m2), Field(g, al), k1, k2};
}

NoiseSpec zero_noise() { return NoiseSpec::space_independent(0.0, 0.0); }

// dense reference propagator: sum_m e^{lambda_m dt} v_m v_m^T with the
// orthonormal cell-centered cosine basis
std::vector<double> dense_heat_matrix(const Grid& g, double k, double dt) {
  const int n = g.n;
  std::vector<double> mat(static_cast<std::size_t>(n) * n, 0.0);
  for (int m = 0; m < n; ++m) {
    const double lambda = -k * 2.0 / (g.h * g.h) * (1.0 - std::cos(m * M_PI / n));
    const double w = std::exp(lambda * dt);
    const double norm = m == 0 ? 1.0 / n : 2.0 / n;
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l)
        mat[static_cast<std::size_t>(j) * n + l] += w * norm *
                                                    std::cos(m * M_PI * (j + 0.5) / n) *
                                                    std::cos(m * M_PI * (l + 0.5) / n);
  }
  return mat;
}

std::vector<double> dense_apply(const std::vector<double>& mat, const std::vector<double>& v) {
  const int n = static_cast<int>(v.size());
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l)
      out[static_cast<std::size_t>(j)] += mat[static_cast<std::size_t>(j) * n + l] *
                                          v[static_cast<std::size_t>(l)];
  return out;
}

}  // namespace

TEST_CASE("record_times: bookkeeping") {
  const std::vector<double> times = record_times(0.01, 0.1, 1);
  REQUIRE(times.size() == 11);
  CHECK(times.front() == 0.0);
  CHECK(times.back() == doctest::Approx(0.1).epsilon(1e-14));
  // final step is always recorded even off the stride
  const std::vector<double> strided = record_times(0.01, 0.1, 3);
  CHECK(strided.size() == 5);  // 0, 0.03, 0.06, 0.09, 0.1
  CHECK(strided.back() == doctest::Approx(0.1).epsilon(1e-14));
  CHECK_THROWS_AS(record_times(0.01, 0.001, 1), std::invalid_argument);
}

TEST_CASE("step: spatially constant zero-noise reduction to explicit Euler") {
  Grid g(16);
  ModelSystem system(g, constant_params(g, 1.0, 1.0, 0.2, 0.0), zero_noise(),
                     StepConfig{0.01, 1});
  SystemState state{Field(g, 2.0), Field(g, 0.0), 0.0};
  state.s.flag_nonnegative();
  state.i.flag_nonnegative();
  const SystemState next = system.step(state, RngStream{1, 0}, 0);
  for (int j = 0; j < g.n; ++j) {
    CHECK(next.s[j] == doctest::Approx(1.99).epsilon(1e-13));
    CHECK(next.i[j] == 0.0);
  }
  CHECK(next.t == doctest::Approx(0.01));
}

TEST_CASE("step: S=0 kills the incidence term") {
  Grid g(24);
  const double dt = 0.01, mu2 = 0.7, lam = 1.3;
  ModelParams params = constant_params(g, lam, 0.5, mu2, 0.9, 0.02, 0.05);
  ModelSystem system(g, params, zero_noise(), StepConfig{dt, 1});

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> dist(0.0, 2.0);
  SystemState state{Field(g, 0.0), Field(g), 0.0};
  for (int j = 0; j < g.n; ++j) state.i[j] = dist(rng);
  state.s.flag_nonnegative();
  state.i.flag_nonnegative();

  const SystemState next = system.step(state, RngStream{1, 0}, 0);

  DiscreteSemigroup sg1(g, 0.02), sg2(g, 0.05);
  Field expect_s = semigroup_apply(Field(g, dt * lam), dt, sg1);
  Field decayed(g);
  for (int j = 0; j < g.n; ++j) decayed[j] = state.i[j] * (1.0 - dt * mu2);
  Field expect_i = semigroup_apply(decayed, dt, sg2);
  for (int j = 0; j < g.n; ++j) {
    CHECK(next.s[j] == doctest::Approx(expect_s[j]).epsilon(1e-13));
    CHECK(next.i[j] == doctest::Approx(expect_i[j]).epsilon(1e-13));
    CHECK(next.i[j] >= 0.0);
  }
}

TEST_CASE("step: matches an independent dense re-implementation on 4 cells") {
  Grid g(4);
  const double dt = 0.01;
  ModelParams params = constant_params(g, 0.8, 0.4, 0.3, 0.6, 0.02, 0.03);
  NoiseSpec noise = NoiseSpec::space_independent(0.2, 0.3);
  ModelSystem system(g, params, noise, StepConfig{dt, 1});

  SystemState state{Field(g, std::vector<double>{1.0, 2.0, 0.5, 3.0}),
                    Field(g, std::vector<double>{0.5, 0.0, 1.0, 2.0}), 0.0};
  state.s.flag_nonnegative();
  state.i.flag_nonnegative();
  const RngStream rng{777, 3};
  const SystemState next = system.step(state, rng, 5);

  // oracle: same noise values, scalar drift formula, dense matrix exponential
  Field dw1 = sample_increment(noise, 1, dt, g, rng, 5);
  Field dw2 = sample_increment(noise, 2, dt, g, rng, 5);
  std::vector<double> bs(4), bi(4);
  for (int j = 0; j < 4; ++j) {
    const double s = state.s[j], i = state.i[j];
    const double inc = (s > 0.0 && i > 0.0) ? 0.6 * s * i / (s + i) : 0.0;
    bs[static_cast<std::size_t>(j)] = s + dt * (0.8 - 0.4 * s - inc) + s * dw1[j];
    bi[static_cast<std::size_t>(j)] = i + dt * (-0.3 * i + inc) + i * dw2[j];
  }
  const std::vector<double> es = dense_apply(dense_heat_matrix(g, 0.02, dt), bs);
  const std::vector<double> ei = dense_apply(dense_heat_matrix(g, 0.03, dt), bi);
  for (int j = 0; j < 4; ++j) {
    CHECK(next.s[j] ==
          doctest::Approx(std::max(0.0, es[static_cast<std::size_t>(j)])).epsilon(1e-12));
    CHECK(next.i[j] ==
          doctest::Approx(std::max(0.0, ei[static_cast<std::size_t>(j)])).epsilon(1e-12));
  }
}

TEST_CASE("step: rejects invalid states") {
  Grid g(4);
  ModelSystem system(g, constant_params(g, 1, 0.5, 0.2, 0.4), zero_noise(),
                     StepConfig{0.01, 1});
  SystemState neg{Field(g, 1.0), Field(g, -0.5), 0.0};
  CHECK_THROWS_AS(system.step(neg, RngStream{}, 0), std::invalid_argument);
}

TEST_CASE("step: non-finite blow-up is reported with the step index") {
  Grid g(4);
  // recruitment near the double limit overflows the very first bracket
  ModelSystem system(g, constant_params(g, 1e308, 0.5, 0.2, 0.0), zero_noise(),
                     StepConfig{10.0, 1});
  SystemState state{Field(g, 0.0), Field(g, 0.0), 0.0};
  CHECK_THROWS_WITH_AS(system.simulate_path(state, 10.0, RngStream{}),
                       doctest::Contains("step 0"), std::runtime_error);
}

TEST_CASE("simulate_path: recording schedule") {
  Grid g(8);
  ModelSystem system(g, constant_params(g, 1, 0.5, 0.2, 0.4), zero_noise(),
                     StepConfig{0.01, 1});
  SystemState init{Field(g, 1.0), Field(g, 0.5), 0.0};
  const Trajectory traj = system.simulate_path(init, 0.1, RngStream{});
  REQUIRE(traj.samples.size() == 11);
  CHECK(traj.samples.front().t == 0.0);
  CHECK(traj.samples.back().t == doctest::Approx(0.1).epsilon(1e-14));
  for (std::size_t idx = 1; idx < traj.samples.size(); ++idx)
    CHECK(traj.samples[idx].t > traj.samples[idx - 1].t);
  CHECK(traj.cell_steps == 2ULL * 8ULL * 10ULL);
}

TEST_CASE("simulate_path: closed-form ODE reduction, S(t) = 1 + (S0-1) e^{-t}") {
  Grid g(8);
  ModelSystem system(g, constant_params(g, 1.0, 1.0, 0.5, 0.3), zero_noise(),
                     StepConfig{1e-3, 10});
  SystemState init{Field(g, 3.0), Field(g, 0.0), 0.0};
  const Trajectory traj = system.simulate_path(init, 5.0, RngStream{});
  const double mass_s_final = traj.samples.back().mass_s;
  CHECK(std::fabs(mass_s_final - (1.0 + 2.0 * std::exp(-5.0))) <= 1e-3);
  for (const ObservableSample& s : traj.samples) CHECK(s.mass_i == 0.0);
}

TEST_CASE("simulate_path: GBM mean matches E S(t) = S0 e^{-mu1 t}") {
  Grid g(4);
  ModelParams params = constant_params(g, 0.0, 0.3, 0.5, 0.0);
  NoiseSpec noise = NoiseSpec::space_independent(0.2, 0.0);
  ModelSystem system(g, params, noise, StepConfig{1e-3, 1000});
  SystemState init{Field(g, 1.0), Field(g, 0.0), 0.0};
  const int n_paths = 2000;
  double sum = 0.0, sum_sq = 0.0;
  for (int path = 0; path < n_paths; ++path) {
    const Trajectory traj =
        system.simulate_path(init, 1.0, RngStream{2024, static_cast<std::uint32_t>(path)});
    const double m = traj.samples.back().mass_s;
    sum += m;
    sum_sq += m * m;
  }
  const double mean = sum / n_paths;
  const double var = (sum_sq - sum * sum / n_paths) / (n_paths - 1);
  const double se = std::sqrt(var / n_paths);
  CHECK(std::fabs(mean - std::exp(-0.3)) <= 3.0 * se);
}

TEST_CASE("simulate_path: snapshots at requested times") {
  Grid g(8);
  ModelSystem system(g, constant_params(g, 1, 0.5, 0.2, 0.4), zero_noise(),
                     StepConfig{0.01, 1});
  SystemState init{Field(g, 1.0), Field(g, 0.5), 0.0};
  const std::vector<double> want{0.0, 0.05, 0.1};
  std::vector<std::pair<double, SystemState>> snaps;
  system.simulate_path(init, 0.1, RngStream{}, &want, &snaps);
  REQUIRE(snaps.size() == 3);
  CHECK(snaps[0].second.t == 0.0);
  CHECK(snaps[1].second.t == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(snaps[2].second.t == doctest::Approx(0.1).epsilon(1e-12));
  for (int j = 0; j < g.n; ++j) CHECK(snaps[0].second.s[j] == 1.0);
}

TEST_CASE("property: recorded states stay nonnegative under strong noise") {
  Grid g(12);
  ModelParams params = constant_params(g, 1.0, 0.5, 0.2, 0.8);
  NoiseSpec noise = NoiseSpec::space_independent(0.45, 0.45);
  ModelSystem system(g, params, noise, StepConfig{1e-2, 5});
  SystemState init{Field(g, 0.05), Field(g, 0.05), 0.0};
  for (int path = 0; path < 10; ++path) {
    const Trajectory traj =
        system.simulate_path(init, 2.0, RngStream{9, static_cast<std::uint32_t>(path)});
    for (const ObservableSample& s : traj.samples) {
      CHECK(s.mass_s >= 0.0);
      CHECK(s.mass_i >= 0.0);
      CHECK(s.perm >= 0.0);
      CHECK(s.perm <= 1.0 + 1e-12);
    }
    CHECK(traj.final_state.s.min_value() >= 0.0);
    CHECK(traj.final_state.i.min_value() >= 0.0);
  }
}

TEST_CASE("property: zero recruitment, zero noise mass is non-increasing") {
  Grid g(16);
  ModelParams params = constant_params(g, 0.0, 0.3, 0.3, 0.5);
  ModelSystem system(g, params, zero_noise(), StepConfig{1e-3, 10});
  SystemState init{Field(g, 1.0), Field(g, 1.0), 0.0};
  for (int j = 0; j < g.n; ++j) init.s[j] = 1.0 + 0.5 * std::cos(M_PI * g.center(j));
  const Trajectory traj = system.simulate_path(init, 2.0, RngStream{});
  for (std::size_t idx = 1; idx < traj.samples.size(); ++idx) {
    const double prev = traj.samples[idx - 1].mass_s + traj.samples[idx - 1].mass_i;
    const double cur = traj.samples[idx].mass_s + traj.samples[idx].mass_i;
    CHECK(cur <= prev + 1e-12);
  }
}

TEST_CASE("property: the incidence term conserves scheme-level mass") {
  Grid g(16);
  ModelParams params = constant_params(g, 0.0, 0.0, 0.0, 0.8, 0.02, 0.01);
  ModelSystem system(g, params, zero_noise(), StepConfig{1e-3, 10});
  SystemState init{Field(g), Field(g), 0.0};
  for (int j = 0; j < g.n; ++j) {
    init.s[j] = 1.0 + 0.4 * std::cos(M_PI * g.center(j));
    init.i[j] = 0.5 + 0.2 * std::cos(2.0 * M_PI * g.center(j));
  }
  const double total0 = integrate(init.s) + integrate(init.i);
  const Trajectory traj = system.simulate_path(init, 1.0, RngStream{});
  for (const ObservableSample& s : traj.samples)
    CHECK(std::fabs(s.mass_s + s.mass_i - total0) <= 1e-10);
}

TEST_CASE("property: a path is deterministic bit-for-bit") {
  Grid g(8);
  ModelParams params = constant_params(g, 1.0, 0.5, 0.2, 0.6);
  NoiseSpec noise = NoiseSpec::kl([] {
    SpeciesNoise sn;
    sn.a = 0.05;
    sn.param = 0.5;
    sn.truncation = 20;
    return sn;
  }(), [] {
    SpeciesNoise sn;
    sn.a = 0.05;
    sn.param = 0.5;
    sn.truncation = 20;
    return sn;
  }());
  ModelSystem system(g, params, noise, StepConfig{1e-2, 3});
  SystemState init{Field(g, 2.0), Field(g, 0.5), 0.0};
  const Trajectory a = system.simulate_path(init, 1.0, RngStream{31337, 5});
  const Trajectory b = system.simulate_path(init, 1.0, RngStream{31337, 5});
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t idx = 0; idx < a.samples.size(); ++idx) {
    CHECK(a.samples[idx].mass_s == b.samples[idx].mass_s);
    CHECK(a.samples[idx].mass_i == b.samples[idx].mass_i);
    CHECK(a.samples[idx].perm == b.samples[idx].perm);
  }
  for (int j = 0; j < g.n; ++j) {
    CHECK(a.final_state.s[j] == b.final_state.s[j]);
    CHECK(a.final_state.i[j] == b.final_state.i[j]);
  }
}

TEST_CASE("self_convergence: input validation") {
  Grid g(8);
  ModelParams params = constant_params(g, 1.0, 0.5, 0.2, 0.4);
  SystemState init{Field(g, 1.0), Field(g, 0.5), 0.0};
  const std::vector<double> two{0.02, 0.01};
  CHECK_THROWS_AS(
      self_convergence(g, params, zero_noise(), init, 1.0, two, 4, 1),
      std::invalid_argument);
  const std::vector<double> identical{0.01, 0.01, 0.01};
  CHECK_THROWS_WITH_AS(
      self_convergence(g, params, zero_noise(), init, 1.0, identical, 4, 1),
      doctest::Contains("halving"), std::invalid_argument);
  const std::vector<double> bad_T{0.4, 0.2, 0.1};
  CHECK_THROWS_AS(self_convergence(g, params, zero_noise(), init, 1.0, bad_T, 4, 1),
                  std::invalid_argument);
}

TEST_CASE("self_convergence: deterministic exponential Euler is first order") {
  Grid g(16);
  ModelParams params = constant_params(g, 1.0, 0.6, 0.4, 0.9, 0.05, 0.03);
  SystemState init{Field(g), Field(g), 0.0};
  for (int j = 0; j < g.n; ++j) {
    init.s[j] = 1.5 + 0.5 * std::cos(M_PI * g.center(j));
    init.i[j] = 0.5 + 0.3 * std::cos(2.0 * M_PI * g.center(j));
  }
  const std::vector<double> levels{1.0 / 40, 1.0 / 80, 1.0 / 160, 1.0 / 320};
  const ConvergenceResult res =
      self_convergence(g, params, zero_noise(), init, 0.5, levels, 1, 3);
  CHECK(res.order >= 0.95);
  CHECK(res.order <= 2.2);
  REQUIRE(res.points.size() == 3);
  CHECK(res.points[0].rms_diff > res.points[1].rms_diff);
}

TEST_CASE("self_convergence: multiplicative noise attains strong order >= 0.4") {
  Grid g(16);
  ModelParams params = constant_params(g, 1.0, 0.5, 0.2, 0.8);
  NoiseSpec noise = NoiseSpec::space_independent(0.3, 0.3);
  SystemState init{Field(g, 2.0), Field(g, 0.5), 0.0};
  const std::vector<double> levels{0.02, 0.01, 0.005, 0.0025};
  const ConvergenceResult res =
      self_convergence(g, params, noise, init, 0.5, levels, 100, 42);
  CHECK(res.order >= 0.4);
}
