#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "epispde/config.hpp"
#include "epispde/ensemble.hpp"

using namespace epispde;

namespace {

ModelParams constant_params(const Grid& g, double lam, double m1, double m2, double al) {
  return ModelParams{Field(g, lam), Field(g, m1), Field(g, m2), Field(g, al), 0.01, 0.01};
}

Accumulator accumulate(const std::vector<double>& values) {
  Accumulator acc;
  for (double v : values) acc.add(v);
  return acc;
}

}  // namespace

TEST_CASE("accumulator merge: pooled moments equal a naive two-pass computation") {
  const std::vector<double> a{3.0, 1.0, 4.0};
  const std::vector<double> b{1.0, 5.0, 9.0, 2.0, 6.0};
  const Accumulator merged = merge(accumulate(a), accumulate(b));

  std::vector<double> all = a;
  all.insert(all.end(), b.begin(), b.end());
  double mean = 0.0;
  for (double v : all) mean += v;
  mean /= static_cast<double>(all.size());
  double var = 0.0;
  for (double v : all) var += (v - mean) * (v - mean);
  var /= static_cast<double>(all.size() - 1);

  CHECK(merged.count == 8);
  CHECK(merged.mean == doctest::Approx(mean).epsilon(1e-14));
  CHECK(merged.variance() == doctest::Approx(var).epsilon(1e-14));
  CHECK(merged.min == 1.0);
  CHECK(merged.max == 9.0);
}

TEST_CASE("accumulator merge: empty is the identity, order immaterial to 1e-12") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> dist(-3.0, 5.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> va(5 + rng() % 20), vb(5 + rng() % 20), vc(5 + rng() % 20);
    for (double& v : va) v = dist(rng);
    for (double& v : vb) v = dist(rng);
    for (double& v : vc) v = dist(rng);
    const Accumulator a = accumulate(va), b = accumulate(vb), c = accumulate(vc);

    const Accumulator with_empty = merge(a, Accumulator{});
    CHECK(with_empty.mean == a.mean);
    CHECK(with_empty.m2 == a.m2);
    CHECK(with_empty.count == a.count);

    const Accumulator ab = merge(a, b), ba = merge(b, a);
    CHECK(ab.mean == doctest::Approx(ba.mean).epsilon(1e-12));
    CHECK(ab.variance() == doctest::Approx(ba.variance()).epsilon(1e-12));

    const Accumulator left = merge(merge(a, b), c);
    const Accumulator right = merge(a, merge(b, c));
    CHECK(left.mean == doctest::Approx(right.mean).epsilon(1e-12));
    CHECK(left.variance() == doctest::Approx(right.variance()).epsilon(1e-12));
    CHECK(left.count == right.count);
  }
}

TEST_CASE("merge_stats: time-grid mismatch rejected") {
  EnsembleStats a, b;
  a.init({0.0, 0.5, 1.0});
  b.init({0.0, 0.5});
  CHECK_THROWS_WITH_AS(merge_stats(a, b), doctest::Contains("time-grid mismatch"),
                       std::invalid_argument);
}

TEST_CASE("run_ensemble: a single path reproduces its own observables") {
  Grid g(8);
  ModelSystem system(g, constant_params(g, 1.0, 0.5, 0.2, 0.4),
                     NoiseSpec::space_independent(0.2, 0.2), StepConfig{0.01, 5});
  SystemState init{Field(g, 2.0), Field(g, 0.5), 0.0};
  EnsembleConfig mc;
  mc.n_paths = 1;
  mc.seed = 11;
  const EnsembleStats stats = run_ensemble(system, init, 0.5, mc);
  const Trajectory traj = system.simulate_path(init, 0.5, RngStream{11, 0});
  REQUIRE(stats.times.size() == traj.samples.size());
  for (std::size_t idx = 0; idx < stats.times.size(); ++idx) {
    CHECK(stats.at(idx, Observable::MassS).mean == traj.samples[idx].mass_s);
    CHECK(stats.at(idx, Observable::MassI).mean == traj.samples[idx].mass_i);
    CHECK(stats.at(idx, Observable::MassS).m2 == 0.0);
    CHECK(stats.at(idx, Observable::MassS).count == 1);
  }
}

TEST_CASE("run_ensemble: disjoint halves merged equal the full run") {
  Grid g(8);
  ModelSystem system(g, constant_params(g, 1.0, 0.5, 0.2, 0.4),
                     NoiseSpec::space_independent(0.25, 0.25), StepConfig{0.01, 5});
  SystemState init{Field(g, 2.0), Field(g, 0.5), 0.0};

  EnsembleConfig full;
  full.n_paths = 8;
  full.seed = 123;
  const EnsembleStats whole = run_ensemble(system, init, 0.5, full);

  EnsembleConfig lo = full, hi = full;
  lo.n_paths = 4;
  hi.n_paths = 4;
  hi.path_offset = 4;
  const EnsembleStats merged =
      merge_stats(run_ensemble(system, init, 0.5, lo), run_ensemble(system, init, 0.5, hi));

  REQUIRE(whole.times == merged.times);
  for (std::size_t idx = 0; idx < whole.times.size(); ++idx)
    for (int obs = 0; obs < kObservableCount; ++obs) {
      const Accumulator& w = whole.series[idx][static_cast<std::size_t>(obs)];
      const Accumulator& m = merged.series[idx][static_cast<std::size_t>(obs)];
      CHECK(m.count == w.count);
      CHECK(m.mean == doctest::Approx(w.mean).epsilon(1e-12));
      CHECK(m.variance() == doctest::Approx(w.variance()).epsilon(1e-12));
      CHECK(m.min == w.min);
      CHECK(m.max == w.max);
    }
}

TEST_CASE("run_ensemble: zero noise collapses the ensemble variance to zero") {
  Grid g(8);
  ModelSystem system(g, constant_params(g, 1.0, 0.5, 0.2, 0.4),
                     NoiseSpec::space_independent(0.0, 0.0), StepConfig{0.01, 10});
  SystemState init{Field(g, 2.0), Field(g, 0.5), 0.0};
  EnsembleConfig mc;
  mc.n_paths = 64;
  mc.seed = 3;
  const EnsembleStats stats = run_ensemble(system, init, 0.5, mc);
  for (std::size_t idx = 0; idx < stats.times.size(); ++idx) {
    CHECK(stats.at(idx, Observable::MassI).m2 == 0.0);
    CHECK(stats.at(idx, Observable::MassI).min == stats.at(idx, Observable::MassI).max);
  }
}

TEST_CASE("run_ensemble: statistics are bit-identical for any worker count") {
  Grid g(8);
  ModelSystem system(g, constant_params(g, 1.0, 0.5, 0.2, 0.6),
                     NoiseSpec::space_independent(0.3, 0.3), StepConfig{0.01, 5});
  SystemState init{Field(g, 2.0), Field(g, 0.5), 0.0};
  EnsembleConfig mc;
  mc.n_paths = 70;  // spans two chunks
  mc.seed = 2718;

  std::vector<std::string> outputs;
  for (int workers : {1, 2, 3}) {
    EnsembleConfig cfg = mc;
    cfg.n_threads = workers;
    outputs.push_back(results_to_csv(run_ensemble(system, init, 0.5, cfg)));
  }
  CHECK(outputs[0] == outputs[1]);
  CHECK(outputs[0] == outputs[2]);
}

TEST_CASE("run_ensemble: a failing path aborts with its index") {
  Grid g(4);
  ModelSystem system(g, constant_params(g, 1e308, 0.5, 0.2, 0.0),
                     NoiseSpec::space_independent(0.0, 0.0), StepConfig{10.0, 1});
  SystemState init{Field(g, 0.0), Field(g, 0.0), 0.0};
  EnsembleConfig mc;
  mc.n_paths = 3;
  mc.seed = 8;
  CHECK_THROWS_WITH_AS(run_ensemble(system, init, 10.0, mc), doctest::Contains("path"),
                       std::runtime_error);
}

TEST_CASE("predict_class: Theorem 5.1 boundary arithmetic") {
  Grid g(16);
  NoiseSpec noise = NoiseSpec::space_independent(0.2, 0.2);  // a2 = 0.04
  auto classify = [&](double alpha) {
    ModelParams p = constant_params(g, 1.0, 0.5, 0.4, alpha);
    return predict_class(compute_thresholds(p, noise, g), true);
  };
  CHECK(classify(0.1) == "extinct-predicted");
  CHECK(classify(0.42) == "boundary");  // alpha = mu2 + sigma2^2/2 exactly
  CHECK(classify(0.8) == "permanent-predicted");
}

TEST_CASE("sweep: rows carry prediction and verdict for each axis value") {
  Grid g(8);
  ModelParams base = constant_params(g, 1.0, 0.5, 0.4, 0.3);
  NoiseSpec noise = NoiseSpec::space_independent(0.2, 0.2);
  SystemState init{Field(g, 2.0), Field(g, 0.5), 0.0};
  EnsembleConfig mc;
  mc.n_paths = 8;
  mc.seed = 5;
  AnalysisConfig analysis;
  const std::vector<double> axis{0.1, 0.42, 0.8};
  const AxisApplier apply = [&](double v, ModelParams& p, NoiseSpec&) {
    p.alpha = Field(g, v);
  };
  const SweepResult result = sweep(g, base, noise, StepConfig{0.01, 10}, init, 6.0, "alpha",
                                   axis, mc, analysis, apply);
  REQUIRE(result.rows.size() == 3);
  CHECK(result.rows[0].predicted == "extinct-predicted");
  CHECK(result.rows[1].predicted == "boundary");
  CHECK(result.rows[2].predicted == "permanent-predicted");
  for (const SweepRow& row : result.rows) {
    CHECK((row.verdict == "extinct" || row.verdict == "permanent" ||
           row.verdict == "inconclusive"));
    CHECK(row.report.a2 == doctest::Approx(0.04).epsilon(1e-12));
  }
  // a long extinct-side run does resolve to "extinct"
  CHECK(result.rows[0].slope < 0.0);
}

TEST_CASE("sweep: degenerate single-value axis") {
  Grid g(8);
  ModelParams base = constant_params(g, 1.0, 0.5, 0.4, 0.3);
  NoiseSpec noise = NoiseSpec::space_independent(0.1, 0.1);
  SystemState init{Field(g, 2.0), Field(g, 0.5), 0.0};
  EnsembleConfig mc;
  mc.n_paths = 4;
  mc.seed = 5;
  const std::vector<double> axis{0.25};
  const SweepResult result =
      sweep(g, base, noise, StepConfig{0.01, 10}, init, 2.0, "alpha", axis, mc,
            AnalysisConfig{}, [&](double v, ModelParams& p, NoiseSpec&) {
              p.alpha = Field(g, v);
            });
  CHECK(result.rows.size() == 1);
  CHECK(result.param == "alpha");
}
