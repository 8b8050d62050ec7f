#pragma once

#include <cstdint>
#include <vector>

#include "epispde/grid.hpp"

namespace epispde {

enum class NoiseMode { KL, SpaceIndependent };
enum class CoeffFamily { Geometric, Polynomial };

/// One species' share of the driving noise.
/// KL mode: mode variances a_k = a q^k (geometric, 0 < q < 1) or
/// a_k = a/(k+1)^r (polynomial, r > 1), truncated at K modes.
/// Space-independent mode: a single Brownian motion of intensity sigma,
/// i.e. all variance on the constant basis function e_0.
struct SpeciesNoise {
  CoeffFamily family = CoeffFamily::Geometric;
  double a = 0.0;
  double param = 0.5;  // q or r
  int truncation = 1;  // K
  double sigma = 0.0;  // space-independent only
};

/// Validated description of the pair (W_1, W_2).  The coefficient families
/// have closed-form traces, so the trace-class condition is enforced exactly
/// and the truncation tail is known, not estimated.
class NoiseSpec {
 public:
  /// Default: space-independent with sigma1 = sigma2 = 0, i.e. no noise.
  NoiseSpec() = default;

  static NoiseSpec kl(const SpeciesNoise& species1, const SpeciesNoise& species2,
                      double tail_tol_rel = 1e-6);
  static NoiseSpec space_independent(double sigma1, double sigma2);

  NoiseMode mode() const { return mode_; }
  const SpeciesNoise& species(int i) const;
  double tail_tol_rel() const { return tail_tol_rel_; }

  /// a_{k,i} for species i in {1,2}, mode k >= 0.
  double coefficient(int species, int k) const;

  bool is_zero() const;  // both species carry no noise

 private:
  NoiseMode mode_ = NoiseMode::SpaceIndependent;
  SpeciesNoise s1_, s2_;
  double tail_tol_rel_ = 1e-6;
};

struct TraceResult {
  double total = 0.0;  // a_i = sum_k a_{k,i}, closed form
  double tail = 0.0;   // sum_{k >= K} a_{k,i}
};
TraceResult trace(const NoiseSpec& spec, int species);

/// Neumann cosine basis on [0,1]: e_0 = 1, e_k(x) = sqrt(2) cos(k pi x).
/// Orthonormal in L2(0,1) and uniformly bounded by C0 = sqrt(2).
double eigenbasis_eval(int k, double x);

/// Closed-form covariance of W_i: Cov(W_i(t,x), W_i(t,y)) with the
/// truncated expansion, = t sum_{k<K} a_k e_k(x) e_k(y).
double covariance(const NoiseSpec& spec, int species, double x, double y, double t);

/// Address of a path's random stream.  Together with (species, step, mode)
/// it identifies every normal variate, so samples are independent of
/// evaluation order and thread schedule.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint32_t path = 0;
};

/// The standard normal drawn at coordinates (seed, path, species, step, mode).
/// Counter-based (Philox4x32-10), stateless, bit-reproducible.
double normal_variate(const RngStream& rng, std::uint32_t species, std::uint64_t step,
                      std::uint32_t mode);

/// Sampler bound to one (spec, grid): precomputes the basis table and
/// sqrt(a_k) so per-step synthesis is a K x n mul-add.
class NoiseSampler {
 public:
  NoiseSampler(const NoiseSpec& spec, const Grid& grid);

  const NoiseSpec& spec() const { return spec_; }
  const Grid& grid() const { return grid_; }

  /// Writes Delta W_i over a step of length dt into out (n cells).
  void sample(int species, double dt, const RngStream& rng, std::uint64_t step,
              double* out) const;

 private:
  NoiseSpec spec_;
  Grid grid_;
  std::vector<double> basis_;    // [k*n + j] = e_k(x_j), KL mode only
  std::vector<double> sqrt_a1_;  // sqrt(a_{k,1})
  std::vector<double> sqrt_a2_;
  int k_max_ = 0;
};

/// One KL (or space-independent) increment as a Field.
Field sample_increment(const NoiseSpec& spec, int species, double dt, const Grid& grid,
                       const RngStream& rng, std::uint64_t step);

}  // namespace epispde
