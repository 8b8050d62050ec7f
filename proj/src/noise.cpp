#include "epispde/noise.hpp"

#include <cmath>
#include <stdexcept>

namespace epispde {

namespace {

// Philox4x32-10 (Salmon et al. constants).
constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

struct Block {
  std::uint32_t v[4];
};

inline Block philox4x32(Block ctr, std::uint32_t k0, std::uint32_t k1) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr.v[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr.v[2];
    Block next;
    next.v[0] = static_cast<std::uint32_t>(p1 >> 32) ^ ctr.v[1] ^ k0;
    next.v[1] = static_cast<std::uint32_t>(p1);
    next.v[2] = static_cast<std::uint32_t>(p0 >> 32) ^ ctr.v[3] ^ k1;
    next.v[3] = static_cast<std::uint32_t>(p0);
    ctr = next;
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return ctr;
}

// 53-bit mantissa mapped to (0, 1] so log() is always defined.
inline double to_unit(std::uint64_t bits) {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

void validate_species_kl(const SpeciesNoise& sn, const char* which) {
  std::string name(which);
  if (!std::isfinite(sn.a) || sn.a < 0.0)
    throw std::invalid_argument("NoiseSpec: " + name + ": coefficient scale a must be >= 0");
  if (sn.truncation < 1)
    throw std::invalid_argument("NoiseSpec: " + name + ": truncation K must be >= 1");
  if (sn.family == CoeffFamily::Geometric) {
    if (!(sn.param > 0.0 && sn.param < 1.0))
      throw std::invalid_argument("NoiseSpec: " + name +
                                  ": family parameters outside convergence region (need 0 < q < 1)");
  } else {
    if (!(sn.param > 1.0))
      throw std::invalid_argument("NoiseSpec: " + name +
                                  ": family parameters outside convergence region (need r > 1)");
  }
}

TraceResult trace_of(const SpeciesNoise& sn, NoiseMode mode) {
  TraceResult tr;
  if (mode == NoiseMode::SpaceIndependent) {
    tr.total = sn.sigma * sn.sigma;
    tr.tail = 0.0;
    return tr;
  }
  if (sn.family == CoeffFamily::Geometric) {
    tr.total = sn.a / (1.0 - sn.param);
    tr.tail = sn.a * std::pow(sn.param, sn.truncation) / (1.0 - sn.param);
  } else {
    tr.total = sn.a * std::riemann_zeta(sn.param);
    double head = 0.0;
    for (int m = 1; m <= sn.truncation; ++m) head += std::pow(m, -sn.param);
    tr.tail = tr.total - sn.a * head;
    if (tr.tail < 0.0) tr.tail = 0.0;
  }
  return tr;
}

}  // namespace

NoiseSpec NoiseSpec::kl(const SpeciesNoise& species1, const SpeciesNoise& species2,
                        double tail_tol_rel) {
  validate_species_kl(species1, "species 1");
  validate_species_kl(species2, "species 2");
  if (!(tail_tol_rel > 0.0))
    throw std::invalid_argument("NoiseSpec: tail_tol must be > 0");
  NoiseSpec spec;
  spec.mode_ = NoiseMode::KL;
  spec.s1_ = species1;
  spec.s2_ = species2;
  spec.tail_tol_rel_ = tail_tol_rel;
  for (int i = 1; i <= 2; ++i) {
    const TraceResult tr = trace_of(spec.species(i), NoiseMode::KL);
    if (tr.tail > tail_tol_rel * tr.total)
      throw std::invalid_argument(
          "NoiseSpec: truncation tail exceeds tail_tol for species " + std::to_string(i) +
          " (raise K or tail_tol)");
  }
  return spec;
}

NoiseSpec NoiseSpec::space_independent(double sigma1, double sigma2) {
  if (!std::isfinite(sigma1) || !std::isfinite(sigma2) || sigma1 < 0.0 || sigma2 < 0.0)
    throw std::invalid_argument("NoiseSpec: sigma must be finite and >= 0");
  NoiseSpec spec;
  spec.mode_ = NoiseMode::SpaceIndependent;
  spec.s1_.sigma = sigma1;
  spec.s2_.sigma = sigma2;
  spec.s1_.truncation = spec.s2_.truncation = 1;
  return spec;
}

const SpeciesNoise& NoiseSpec::species(int i) const {
  if (i == 1) return s1_;
  if (i == 2) return s2_;
  throw std::invalid_argument("NoiseSpec: species index must be 1 or 2");
}

double NoiseSpec::coefficient(int species_idx, int k) const {
  const SpeciesNoise& sn = species(species_idx);
  if (k < 0) throw std::invalid_argument("NoiseSpec: mode index must be >= 0");
  if (mode_ == NoiseMode::SpaceIndependent) return k == 0 ? sn.sigma * sn.sigma : 0.0;
  if (sn.family == CoeffFamily::Geometric) return sn.a * std::pow(sn.param, k);
  return sn.a * std::pow(k + 1, -sn.param);
}

bool NoiseSpec::is_zero() const {
  if (mode_ == NoiseMode::SpaceIndependent) return s1_.sigma == 0.0 && s2_.sigma == 0.0;
  return s1_.a == 0.0 && s2_.a == 0.0;
}

TraceResult trace(const NoiseSpec& spec, int species) {
  return trace_of(spec.species(species), spec.mode());
}

double eigenbasis_eval(int k, double x) {
  if (k < 0) throw std::invalid_argument("eigenbasis_eval: mode index must be >= 0");
  if (k == 0) return 1.0;
  return M_SQRT2 * std::cos(k * M_PI * x);
}

double covariance(const NoiseSpec& spec, int species, double x, double y, double t) {
  if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0))
    throw std::invalid_argument("covariance: positions must lie in [0,1]");
  if (!(t >= 0.0)) throw std::invalid_argument("covariance: t must be >= 0");
  const SpeciesNoise& sn = spec.species(species);
  if (spec.mode() == NoiseMode::SpaceIndependent) return t * sn.sigma * sn.sigma;
  double sum = 0.0;
  for (int k = 0; k < sn.truncation; ++k)
    sum += spec.coefficient(species, k) * eigenbasis_eval(k, x) * eigenbasis_eval(k, y);
  return t * sum;
}

double normal_variate(const RngStream& rng, std::uint32_t species, std::uint64_t step,
                      std::uint32_t mode) {
  Block ctr{{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
             rng.path, (species << 28) | (mode & 0x0FFFFFFFu)}};
  const Block out = philox4x32(ctr, static_cast<std::uint32_t>(rng.seed),
                               static_cast<std::uint32_t>(rng.seed >> 32));
  const std::uint64_t b0 = (static_cast<std::uint64_t>(out.v[1]) << 32) | out.v[0];
  const std::uint64_t b1 = (static_cast<std::uint64_t>(out.v[3]) << 32) | out.v[2];
  const double u1 = to_unit(b0);
  const double u2 = to_unit(b1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

NoiseSampler::NoiseSampler(const NoiseSpec& spec, const Grid& grid)
    : spec_(spec), grid_(grid) {
  if (spec_.mode() == NoiseMode::KL) {
    k_max_ = std::max(spec_.species(1).truncation, spec_.species(2).truncation);
    basis_.resize(static_cast<std::size_t>(k_max_) * grid_.n);
    for (int k = 0; k < k_max_; ++k)
      for (int j = 0; j < grid_.n; ++j)
        basis_[static_cast<std::size_t>(k) * grid_.n + j] = eigenbasis_eval(k, grid_.center(j));
    sqrt_a1_.resize(static_cast<std::size_t>(spec_.species(1).truncation));
    sqrt_a2_.resize(static_cast<std::size_t>(spec_.species(2).truncation));
    for (std::size_t k = 0; k < sqrt_a1_.size(); ++k)
      sqrt_a1_[k] = std::sqrt(spec_.coefficient(1, static_cast<int>(k)));
    for (std::size_t k = 0; k < sqrt_a2_.size(); ++k)
      sqrt_a2_[k] = std::sqrt(spec_.coefficient(2, static_cast<int>(k)));
  }
}

void NoiseSampler::sample(int species, double dt, const RngStream& rng, std::uint64_t step,
                          double* out) const {
  if (!(dt > 0.0)) throw std::invalid_argument("sample_increment: dt must be > 0");
  const int n = grid_.n;
  const SpeciesNoise& sn = spec_.species(species);
  const double sqrt_dt = std::sqrt(dt);
  if (spec_.mode() == NoiseMode::SpaceIndependent) {
    const double z = normal_variate(rng, static_cast<std::uint32_t>(species), step, 0);
    const double val = sn.sigma * sqrt_dt * z;
    for (int j = 0; j < n; ++j) out[j] = val;
    return;
  }
  for (int j = 0; j < n; ++j) out[j] = 0.0;
  const std::vector<double>& sqrt_a = (species == 1) ? sqrt_a1_ : sqrt_a2_;
  for (int k = 0; k < sn.truncation; ++k) {
    const double w =
        sqrt_a[static_cast<std::size_t>(k)] * sqrt_dt *
        normal_variate(rng, static_cast<std::uint32_t>(species), step, static_cast<std::uint32_t>(k));
    if (w == 0.0) continue;
    const double* row = &basis_[static_cast<std::size_t>(k) * n];
    for (int j = 0; j < n; ++j) out[j] += w * row[j];
  }
}

Field sample_increment(const NoiseSpec& spec, int species, double dt, const Grid& grid,
                       const RngStream& rng, std::uint64_t step) {
  NoiseSampler sampler(spec, grid);
  Field out(grid);
  sampler.sample(species, dt, rng, step, out.data());
  return out;
}

}  // namespace epispde
