#include "epispde/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <stdexcept>

namespace epispde {

namespace {

// FFTW's planner is not thread-safe; executing plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

thread_local std::vector<double> tls_stage;  // staging copy of transform input
thread_local std::vector<double> tls_modes;  // cosine coefficients

double* stage_buffer(std::size_t n) {
  if (tls_stage.size() < n) tls_stage.resize(n);
  return tls_stage.data();
}
double* mode_buffer(std::size_t n) {
  if (tls_modes.size() < n) tls_modes.resize(n);
  return tls_modes.data();
}

}  // namespace

DiscreteSemigroup::DiscreteSemigroup(const Grid& grid, double diffusivity)
    : grid_(grid), k_(diffusivity) {
  if (!(diffusivity > 0.0) || !std::isfinite(diffusivity))
    throw std::invalid_argument("DiscreteSemigroup: diffusivity must be positive");
  const int n = grid_.n;
  eig_.resize(static_cast<std::size_t>(n));
  const double s = 2.0 / (grid_.h * grid_.h);
  for (int m = 0; m < n; ++m)
    eig_[static_cast<std::size_t>(m)] = -k_ * s * (1.0 - std::cos(m * M_PI / n));

  // FFTW_UNALIGNED keeps the plan independent of buffer addresses so that
  // new-array execution is valid for any caller arrays and the transform
  // algorithm (hence round-off) is fixed for a given n.
  std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
  std::lock_guard<std::mutex> lock(planner_mutex());
  plan_fwd_ = fftw_plan_r2r_1d(n, a.data(), b.data(), FFTW_REDFT10,
                               FFTW_ESTIMATE | FFTW_UNALIGNED);
  plan_inv_ = fftw_plan_r2r_1d(n, a.data(), b.data(), FFTW_REDFT01,
                               FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (plan_fwd_ == nullptr || plan_inv_ == nullptr)
    throw std::runtime_error("DiscreteSemigroup: fftw plan creation failed");
}

DiscreteSemigroup::~DiscreteSemigroup() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plan_fwd_ != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  if (plan_inv_ != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
}

DiscreteSemigroup::DiscreteSemigroup(DiscreteSemigroup&& other) noexcept
    : grid_(other.grid_),
      k_(other.k_),
      eig_(std::move(other.eig_)),
      plan_fwd_(other.plan_fwd_),
      plan_inv_(other.plan_inv_) {
  other.plan_fwd_ = nullptr;
  other.plan_inv_ = nullptr;
}

DiscreteSemigroup& DiscreteSemigroup::operator=(DiscreteSemigroup&& other) noexcept {
  if (this != &other) {
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      if (plan_fwd_ != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
      if (plan_inv_ != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
    }
    grid_ = other.grid_;
    k_ = other.k_;
    eig_ = std::move(other.eig_);
    plan_fwd_ = other.plan_fwd_;
    plan_inv_ = other.plan_inv_;
    other.plan_fwd_ = nullptr;
    other.plan_inv_ = nullptr;
  }
  return *this;
}

void DiscreteSemigroup::forward(const double* in, double* out) const {
  const std::size_t n = static_cast<std::size_t>(grid_.n);
  double* stage = stage_buffer(n);
  for (std::size_t j = 0; j < n; ++j) stage[j] = in[j];
  fftw_execute_r2r(static_cast<fftw_plan>(plan_fwd_), stage, out);
}

void DiscreteSemigroup::inverse(const double* in, double* out) const {
  const std::size_t n = static_cast<std::size_t>(grid_.n);
  double* stage = stage_buffer(n);
  for (std::size_t j = 0; j < n; ++j) stage[j] = in[j];
  fftw_execute_r2r(static_cast<fftw_plan>(plan_inv_), stage, out);
  const double norm = 1.0 / (2.0 * grid_.n);
  for (std::size_t j = 0; j < n; ++j) out[j] *= norm;
}

void DiscreteSemigroup::apply_exp(const double* in, double* out, double t) const {
  if (!(t >= 0.0)) throw std::invalid_argument("semigroup_apply: t must be >= 0");
  const std::size_t n = static_cast<std::size_t>(grid_.n);
  double* modes = mode_buffer(n);
  forward(in, modes);
  for (std::size_t m = 0; m < n; ++m) modes[m] *= std::exp(eig_[m] * t);
  inverse(modes, out);
}

DiscreteSemigroup::Propagator DiscreteSemigroup::propagator(double dt) const {
  if (!(dt >= 0.0)) throw std::invalid_argument("propagator: dt must be >= 0");
  Propagator p;
  p.sg_ = this;
  p.dt_ = dt;
  p.scale_.resize(eig_.size());
  for (std::size_t m = 0; m < eig_.size(); ++m) p.scale_[m] = std::exp(eig_[m] * dt);
  return p;
}

void DiscreteSemigroup::Propagator::apply(const double* in, double* out) const {
  const std::size_t n = scale_.size();
  double* modes = mode_buffer(n);
  sg_->forward(in, modes);
  for (std::size_t m = 0; m < n; ++m) modes[m] *= scale_[m];
  sg_->inverse(modes, out);
}

Field laplacian_apply(const Field& u, const DiscreteSemigroup& sg) {
  if (!(u.grid() == sg.grid()))
    throw std::invalid_argument("laplacian_apply: size mismatch between field and operator");
  const Grid& g = u.grid();
  const int n = g.n;
  const double k = sg.diffusivity();
  Field out(g);
  // flux form: F_{j+1/2} = k (u_{j+1} - u_j)/h, zero flux at both walls
  double flux_left = 0.0;
  for (int j = 0; j < n; ++j) {
    const double flux_right = (j + 1 < n) ? k * (u[j + 1] - u[j]) / g.h : 0.0;
    out[j] = (flux_right - flux_left) / g.h;
    flux_left = flux_right;
  }
  return out;
}

Field semigroup_apply(const Field& u, double t, const DiscreteSemigroup& sg) {
  if (!(u.grid() == sg.grid()))
    throw std::invalid_argument("semigroup_apply: size mismatch between field and operator");
  const Grid& g = u.grid();
  Field out(g);
  sg.apply_exp(u.data(), out.data(), t);
  if (u.flagged_nonnegative()) {
    for (int j = 0; j < g.n; ++j)
      if (out[j] < 0.0) out[j] = 0.0;
    out.flag_nonnegative();
  }
  return out;
}

double integrate_cells(const double* v, int n, double h) {
  // Neumaier compensated sum; keeps the discrete conservation identities
  // ( integral of the Laplacian, mass budgets ) at the 1e-12 level.
  double sum = 0.0, comp = 0.0;
  for (int j = 0; j < n; ++j) {
    const double x = v[j];
    const double t = sum + x;
    if (std::fabs(sum) >= std::fabs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  return (sum + comp) * h;
}

double integrate(const Field& u) { return integrate_cells(u.data(), u.size(), u.grid().h); }

}  // namespace epispde
