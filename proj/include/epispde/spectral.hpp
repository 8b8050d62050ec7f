#pragma once

#include <vector>

#include "epispde/grid.hpp"

namespace epispde {

/// Discrete Neumann Laplacian A = k d2/dx2 on a cell-centered grid,
/// diagonalized in the discrete cosine basis v_m(j) = cos(m pi x_j).
/// Eigenvalues: lambda_m = -k (2/h^2)(1 - cos(m pi / n)), lambda_0 = 0.
/// The heat semigroup e^{tA} is applied exactly by scaling cosine modes,
/// so the stepper's linear part carries no splitting error.
///
/// Immutable after construction; apply calls use thread-local scratch and
/// may run concurrently from any number of threads.
class DiscreteSemigroup {
 public:
  DiscreteSemigroup(const Grid& grid, double diffusivity);
  ~DiscreteSemigroup();

  DiscreteSemigroup(const DiscreteSemigroup&) = delete;
  DiscreteSemigroup& operator=(const DiscreteSemigroup&) = delete;
  DiscreteSemigroup(DiscreteSemigroup&& other) noexcept;
  DiscreteSemigroup& operator=(DiscreteSemigroup&& other) noexcept;

  const Grid& grid() const { return grid_; }
  double diffusivity() const { return k_; }
  double eigenvalue(int m) const { return eig_[static_cast<std::size_t>(m)]; }

  /// Unnormalized DCT-II: out_m = 2 sum_j in_j cos(m pi (j+1/2)/n).
  /// in and out must be distinct arrays of n doubles.
  void forward(const double* in, double* out) const;

  /// Inverse of forward (DCT-III scaled by 1/(2n)).
  void inverse(const double* in, double* out) const;

  /// out = e^{tA} in.  t >= 0; in and out may alias.
  void apply_exp(const double* in, double* out, double t) const;

  /// e^{dt A} with the mode scalings cached, for repeated stepping.
  class Propagator {
   public:
    void apply(const double* in, double* out) const;
    double dt() const { return dt_; }

   private:
    friend class DiscreteSemigroup;
    const DiscreteSemigroup* sg_ = nullptr;
    double dt_ = 0.0;
    std::vector<double> scale_;
  };
  Propagator propagator(double dt) const;

 private:
  Grid grid_;
  double k_ = 0.0;
  std::vector<double> eig_;
  void* plan_fwd_ = nullptr;  // fftw_plan
  void* plan_inv_ = nullptr;
};

/// Second-difference Neumann Laplacian, computed in flux form so the
/// integral of the result telescopes to zero at round-off level.
Field laplacian_apply(const Field& u, const DiscreteSemigroup& sg);

/// e^{tA} u.  Output of a nonnegative-flagged input is clamped to zero
/// (negatives can only be transform round-off, <= 1e-12 * max|u|) and
/// keeps the flag.
Field semigroup_apply(const Field& u, double t, const DiscreteSemigroup& sg);

/// Midpoint rule h * sum_j u_j (exact for cell-centered piecewise constants).
double integrate(const Field& u);

/// Same as integrate, on a raw cell array.  Compensated summation.
double integrate_cells(const double* v, int n, double h);

}  // namespace epispde
