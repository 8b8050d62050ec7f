#pragma once

#include <span>
#include <stdexcept>

#include "epispde/grid.hpp"
#include "epispde/model.hpp"

namespace epispde {

/// Scalar functionals of one recorded state.
///   mass_s = int S, mass_i = int I,
///   perm = (int (I^2 ^ 1) dx)^(1/2)  in [0,1],
///   mass_i_pow_p = (int I)^p.
struct ObservableSample {
  double t = 0.0;
  double mass_s = 0.0;
  double mass_i = 0.0;
  double perm = 0.0;
  double mass_i_pow_p = 0.0;
};

/// (h sum_j min(i_j^2, 1))^(1/2); the permanence functional of a single field.
double permanence_functional(const Field& i_field);

/// Trapezoidal time integral divided by elapsed time.
double time_average(std::span<const double> values, std::span<const double> times);

/// The mass lemma bound e^{-mu_* t} M0 + sup Lambda / mu_*.
/// Throws if mu_* <= 0.
double mass_bound_reference(const ModelParams& params, double init_mass, double t);

/// Thrown by fit_decay_rate when an ensemble mean is nonpositive inside the
/// fit window (the observable decayed below floating-point range).
class UnderflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DecayFit {
  double slope = 0.0;      // per unit time
  double intercept = 0.0;  // at t = 0
  double stderr_slope = 0.0;
  double t_lo = 0.0;
  double t_hi = 0.0;
  int n_samples = 0;
};

/// Ordinary least squares on ln(mean) vs t over [t_lo, t_hi].  Means are
/// ensemble averages taken before the log (matching ln E, not E ln).
/// Requires at least 10 samples in the window.
DecayFit fit_decay_rate(std::span<const double> times, std::span<const double> means,
                        double t_lo, double t_hi);

}  // namespace epispde
