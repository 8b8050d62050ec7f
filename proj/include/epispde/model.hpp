#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "epispde/grid.hpp"
#include "epispde/noise.hpp"

namespace epispde {

/// Spatially varying model data: recruitment Lambda, death rates mu1/mu2,
/// infection rate alpha, plus the two diffusivities.
struct ModelParams {
  Field lambda;
  Field mu1;
  Field mu2;
  Field alpha;
  double k1 = 0.0;
  double k2 = 0.0;
};

/// Checks the standing assumptions (rates >= 0 and finite, diffusivities > 0,
/// fields sized to the grid) and returns the params with rate fields flagged
/// nonnegative.  Throws std::invalid_argument naming the first violation.
ModelParams validate_params(ModelParams params, const Grid& grid);

struct Reaction {
  double f1;
  double f2;
};

/// Truncated drift f*(s, i) = f(s v 0, i v 0):
///   f1 = lam - m1 s - al s i/(s+i),  f2 = -m2 i + al s i/(s+i),
/// with the incidence ratio defined as 0 when s = 0 or i = 0.  The ratio is
/// evaluated as min * (max / (s+i)) which is exact for the same formula and
/// immune to cancellation when s + i is tiny.
inline Reaction reaction_terms(double s, double i, double lam, double m1, double m2,
                               double al) {
  if (std::isnan(s) || std::isnan(i) || std::isnan(lam) || std::isnan(m1) ||
      std::isnan(m2) || std::isnan(al))
    throw std::invalid_argument("reaction_terms: NaN input");
  s = s < 0.0 ? 0.0 : s;
  i = i < 0.0 ? 0.0 : i;
  double incidence = 0.0;
  if (s > 0.0 && i > 0.0) {
    const double lo = s < i ? s : i;
    const double hi = s < i ? i : s;
    incidence = al * (lo * (hi / (s + i)));
  }
  return {lam - m1 * s - incidence, -m2 * i + incidence};
}

/// The model's threshold constants on a given grid.
///   r_hat   = int alpha - int mu2 - a2/2       (permanence when > 0, with lambda_star > 0)
///   (mu2 - alpha)_*                            (mean extinction when > 0)
///   mu_star = min over cells of min(mu1, mu2)  (mass bound rate)
///   r_p     = (mu2 - alpha)_* + (1-p) a2/2     (pth-moment rate, space-independent noise)
struct ThresholdReport {
  double r_hat = 0.0;
  double mu2_minus_alpha_star = 0.0;
  double mu_star = 0.0;
  double lambda_star = 0.0;
  double a2 = 0.0;
  std::optional<double> r_p;
  std::optional<double> p;
};

/// Integrals are the midpoint-rule `integrate` on the same grid; minima are
/// over cells.  r_p is filled only when p is supplied, and requires
/// space-independent noise for species 2.
ThresholdReport compute_thresholds(const ModelParams& params, const NoiseSpec& noise,
                                   const Grid& grid,
                                   std::optional<double> p = std::nullopt);

}  // namespace epispde
