#include "epispde/observables.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "epispde/spectral.hpp"

namespace epispde {

double permanence_functional(const Field& i_field) {
  const Grid& g = i_field.grid();
  double sum = 0.0;
  for (int j = 0; j < g.n; ++j) {
    const double v = i_field[j];
    const double sq = v * v;
    sum += sq < 1.0 ? sq : 1.0;
  }
  return std::sqrt(sum * g.h);
}

double time_average(std::span<const double> values, std::span<const double> times) {
  if (values.size() != times.size())
    throw std::invalid_argument("time_average: length mismatch");
  if (values.size() < 2)
    throw std::invalid_argument("time_average: need at least 2 samples");
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const double dt = times[i + 1] - times[i];
    if (!(dt > 0.0)) throw std::invalid_argument("time_average: times must be increasing");
    integral += 0.5 * (values[i] + values[i + 1]) * dt;
  }
  return integral / (times.back() - times.front());
}

double mass_bound_reference(const ModelParams& params, double init_mass, double t) {
  double mu_star = std::min(params.mu1[0], params.mu2[0]);
  double lambda_sup = params.lambda[0];
  for (int j = 1; j < params.mu1.size(); ++j) {
    mu_star = std::min(mu_star, std::min(params.mu1[j], params.mu2[j]));
    lambda_sup = std::max(lambda_sup, params.lambda[j]);
  }
  if (!(mu_star > 0.0))
    throw std::invalid_argument("mass_bound_reference: bound requires mu_* > 0");
  return std::exp(-mu_star * t) * init_mass + lambda_sup / mu_star;
}

DecayFit fit_decay_rate(std::span<const double> times, std::span<const double> means,
                        double t_lo, double t_hi) {
  if (times.size() != means.size())
    throw std::invalid_argument("fit_decay_rate: length mismatch");
  if (!(t_lo < t_hi)) throw std::invalid_argument("fit_decay_rate: need t_lo < t_hi");

  std::vector<double> ts, ys;
  double last_positive = -1.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    const bool in_window = t >= t_lo && t <= t_hi;
    if (means[i] > 0.0) {
      last_positive = t;
      if (in_window) {
        ts.push_back(t);
        ys.push_back(std::log(means[i]));
      }
    } else if (in_window) {
      throw UnderflowError(
          "fit_decay_rate: underflow before window end (last positive mean at t=" +
          std::to_string(last_positive) + ")");
    }
  }
  if (ts.size() < 10)
    throw std::invalid_argument("fit_decay_rate: fit window contains fewer than 10 samples");

  const std::size_t m = ts.size();
  double t_mean = 0.0, y_mean = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    t_mean += ts[i];
    y_mean += ys[i];
  }
  t_mean /= static_cast<double>(m);
  y_mean /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (ts[i] - t_mean) * (ts[i] - t_mean);
    sxy += (ts[i] - t_mean) * (ys[i] - y_mean);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_decay_rate: degenerate time window");

  DecayFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = y_mean - fit.slope * t_mean;
  double ssr = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * ts[i]);
    ssr += r * r;
  }
  fit.stderr_slope = std::sqrt(ssr / static_cast<double>(m - 2) / sxx);
  fit.t_lo = t_lo;
  fit.t_hi = t_hi;
  fit.n_samples = static_cast<int>(m);
  return fit;
}

}  // namespace epispde
