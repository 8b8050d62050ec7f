#include "epispde/model.hpp"

#include <string>

#include "epispde/spectral.hpp"

namespace epispde {

namespace {

void check_rate_field(const Field& f, const Grid& grid, const char* name) {
  if (!(f.grid() == grid) || f.size() != grid.n)
    throw std::invalid_argument(std::string("validate_params: size mismatch: ") + name);
  for (int j = 0; j < f.size(); ++j) {
    if (!std::isfinite(f[j]))
      throw std::invalid_argument(std::string("validate_params: non-finite value in ") + name);
    if (f[j] < 0.0)
      throw std::invalid_argument(std::string("validate_params: negative rate in ") + name);
  }
}

}  // namespace

ModelParams validate_params(ModelParams params, const Grid& grid) {
  check_rate_field(params.lambda, grid, "lambda");
  check_rate_field(params.mu1, grid, "mu1");
  check_rate_field(params.mu2, grid, "mu2");
  check_rate_field(params.alpha, grid, "alpha");
  if (!std::isfinite(params.k1) || !(params.k1 > 0.0))
    throw std::invalid_argument("validate_params: nonpositive diffusivity k1");
  if (!std::isfinite(params.k2) || !(params.k2 > 0.0))
    throw std::invalid_argument("validate_params: nonpositive diffusivity k2");
  params.lambda.flag_nonnegative();
  params.mu1.flag_nonnegative();
  params.mu2.flag_nonnegative();
  params.alpha.flag_nonnegative();
  return params;
}

ThresholdReport compute_thresholds(const ModelParams& params, const NoiseSpec& noise,
                                   const Grid& grid, std::optional<double> p) {
  if (params.alpha.size() != grid.n || params.mu2.size() != grid.n)
    throw std::invalid_argument("compute_thresholds: fields not sized to grid");
  ThresholdReport report;
  report.a2 = trace(noise, 2).total;
  report.r_hat = integrate(params.alpha) - integrate(params.mu2) - report.a2 / 2.0;

  double m2a = params.mu2[0] - params.alpha[0];
  double mu_star = std::min(params.mu1[0], params.mu2[0]);
  double lambda_star = params.lambda[0];
  for (int j = 1; j < grid.n; ++j) {
    m2a = std::min(m2a, params.mu2[j] - params.alpha[j]);
    mu_star = std::min(mu_star, std::min(params.mu1[j], params.mu2[j]));
    lambda_star = std::min(lambda_star, params.lambda[j]);
  }
  report.mu2_minus_alpha_star = m2a;
  report.mu_star = mu_star;
  report.lambda_star = lambda_star;

  if (p.has_value()) {
    if (!(*p > 0.0 && *p < 1.0))
      throw std::invalid_argument("compute_thresholds: p must lie in (0,1)");
    if (noise.mode() != NoiseMode::SpaceIndependent)
      throw std::invalid_argument("compute_thresholds: R_p requires space-independent noise");
    report.p = *p;
    report.r_p = m2a + (1.0 - *p) * report.a2 / 2.0;
  }
  return report;
}

}  // namespace epispde
