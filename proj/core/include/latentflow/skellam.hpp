#pragma once

namespace latentflow::skellam {

/// Intensities of the difference D = X - Y with X ~ Poi(theta1), Y ~ Poi(theta2).
/// theta1 plays the incoming role, theta2 the outgoing one.
struct SkellamParams {
  double theta1 = 1.0;
  double theta2 = 1.0;
};

/// Log-likelihood of one observation and its partial derivatives in (theta1, theta2).
struct SkellamDerivs {
  double ll = 0.0;
  double d_theta1 = 0.0;
  double d_theta2 = 0.0;
  double d2_theta1 = 0.0;
  double d2_theta2 = 0.0;
  double d2_cross = 0.0;  // symmetric mixed partial
};

/// log P(D = d). Throws ConfigError for non-positive or non-finite intensities.
double skellam_logpmf(SkellamParams p, int d);

SkellamDerivs skellam_derivs(SkellamParams p, int d);

/// log P(Y = k) for Y ~ Poi(mu), mu > 0.
double poisson_logpmf(double mu, int k);

}  // namespace latentflow::skellam
