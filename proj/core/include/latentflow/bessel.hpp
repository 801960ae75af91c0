#pragma once

#include <optional>

namespace latentflow::skellam {

/// Reference argument for the Amos-type bounds: close to the largest value
/// at which I_d still evaluates in linear double precision.
inline constexpr double kAmosReferenceArgument = 705.0;

/// Hard limit on the number of series terms before falling back to bounds.
inline constexpr long kSeriesTermCap = 1'000'000;

/// Terms smaller than exp(-kSeriesLogCutoff) times the running maximum end the series.
inline constexpr double kSeriesLogCutoff = 36.0;

enum class BesselMethod { series, amos_bounds };

struct BesselEval {
  int order = 0;
  double argument = 0.0;
  double log_value = 0.0;
  BesselMethod method = BesselMethod::series;
};

struct RatioBounds {
  double lower = 0.0;
  double upper = 0.0;
  [[nodiscard]] double mid() const { return 0.5 * (lower + upper); }
};

/// log I_d(theta) for integer order d >= 0 and theta >= 0.
///
/// The power series is summed in scaled form around its largest term, which
/// is the same as a running log-sum-exp but avoids a log/exp per term. When
/// the number of significant terms would exceed kSeriesTermCap the value is
/// the midpoint (in log space) of the Amos-type lower and upper bounds
/// anchored at kAmosReferenceArgument.
///
/// I_0(0) = 1 gives 0; I_d(0) for d > 0 gives -infinity. Negative d or theta,
/// or a non-finite theta, throw ConfigError.
BesselEval eval_log_bessel_i(int d, double theta);

double log_bessel_i(int d, double theta);

/// log I_d(theta) - theta, same paths as log_bessel_i. On the bound path the
/// subtraction is done analytically, so the result stays accurate for huge theta.
double log_bessel_i_scaled(int d, double theta);

/// Series-only evaluation; nullopt if more than max_terms terms are needed.
std::optional<double> log_bessel_i_series(int d, double theta, long max_terms = kSeriesTermCap);

/// Approximation of log I_d(theta) from the log bounds with reference argument
/// min(theta_ref, theta); the reference value itself is taken from the series.
double log_bessel_i_bounds(int d, double theta, double theta_ref = kAmosReferenceArgument);

/// log L(theta, theta_ref, d) and log U(theta, theta_ref, d), given log I_d(theta_ref).
/// Valid as bounds for 0 < theta_ref <= theta.
double log_bessel_lower_bound(double theta, double theta_ref, int d, double log_i_ref);
double log_bessel_upper_bound(double theta, double theta_ref, int d, double log_i_ref);

/// Bounds on I_{d+1}(theta) / I_d(theta); both lie in [0, 1].
RatioBounds bessel_ratio_bounds(int d, double theta);

/// I_{d+1}(theta) / I_d(theta), exact from the series when available,
/// otherwise the midpoint of bessel_ratio_bounds. Always in [0, 1].
double bessel_ratio(int d, double theta);

/// I_{d+2}(theta) / I_d(theta). Falls back to the product of two midpoint ratios.
double bessel_ratio2(int d, double theta);

}  // namespace latentflow::skellam
