#include "latentflow/bessel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "latentflow/errors.hpp"

namespace latentflow::skellam {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_domain(int d, double theta) {
  if (d < 0) {
    throw ConfigError("bessel: negative order " + std::to_string(d));
  }
  if (!(theta >= 0.0) || !std::isfinite(theta)) {
    throw ConfigError("bessel: argument must be finite and non-negative, got " +
                      std::to_string(theta));
  }
}

// Index of the largest series term: first k with (k+1)(k+1+d) >= x^2.
long series_mode(int d, double x) {
  const double dd = static_cast<double>(d);
  const double root = 0.5 * (-dd + std::sqrt(dd * dd + 4.0 * x * x));
  return std::max(0L, static_cast<long>(std::ceil(root)) - 1);
}

}  // namespace

std::optional<double> log_bessel_i_series(int d, double theta, long max_terms) {
  check_domain(d, theta);
  if (theta == 0.0) {
    return d == 0 ? 0.0 : kNegInf;
  }
  const double x = 0.5 * theta;
  const double log_x = std::log(x);
  const double x2 = x * x;
  const long mode = series_mode(d, x);

  // Number of terms within the cutoff of the peak, from the local curvature
  // of log t_k around the mode.
  const double curvature = 1.0 / (mode + 1.0) + 1.0 / (mode + d + 1.0);
  const double half_width = std::sqrt(2.0 * kSeriesLogCutoff / curvature);
  if (2.0 * half_width + 1.0 > static_cast<double>(max_terms) || !std::isfinite(x2)) {
    return std::nullopt;
  }

  const double log_peak = (d + 2.0 * mode) * log_x - std::lgamma(mode + 1.0) -
                          std::lgamma(static_cast<double>(d) + mode + 1.0);
  const double cutoff = std::exp(-kSeriesLogCutoff);

  double sum = 1.0;
  double running_max = 1.0;
  long used = 1;

  // Upward from the mode: t_k / t_{k-1} = x^2 / (k (d + k)).
  double term = 1.0;
  for (long k = mode + 1;; ++k) {
    const double next = term * x2 / (static_cast<double>(k) * (d + static_cast<double>(k)));
    const bool decreasing = next < term;
    term = next;
    sum += term;
    running_max = std::max(running_max, term);
    if (++used > max_terms) return std::nullopt;
    if (decreasing && term < cutoff * running_max) break;
  }
  // Downward from the mode: t_{k-1} / t_k = k (d + k) / x^2.
  term = 1.0;
  for (long k = mode; k > 0; --k) {
    const double next = term * (static_cast<double>(k) * (d + static_cast<double>(k))) / x2;
    const bool decreasing = next < term;
    term = next;
    sum += term;
    running_max = std::max(running_max, term);
    if (++used > max_terms) return std::nullopt;
    if (decreasing && term < cutoff * running_max) break;
  }
  return log_peak + std::log(sum);
}

namespace {

// Bound minus theta. The quadratic term is rearranged so that neither theta^2
// nor the difference of two values near theta is formed.
double scaled_bound(double theta, double theta_ref, int d, double log_i_ref, double a) {
  const double b = d + 0.5;
  const double q = std::hypot(theta, a);
  const double q_ref = std::hypot(theta_ref, a);
  const double quad = -(theta * (a / (theta + q)) * a + theta_ref * theta_ref + theta * q_ref) /
                      (q + q_ref);
  return d * std::log(theta / theta_ref) + log_i_ref + quad +
         b * std::log((b + q_ref) / (b + q));
}

double scaled_midpoint(int d, double theta, double theta_ref) {
  const double ref = std::min(theta_ref, theta);
  const auto log_ref = log_bessel_i_series(d, ref);
  if (!log_ref) {
    throw NumericalError("bessel: reference value did not converge at argument " +
                         std::to_string(ref));
  }
  return 0.5 * (scaled_bound(theta, ref, d, *log_ref, d + 1.5) +
                scaled_bound(theta, ref, d, *log_ref, d + 0.5));
}

}  // namespace

double log_bessel_lower_bound(double theta, double theta_ref, int d, double log_i_ref) {
  return theta + scaled_bound(theta, theta_ref, d, log_i_ref, d + 1.5);
}

double log_bessel_upper_bound(double theta, double theta_ref, int d, double log_i_ref) {
  return theta + scaled_bound(theta, theta_ref, d, log_i_ref, d + 0.5);
}

double log_bessel_i_bounds(int d, double theta, double theta_ref) {
  check_domain(d, theta);
  if (theta == 0.0) {
    return d == 0 ? 0.0 : kNegInf;
  }
  return theta + scaled_midpoint(d, theta, theta_ref);
}

BesselEval eval_log_bessel_i(int d, double theta) {
  if (auto series = log_bessel_i_series(d, theta)) {
    return {d, theta, *series, BesselMethod::series};
  }
  return {d, theta, log_bessel_i_bounds(d, theta), BesselMethod::amos_bounds};
}

double log_bessel_i(int d, double theta) { return eval_log_bessel_i(d, theta).log_value; }

double log_bessel_i_scaled(int d, double theta) {
  if (auto series = log_bessel_i_series(d, theta)) {
    return *series - theta;
  }
  return theta == 0.0 ? (d == 0 ? 0.0 : kNegInf) : scaled_midpoint(d, theta, kAmosReferenceArgument);
}

RatioBounds bessel_ratio_bounds(int d, double theta) {
  check_domain(d, theta);
  const double a = d + 1.5;
  const double b = d + 0.5;
  return {theta / (b + std::sqrt(theta * theta + a * a)),
          theta / (b + std::sqrt(theta * theta + b * b))};
}

double bessel_ratio(int d, double theta) {
  check_domain(d, theta);
  if (theta == 0.0) return 0.0;
  const auto lo = log_bessel_i_series(d, theta);
  const auto hi = lo ? log_bessel_i_series(d + 1, theta) : std::nullopt;
  if (lo && hi) {
    return std::clamp(std::exp(*hi - *lo), 0.0, 1.0);
  }
  return bessel_ratio_bounds(d, theta).mid();
}

double bessel_ratio2(int d, double theta) {
  check_domain(d, theta);
  if (theta == 0.0) return 0.0;
  const auto lo = log_bessel_i_series(d, theta);
  const auto hi = lo ? log_bessel_i_series(d + 2, theta) : std::nullopt;
  if (lo && hi) {
    return std::clamp(std::exp(*hi - *lo), 0.0, 1.0);
  }
  return bessel_ratio_bounds(d, theta).mid() * bessel_ratio_bounds(d + 1, theta).mid();
}

}  // namespace latentflow::skellam
