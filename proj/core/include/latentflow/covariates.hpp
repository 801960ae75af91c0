#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latentflow/spline.hpp"

namespace latentflow {

/// Which indices of a route (origin i, destination j, time t) a covariate depends on.
enum class Scope { time, station_out, station_in, dyadic };

std::string_view to_string(Scope scope);
Scope parse_scope(std::string_view text);

/// Dense covariate values laid out for one scope.
///
/// time: T values. station_out/station_in: N values, or N x T when
/// time-varying. dyadic: N x N values, or N x N x T when time-varying.
/// All layouts are row-major with time as the fastest index.
class CovariateValues {
 public:
  CovariateValues() = default;
  CovariateValues(Scope scope, int num_stations, int num_timepoints, bool time_varying,
                  std::vector<double> values);

  static CovariateValues time(std::vector<double> per_t);
  static CovariateValues station(Scope scope, int num_stations, int num_timepoints,
                                 std::vector<double> values);
  static CovariateValues dyadic(int num_stations, int num_timepoints, std::vector<double> values);

  [[nodiscard]] Scope scope() const { return scope_; }
  [[nodiscard]] bool time_varying() const { return time_varying_; }
  [[nodiscard]] int num_stations() const { return num_stations_; }
  [[nodiscard]] int num_timepoints() const { return num_timepoints_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }

  /// Value for the physical route (i, j) at time t; indices unused by the scope are ignored.
  [[nodiscard]] double at(int i, int j, int t) const;

  /// The same values re-tagged with a different scope of the same shape family.
  [[nodiscard]] CovariateValues with_scope(Scope scope) const;

 private:
  Scope scope_ = Scope::time;
  int num_stations_ = 0;
  int num_timepoints_ = 0;
  bool time_varying_ = true;
  std::vector<double> values_;
};

struct LinearTerm {
  std::string name;
  CovariateValues values;
};

struct SmoothTerm {
  SmoothTermSpec spec;
  CovariateValues values;
};

/// dist^alpha * exp(-dist); maximal at dist = alpha.
double distance_transform(double dist, double alpha);

/// Covariates entering the linear predictor of a route intensity.
///
/// Routes touching the latent station get zero contribution from every
/// scope except time.
class CovariateSet {
 public:
  CovariateSet(int num_stations, int num_timepoints, bool intercept = true);

  void add_linear(std::string name, CovariateValues values);
  void add_smooth(SmoothTermSpec spec, CovariateValues values);

  /// Adds the linear dyadic term f_alpha(dist) named `name`; alpha must be positive.
  void add_distance_transform(std::string name, const CovariateValues& dist, double alpha);

  [[nodiscard]] int num_stations() const { return num_stations_; }
  [[nodiscard]] int num_timepoints() const { return num_timepoints_; }
  [[nodiscard]] bool intercept() const { return intercept_; }
  [[nodiscard]] const std::vector<LinearTerm>& linear() const { return linear_; }
  [[nodiscard]] const std::vector<SmoothTerm>& smooth() const { return smooth_; }
  [[nodiscard]] bool has_dyadic() const;

 private:
  void check_shape(const std::string& name, const CovariateValues& values) const;

  int num_stations_;
  int num_timepoints_;
  bool intercept_;
  std::vector<LinearTerm> linear_;
  std::vector<SmoothTerm> smooth_;
};

}  // namespace latentflow
