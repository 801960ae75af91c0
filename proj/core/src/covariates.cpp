#include "latentflow/covariates.hpp"

#include <cmath>

#include "latentflow/errors.hpp"

namespace latentflow {

std::string_view to_string(Scope scope) {
  switch (scope) {
    case Scope::time: return "time";
    case Scope::station_out: return "station_out";
    case Scope::station_in: return "station_in";
    case Scope::dyadic: return "dyadic";
  }
  return "time";
}

Scope parse_scope(std::string_view text) {
  if (text == "time") return Scope::time;
  if (text == "station_out") return Scope::station_out;
  if (text == "station_in") return Scope::station_in;
  if (text == "dyadic") return Scope::dyadic;
  throw ConfigError("unknown covariate scope '" + std::string(text) + "'");
}

CovariateValues::CovariateValues(Scope scope, int num_stations, int num_timepoints,
                                 bool time_varying, std::vector<double> values)
    : scope_(scope),
      num_stations_(num_stations),
      num_timepoints_(num_timepoints),
      time_varying_(time_varying),
      values_(std::move(values)) {
  std::size_t expected = time_varying ? static_cast<std::size_t>(num_timepoints) : 1;
  if (scope == Scope::time) {
    time_varying_ = true;
    expected = static_cast<std::size_t>(num_timepoints);
  } else if (scope == Scope::dyadic) {
    expected *= static_cast<std::size_t>(num_stations) * static_cast<std::size_t>(num_stations);
  } else {
    expected *= static_cast<std::size_t>(num_stations);
  }
  if (values_.size() != expected) {
    throw DataError("covariate values: expected " + std::to_string(expected) + " entries for scope " +
                    std::string(to_string(scope)) + ", got " + std::to_string(values_.size()));
  }
}

CovariateValues CovariateValues::time(std::vector<double> per_t) {
  const int t_len = static_cast<int>(per_t.size());
  return {Scope::time, 0, t_len, true, std::move(per_t)};
}

CovariateValues CovariateValues::station(Scope scope, int num_stations, int num_timepoints,
                                         std::vector<double> values) {
  if (scope != Scope::station_out && scope != Scope::station_in) {
    throw ConfigError("station covariate needs a station_out or station_in scope");
  }
  const bool varying = values.size() != static_cast<std::size_t>(num_stations);
  return {scope, num_stations, num_timepoints, varying, std::move(values)};
}

CovariateValues CovariateValues::dyadic(int num_stations, int num_timepoints,
                                        std::vector<double> values) {
  const bool varying =
      values.size() != static_cast<std::size_t>(num_stations) * static_cast<std::size_t>(num_stations);
  return {Scope::dyadic, num_stations, num_timepoints, varying, std::move(values)};
}

double CovariateValues::at(int i, int j, int t) const {
  const auto tt = static_cast<std::size_t>(t);
  const auto t_len = static_cast<std::size_t>(num_timepoints_);
  const auto n = static_cast<std::size_t>(num_stations_);
  switch (scope_) {
    case Scope::time:
      return values_[tt];
    case Scope::station_out:
      return time_varying_ ? values_[static_cast<std::size_t>(i) * t_len + tt]
                           : values_[static_cast<std::size_t>(i)];
    case Scope::station_in:
      return time_varying_ ? values_[static_cast<std::size_t>(j) * t_len + tt]
                           : values_[static_cast<std::size_t>(j)];
    case Scope::dyadic: {
      const std::size_t pair = static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j);
      return time_varying_ ? values_[pair * t_len + tt] : values_[pair];
    }
  }
  return 0.0;
}

CovariateValues CovariateValues::with_scope(Scope scope) const {
  const bool station_family = [](Scope s) {
    return s == Scope::station_out || s == Scope::station_in;
  }(scope);
  const bool same_family =
      scope == scope_ || (station_family && (scope_ == Scope::station_out || scope_ == Scope::station_in));
  if (!same_family) {
    throw ConfigError("covariate values cannot change scope from " + std::string(to_string(scope_)) +
                      " to " + std::string(to_string(scope)));
  }
  CovariateValues copy = *this;
  copy.scope_ = scope;
  return copy;
}

double distance_transform(double dist, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("distance transform requires alpha > 0");
  if (dist < 0.0) throw DataError("distance transform requires non-negative distances");
  return std::pow(dist, alpha) * std::exp(-dist);
}

CovariateSet::CovariateSet(int num_stations, int num_timepoints, bool intercept)
    : num_stations_(num_stations), num_timepoints_(num_timepoints), intercept_(intercept) {
  if (num_stations <= 0 || num_timepoints <= 0) {
    throw ConfigError("covariate set needs at least one station and one timepoint");
  }
}

void CovariateSet::check_shape(const std::string& name, const CovariateValues& values) const {
  if (values.num_timepoints() != num_timepoints_ ||
      (values.scope() != Scope::time && values.num_stations() != num_stations_)) {
    throw DataError("covariate '" + name + "' does not match the panel dimensions");
  }
  for (double v : values.values()) {
    if (!std::isfinite(v)) throw DataError("covariate '" + name + "' has non-finite values");
  }
}

void CovariateSet::add_linear(std::string name, CovariateValues values) {
  check_shape(name, values);
  linear_.push_back({std::move(name), std::move(values)});
}

void CovariateSet::add_smooth(SmoothTermSpec spec, CovariateValues values) {
  check_shape(spec.name, values);
  spec.validate();
  smooth_.push_back({std::move(spec), std::move(values)});
}

void CovariateSet::add_distance_transform(std::string name, const CovariateValues& dist,
                                          double alpha) {
  if (dist.scope() != Scope::dyadic) {
    throw ConfigError("distance transform '" + name + "' needs a dyadic covariate");
  }
  std::vector<double> transformed(dist.values().begin(), dist.values().end());
  for (double& v : transformed) v = distance_transform(v, alpha);
  add_linear(std::move(name), CovariateValues(Scope::dyadic, dist.num_stations(),
                                              dist.num_timepoints(), dist.time_varying(),
                                              std::move(transformed)));
}

bool CovariateSet::has_dyadic() const {
  for (const auto& term : linear_) {
    if (term.values.scope() == Scope::dyadic) return true;
  }
  for (const auto& term : smooth_) {
    if (term.values.scope() == Scope::dyadic) return true;
  }
  return false;
}

}  // namespace latentflow
