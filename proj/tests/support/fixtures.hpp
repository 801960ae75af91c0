#pragma once

// Small random model instances shared by the unit and acceptance tests.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "latentflow/covariates.hpp"
#include "latentflow/design.hpp"
#include "latentflow/feed_model.hpp"
#include "latentflow/panel.hpp"

namespace fixture {

struct Options {
  int stations = 3;
  int timepoints = 10;
  bool dyadic = false;
  bool smooth = false;
  bool station_covariates = true;
  bool missing = false;
};

struct Instance {
  std::unique_ptr<latentflow::CovariateSet> covariates;
  std::unique_ptr<latentflow::Design> design;
  latentflow::FeedPanel panel;
};

inline std::vector<std::string> station_names(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i + 1));
  return ids;
}

inline std::vector<std::string> time_names(int t_len) {
  std::vector<std::string> labels;
  for (int t = 0; t < t_len; ++t) labels.push_back("t" + std::to_string(t));
  return labels;
}

inline Instance make_instance(const Options& opt, unsigned seed) {
  using namespace latentflow;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = opt.stations;
  const int t_len = opt.timepoints;

  Instance inst;
  inst.covariates = std::make_unique<CovariateSet>(n, t_len);
  std::vector<double> zt(static_cast<std::size_t>(t_len));
  for (auto& v : zt) v = z(rng);
  inst.covariates->add_linear("z_time", CovariateValues::time(zt));
  if (opt.station_covariates) {
    std::vector<double> so(static_cast<std::size_t>(n * t_len));
    for (auto& v : so) v = z(rng);
    inst.covariates->add_linear("z_out", CovariateValues::station(Scope::station_out, n, t_len, so));
    std::vector<double> si(static_cast<std::size_t>(n));
    for (auto& v : si) v = z(rng);
    inst.covariates->add_linear("z_in", CovariateValues::station(Scope::station_in, n, t_len, si));
  }
  if (opt.dyadic) {
    std::vector<double> dist(static_cast<std::size_t>(n * n));
    for (auto& v : dist) v = 3.0 * unit(rng);
    inst.covariates->add_distance_transform("f_dist", CovariateValues::dyadic(n, t_len, dist), 1.7);
    std::vector<double> dz(static_cast<std::size_t>(n * n * t_len));
    for (auto& v : dz) v = z(rng);
    inst.covariates->add_linear("z_pair", CovariateValues::dyadic(n, t_len, dz));
  }
  if (opt.smooth) {
    std::vector<double> temp(static_cast<std::size_t>(t_len));
    for (auto& v : temp) v = unit(rng);
    inst.covariates->add_smooth({"temp", 6, SplineKind::open, 0.0, 1.0},
                                CovariateValues::time(temp));
    std::vector<double> season(static_cast<std::size_t>(t_len));
    for (auto& v : season) v = unit(rng);
    inst.covariates->add_smooth({"seas", 5, SplineKind::cyclic, 0.0, 1.0},
                                CovariateValues::time(season));
  }
  inst.design = std::make_unique<Design>(*inst.covariates);

  std::poisson_distribution<int> pois(2.0);
  std::vector<int> diffs(static_cast<std::size_t>(n * t_len));
  for (auto& d : diffs) d = pois(rng) - pois(rng);
  std::vector<bool> observed;
  if (opt.missing) {
    observed.assign(diffs.size(), true);
    observed[1] = false;
    observed[diffs.size() - 2] = false;
  }
  inst.panel = FeedPanel::from_differences(station_names(n), time_names(t_len), diffs, observed);
  return inst;
}

inline Eigen::VectorXd random_theta(int dim, unsigned seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  Eigen::VectorXd theta(dim);
  for (Eigen::Index i = 0; i < dim; ++i) theta(i) = z(rng);
  return theta;
}

}  // namespace fixture
