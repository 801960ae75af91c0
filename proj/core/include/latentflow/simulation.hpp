#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentflow/covariates.hpp"
#include "latentflow/em.hpp"
#include "latentflow/feed_model.hpp"
#include "latentflow/panel.hpp"
#include "latentflow/trips.hpp"

namespace latentflow {

struct SimConfig {
  std::string name = "reference";
  int num_stations = 20;
  int num_timepoints = 100;
  int replications = 20;
  Eigen::Vector3d beta{-5.0, 1.0, -1.0};  // intercept, time covariate z1, dyadic covariate z2
  Eigen::Matrix2d sigma = (Eigen::Matrix2d() << 1.0, 0.9, 0.9, 1.0).finished();
  double carryover_prob = 1.0 / 3.0;
  double prev_scale = 0.9;
  std::uint64_t seed = 1;

  /// The reference scenario; desk scale (S = 20, T = 100) unless full_scale (S = 250, T = 500).
  static SimConfig reference(bool full_scale = false);

  /// Throws ConfigError on invalid sizes, probabilities or a non-PD sigma.
  void validate() const;
};

/// One synthetic network with its generating quantities.
struct SimReplication {
  int index = 0;
  Eigen::MatrixXd u;                 // N x 2: (u_out, u_in)
  std::vector<double> z_time;        // T
  std::vector<double> z_pair;        // N x N, symmetric
  std::vector<double> mu;            // trip intensities, TripTensor layout
  TripTensor trips;                  // Y: departures in hour t
  TripTensor previous;               // Y*: departures in hour t-1
  TripTensor completed;              // part of Y arriving within hour t
  TripTensor carried;                // part of Y* arriving within hour t
  FeedPanel panel;
  std::unique_ptr<CovariateSet> covariates;  // intercept, z1 (time), z2 (dyadic)

  [[nodiscard]] double mu_at(int i, int j, int t) const { return mu[trips.index(i, j, t)]; }

  /// E[D_i,t] implied by the generating process; i == N is the latent station.
  [[nodiscard]] double expected_difference(const SimConfig& cfg, int i, int t) const;
};

/// Draws replication `index`. Each replication has its own RNG stream
/// seeded from (cfg.seed, index).
///
/// Bookkeeping: D_i,t = (completed arrivals at i) + (carried-over arrivals at i)
/// - (all departures from i); the latent row follows by conservation.
SimReplication generate(const SimConfig& cfg, int index);

struct StudyRow {
  int replication = 0;
  std::string parameter;
  double estimate = 0.0;
  double truth = 0.0;
  double standard_error = 0.0;  // NaN for variance components
};

struct StudyResult {
  std::vector<StudyRow> rows;
  int fits = 0;
  int converged = 0;
  int failed = 0;
  std::vector<std::string> messages;

  [[nodiscard]] std::vector<double> estimates(const std::string& parameter) const;
};

/// Fits every replication with the Skellam feed model and tabulates the
/// fixed effects and the Sigma estimate over physical stations (latent
/// station excluded). progress, if set, is called after each replication.
StudyResult run_study(const SimConfig& cfg, ModelKind kind, const EmConfig& em,
                      const std::function<void(int, const FitResult*)>& progress = {});

/// Columns: scenario, replication, parameter, estimate, truth, std_error.
void write_study_csv(std::ostream& os, const std::string& scenario, const StudyResult& result);

}  // namespace latentflow
