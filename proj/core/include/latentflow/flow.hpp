#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentflow/feed_model.hpp"
#include "latentflow/trips.hpp"

namespace latentflow {

/// Origin-destination flow estimates over physical stations.
struct FlowEstimate {
  int num_stations = 0;
  int num_timepoints = 0;
  std::vector<double> mu_hat;  // TripTensor layout
  std::vector<double> pi_hat;  // TripTensor layout
  Eigen::MatrixXd route_sum;   // N x T: sum_j nu_ij over physical j
  Eigen::MatrixXd latent_out;  // N x T: nu_iw
  Eigen::MatrixXd model_mu_out;  // (N+1) x T Skellam margins
  Eigen::MatrixXd model_mu_in;

  [[nodiscard]] std::size_t index(int i, int j, int t) const {
    const auto n = static_cast<std::size_t>(num_stations);
    return (static_cast<std::size_t>(t) * n + static_cast<std::size_t>(i)) * n +
           static_cast<std::size_t>(j);
  }
  [[nodiscard]] double mu(int i, int j, int t) const { return mu_hat[index(i, j, t)]; }
  [[nodiscard]] double pi(int i, int j, int t) const { return pi_hat[index(i, j, t)]; }
  [[nodiscard]] double out_degree(int i, int t) const;
  [[nodiscard]] double in_degree(int i, int t) const;
};

/// Allocates each station's interval-exceeding departures nu_iw to physical
/// destinations in proportion to nu_ij. Arrivals from the latent station are
/// not reallocated.
FlowEstimate reconstruct(const IntensityField& field);

struct ConservationCheck {
  double max_mass_error = 0.0;  // |sum_j mu_ij - (sum_j nu_ij + nu_iw)| / max(1, rhs)
  double max_pi_error = 0.0;    // |sum_j pi_ij - 1|
};
ConservationCheck check_conservation(const IntensityField& field, const FlowEstimate& flow);

/// Cells with an estimate below this are left out of station-mean relative errors.
inline constexpr double kTinyIntensity = 1e-8;

struct EvalReport {
  int num_stations = 0;
  int num_timepoints = 0;
  Eigen::MatrixXd out_degree;   // N x T estimates
  Eigen::MatrixXd in_degree;
  Eigen::VectorXd cumulated_out;  // N
  Eigen::VectorXd cumulated_in;
  Eigen::MatrixXd diff_hat;     // (N+1) x T: mu_in - mu_out of the Skellam margins
  Eigen::VectorXd prob_zero;    // T
  Eigen::VectorXd prob_one;
  Eigen::VectorXd prob_two_plus;

  bool has_truth = false;
  Eigen::VectorXd delta_t_out;  // T
  Eigen::VectorXd delta_t_in;
  Eigen::VectorXd delta_station_out;  // N, mean over timepoints
  Eigen::VectorXd delta_station_in;
  int excluded_cells = 0;
  Eigen::MatrixXd observed_out;  // N x T
  Eigen::MatrixXd observed_in;
  Eigen::VectorXd observed_cumulated_out;
  Eigen::VectorXd observed_cumulated_in;
  Eigen::VectorXd observed_zero;  // share of cells with 0, 1, >= 2 trips
  Eigen::VectorXd observed_one;
  Eigen::VectorXd observed_two_plus;

  [[nodiscard]] double mean_delta_t_out() const;
  [[nodiscard]] double mean_delta_t_in() const;
};

/// Metrics of a flow estimate, optionally against observed trip counts.
/// Relative errors use the estimate as denominator.
EvalReport evaluate(const FlowEstimate& flow, const TripTensor* truth = nullptr);

/// Writes network_errors.csv, station_errors.csv, cumulated_degrees.csv,
/// differences.csv and count_probabilities.csv into dir.
void write_eval_csv(const std::filesystem::path& dir, const EvalReport& report,
                    const std::vector<std::string>& station_ids,
                    const std::vector<std::string>& time_labels);

/// origin,destination,timestamp,mu_hat,pi_hat in (origin, destination, timestamp) order.
void write_flows_csv(const std::filesystem::path& file, const FlowEstimate& flow,
                     const std::vector<std::string>& station_ids,
                     const std::vector<std::string>& time_labels);

}  // namespace latentflow
