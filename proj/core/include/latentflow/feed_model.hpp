#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "latentflow/design.hpp"
#include "latentflow/model.hpp"
#include "latentflow/panel.hpp"

namespace latentflow {

/// dyadic: route intensities summed explicitly, O(N^2) per timepoint.
/// station: margins factorised through log-sum terms, O(N) per timepoint;
/// requires a design without dyadic covariates.
enum class ModelKind { dyadic, station };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// Outgoing and incoming margins at one timepoint, indexed 0..N (N = latent station).
struct IntensitySlice {
  Eigen::VectorXd mu_out;
  Eigen::VectorXd mu_in;
};

/// Route intensities and margins over all timepoints.
struct IntensityField {
  int num_stations = 0;
  std::vector<Eigen::MatrixXd> nu;  // per t: (N+1) x (N+1), latent self-loop entry 0
  Eigen::MatrixXd mu_out;           // (N+1) x T
  Eigen::MatrixXd mu_in;            // (N+1) x T
};

/// Skellam likelihood of the fill differences, one random-effect pair per
/// physical station plus one for the latent station.
///
/// Holds references to the design and panel; both must outlive the model.
class SkellamFeedModel final : public PenalizedModel {
 public:
  SkellamFeedModel(const Design& design, const FeedPanel& panel, ModelKind kind);

  [[nodiscard]] ModelKind kind() const { return kind_; }
  [[nodiscard]] const Design& design() const { return design_; }
  [[nodiscard]] const FeedPanel& panel() const { return panel_; }

  /// Linear predictor of route (i, j) at t; i, j in 0..N with N the latent station.
  [[nodiscard]] double eta(const Eigen::VectorXd& theta, int i, int j, int t) const;
  [[nodiscard]] double nu(const Eigen::VectorXd& theta, int i, int j, int t) const;

  /// (N+1) x (N+1) route intensities at t, zero on the latent self-loop.
  [[nodiscard]] Eigen::MatrixXd route_intensities(const Eigen::VectorXd& theta, int t) const;

  [[nodiscard]] IntensitySlice margins_dyadic(const Eigen::VectorXd& theta, int t) const;
  [[nodiscard]] IntensitySlice margins_station(const Eigen::VectorXd& theta, int t) const;
  [[nodiscard]] IntensitySlice margins(const Eigen::VectorXd& theta, int t) const;

  [[nodiscard]] IntensityField intensities(const Eigen::VectorXd& theta) const;

  [[nodiscard]] double loglik(const Eigen::VectorXd& theta) const override;
  double loglik_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const override;
  [[nodiscard]] Eigen::MatrixXd loglik_hessian(const Eigen::VectorXd& theta) const override;
  [[nodiscard]] Eigen::VectorXd initial_params() const override;
  [[nodiscard]] std::string locate_nonfinite(const Eigen::VectorXd& theta) const override;

 private:
  struct Linear;
  [[nodiscard]] Linear linear_parts(const Eigen::VectorXd& theta) const;
  [[nodiscard]] Eigen::MatrixXd routes(const Linear& lin, int t) const;
  [[nodiscard]] IntensitySlice station_margins(const Linear& lin, int t) const;
  [[nodiscard]] IntensitySlice slice(const Linear& lin, int t) const;

  const Design& design_;
  const FeedPanel& panel_;
  ModelKind kind_;
};

}  // namespace latentflow
