#pragma once

#include <string>

#include <Eigen/Dense>

#include "latentflow/design.hpp"
#include "latentflow/model.hpp"
#include "latentflow/trips.hpp"

namespace latentflow {

/// Log-linear Poisson model for fully observed trip counts,
/// Y_ij,t ~ Poi(exp(eta_ij,t + u_i^out + u_j^in)), with one random-effect
/// pair per physical station. Serves as the benchmark for the feed model.
class PoissonTripModel final : public PenalizedModel {
 public:
  PoissonTripModel(const Design& design, const TripTensor& trips);

  [[nodiscard]] const Design& design() const { return design_; }

  [[nodiscard]] double loglik(const Eigen::VectorXd& theta) const override;
  double loglik_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const override;
  [[nodiscard]] Eigen::MatrixXd loglik_hessian(const Eigen::VectorXd& theta) const override;
  [[nodiscard]] Eigen::VectorXd initial_params() const override;
  [[nodiscard]] std::string locate_nonfinite(const Eigen::VectorXd& theta) const override;

 private:
  [[nodiscard]] Eigen::MatrixXd intensities(const Design::Predictors& pred,
                                            const Eigen::VectorXd& theta, int t) const;

  const Design& design_;
  const TripTensor& trips_;
};

}  // namespace latentflow
