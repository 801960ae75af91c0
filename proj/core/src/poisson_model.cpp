#include "latentflow/poisson_model.hpp"

#include <cmath>
#include <limits>

#include "latentflow/errors.hpp"

namespace latentflow {

PoissonTripModel::PoissonTripModel(const Design& design, const TripTensor& trips)
    : PenalizedModel(ParamLayout(design, design.num_stations())), design_(design), trips_(trips) {
  if (trips.num_stations != design.num_stations() ||
      trips.num_timepoints != design.num_timepoints()) {
    throw DataError("trip model: trips and covariates disagree on stations or timepoints");
  }
}

Eigen::MatrixXd PoissonTripModel::intensities(const Design::Predictors& pred,
                                              const Eigen::VectorXd& theta, int t) const {
  const auto& lay = layout();
  const int n = design_.num_stations();
  Eigen::MatrixXd nu(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      nu(i, j) = std::exp(design_.route_predictor(pred, i, j, t) + theta(lay.u_out(i)) +
                          theta(lay.u_in(j)));
    }
  }
  return nu;
}

double PoissonTripModel::loglik(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd unused;
  return loglik_gradient(theta, unused);
}

double PoissonTripModel::loglik_gradient(const Eigen::VectorXd& theta,
                                         Eigen::VectorXd& grad) const {
  const auto& lay = layout();
  if (theta.size() != lay.dim()) throw ConfigError("parameter vector has wrong length");
  const int n = design_.num_stations();
  const auto pred = design_.predictors(theta.head(lay.num_fixed()));
  grad = Eigen::VectorXd::Zero(lay.dim());
  double total = 0.0;
  Eigen::VectorXd f(lay.num_fixed());
  for (int t = 0; t < design_.num_timepoints(); ++t) {
    const Eigen::MatrixXd nu = intensities(pred, theta, t);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double mu = nu(i, j);
        if (!(mu > 0.0) || !std::isfinite(mu)) {
          return -std::numeric_limits<double>::infinity();
        }
        const int y = trips_.at(i, j, t);
        total += y * std::log(mu) - mu - std::lgamma(y + 1.0);
        const double w = y - mu;
        f.setZero();
        design_.add_route_row(i, j, t, w, f);
        grad.head(lay.num_fixed()) += f;
        grad(lay.u_out(i)) += w;
        grad(lay.u_in(j)) += w;
      }
    }
  }
  return total;
}

Eigen::MatrixXd PoissonTripModel::loglik_hessian(const Eigen::VectorXd& theta) const {
  const auto& lay = layout();
  const int n = design_.num_stations();
  const int q = lay.num_fixed();
  const auto pred = design_.predictors(theta.head(q));
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(lay.dim(), lay.dim());
  Eigen::VectorXd x(lay.dim());
  for (int t = 0; t < design_.num_timepoints(); ++t) {
    const Eigen::MatrixXd nu = intensities(pred, theta, t);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        x.setZero();
        design_.add_route_row(i, j, t, 1.0, x.head(q));
        x(lay.u_out(i)) += 1.0;
        x(lay.u_in(j)) += 1.0;
        hess.selfadjointView<Eigen::Lower>().rankUpdate(x, -nu(i, j));
      }
    }
  }
  hess.triangularView<Eigen::StrictlyUpper>() = hess.transpose();
  return hess;
}

Eigen::VectorXd PoissonTripModel::initial_params() const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout().dim());
  if (design_.intercept_column() >= 0) {
    double total = 0.0;
    for (int y : trips_.counts) total += y;
    const double mean = total / static_cast<double>(std::max<std::size_t>(1, trips_.counts.size()));
    theta(design_.intercept_column()) = std::log(mean + 0.01);
  }
  return theta;
}

std::string PoissonTripModel::locate_nonfinite(const Eigen::VectorXd& theta) const {
  const auto pred = design_.predictors(theta.head(layout().num_fixed()));
  for (int t = 0; t < design_.num_timepoints(); ++t) {
    const Eigen::MatrixXd nu = intensities(pred, theta, t);
    for (int i = 0; i < nu.rows(); ++i) {
      for (int j = 0; j < nu.cols(); ++j) {
        if (!(nu(i, j) > 0.0) || !std::isfinite(nu(i, j))) {
          return "route " + std::to_string(i) + "->" + std::to_string(j) + " at timepoint " +
                 std::to_string(t) + ": intensity " + std::to_string(nu(i, j));
        }
      }
    }
  }
  return "no non-finite cell found";
}

}  // namespace latentflow
