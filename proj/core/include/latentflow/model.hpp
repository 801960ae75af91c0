#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentflow/design.hpp"

namespace latentflow {

/// Flattening order of the parameter vector: fixed effects (linear
/// coefficients, then each smooth block), then one (u_out, u_in) pair per
/// random-effect unit. For the feed model the last unit is the latent station.
class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(const Design& design, int num_units);

  [[nodiscard]] int dim() const { return num_fixed_ + 2 * num_units_; }
  [[nodiscard]] int num_fixed() const { return num_fixed_; }
  [[nodiscard]] int num_linear() const { return num_linear_; }
  [[nodiscard]] int num_units() const { return num_units_; }
  [[nodiscard]] int num_smooth() const { return static_cast<int>(smooth_.size()); }
  [[nodiscard]] const std::vector<SmoothBlock>& smooth_blocks() const { return smooth_; }
  [[nodiscard]] const std::vector<std::string>& fixed_names() const { return names_; }
  [[nodiscard]] int u_out(int unit) const { return num_fixed_ + 2 * unit; }
  [[nodiscard]] int u_in(int unit) const { return num_fixed_ + 2 * unit + 1; }

 private:
  int num_fixed_ = 0;
  int num_linear_ = 0;
  int num_units_ = 0;
  std::vector<SmoothBlock> smooth_;
  std::vector<std::string> names_;
};

/// Structured view of a flat parameter vector.
struct ParamVector {
  Eigen::VectorXd beta;
  std::vector<Eigen::VectorXd> gamma;
  std::vector<Eigen::Vector2d> u;  // (u_out, u_in) per unit

  static ParamVector unflatten(const ParamLayout& layout, const Eigen::VectorXd& theta);
  [[nodiscard]] Eigen::VectorXd flatten(const ParamLayout& layout) const;
};

/// Random-effect covariance and smoothing parameters.
struct VarianceComponents {
  Eigen::Matrix2d sigma = 0.5 * Eigen::Matrix2d::Identity();
  Eigen::VectorXd lambda;

  static VarianceComponents initial(int num_smooth);
  /// Throws ConfigError unless sigma is symmetric positive definite and all lambda > 0.
  void validate(int num_smooth) const;
};

/// A log-likelihood over the flattened parameter vector together with the
/// smoothing and random-effect penalties shared by every model in the library.
class PenalizedModel {
 public:
  explicit PenalizedModel(ParamLayout layout) : layout_(std::move(layout)) {}
  virtual ~PenalizedModel() = default;

  PenalizedModel(const PenalizedModel&) = delete;
  PenalizedModel& operator=(const PenalizedModel&) = delete;

  [[nodiscard]] const ParamLayout& layout() const { return layout_; }

  /// Unpenalized log-likelihood.
  [[nodiscard]] virtual double loglik(const Eigen::VectorXd& theta) const = 0;
  /// Unpenalized log-likelihood; writes its gradient into grad.
  virtual double loglik_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const = 0;
  /// Second derivative matrix of the unpenalized log-likelihood.
  [[nodiscard]] virtual Eigen::MatrixXd loglik_hessian(const Eigen::VectorXd& theta) const = 0;
  /// Starting point for the inner maximization.
  [[nodiscard]] virtual Eigen::VectorXd initial_params() const = 0;
  /// Human-readable location of the first cell whose contribution is not finite.
  [[nodiscard]] virtual std::string locate_nonfinite(const Eigen::VectorXd& theta) const = 0;

  /// 0.5 * sum_m lambda_m g_m^T K_m g_m + 0.5 * sum_i u_i^T Sigma^-1 u_i.
  [[nodiscard]] double penalty(const Eigen::VectorXd& theta, const VarianceComponents& vc) const;
  [[nodiscard]] double penalized_loglik(const Eigen::VectorXd& theta,
                                        const VarianceComponents& vc) const;
  double penalized_loglik_score(const Eigen::VectorXd& theta, const VarianceComponents& vc,
                                Eigen::VectorXd& score) const;
  [[nodiscard]] Eigen::VectorXd penalized_score(const Eigen::VectorXd& theta,
                                                const VarianceComponents& vc) const;
  /// Negative Hessian of the penalized log-likelihood, exactly symmetric.
  [[nodiscard]] Eigen::MatrixXd observed_fisher(const Eigen::VectorXd& theta,
                                                const VarianceComponents& vc) const;

 private:
  ParamLayout layout_;
};

/// Inverse of the observed Fisher matrix after eigenvalue flooring.
struct FisherInverse {
  Eigen::MatrixXd covariance;
  int floored = 0;  // number of eigenvalues raised to the floor
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;

  [[nodiscard]] Eigen::Matrix2d unit_block(const ParamLayout& layout, int unit) const;
  [[nodiscard]] Eigen::MatrixXd smooth_block(const ParamLayout& layout, int m) const;
};

/// Symmetric eigendecomposition with eigenvalues below floor_ratio * max
/// raised to that floor. Throws NumericalError (quoting the eigenvalue)
/// when the largest eigenvalue is not positive.
FisherInverse invert_fisher(const Eigen::MatrixXd& fisher, double floor_ratio = 1e-8);

}  // namespace latentflow
