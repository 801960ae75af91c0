#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace latentflow {

enum class SplineKind { open, cyclic };

struct SmoothTermSpec {
  std::string name;
  int num_basis = 10;
  SplineKind kind = SplineKind::open;
  double lo = 0.0;
  double hi = 1.0;

  /// Throws ConfigError unless lo < hi and num_basis >= 4.
  void validate() const;
};

/// Second-order difference penalty D2^T D2 for k coefficients. The cyclic
/// variant wraps indices modulo k.
Eigen::MatrixXd second_difference_penalty(int k, SplineKind kind);

/// Cubic B-spline basis on equidistant knots, centred on the fitting data.
///
/// Open bases extend the knot sequence by three spacings beyond each end of
/// [lo, hi]; cyclic bases use k knots spread over one period hi - lo.
class SmoothTermBasis {
 public:
  SmoothTermBasis(SmoothTermSpec spec, std::span<const double> data);

  [[nodiscard]] const SmoothTermSpec& spec() const { return spec_; }
  [[nodiscard]] int size() const { return spec_.num_basis; }
  [[nodiscard]] const std::vector<double>& knots() const { return knots_; }
  [[nodiscard]] const Eigen::MatrixXd& penalty() const { return penalty_; }
  [[nodiscard]] const Eigen::VectorXd& column_means() const { return column_means_; }
  [[nodiscard]] int penalty_rank() const;

  /// Uncentred B-spline values at x (sums to one).
  [[nodiscard]] Eigen::VectorXd evaluate_raw(double x) const;

  /// evaluate_raw(x) minus the column means of the fitting data.
  [[nodiscard]] Eigen::VectorXd evaluate_row(double x) const;

  /// 0.5 * lambda * gamma^T K gamma.
  [[nodiscard]] double quadratic_penalty(const Eigen::VectorXd& gamma, double lambda) const;

 private:
  SmoothTermSpec spec_;
  double spacing_ = 1.0;
  std::vector<double> knots_;
  Eigen::MatrixXd penalty_;
  Eigen::VectorXd column_means_;
};

}  // namespace latentflow
