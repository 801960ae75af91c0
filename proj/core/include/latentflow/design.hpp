#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentflow/covariates.hpp"
#include "latentflow/spline.hpp"

namespace latentflow {

/// Rows of the fixed-effect design restricted to the columns one scope touches.
struct ScopeBlock {
  std::vector<int> columns;  // positions in the fixed-effect vector
  Eigen::MatrixXd rows;      // one row per (unit[, t])
  int units = 1;             // 1 (time), N (station) or N*N (dyadic)
  bool time_varying = true;

  [[nodiscard]] bool empty() const { return columns.empty(); }
  [[nodiscard]] Eigen::Index row(int unit, int t) const {
    return time_varying ? static_cast<Eigen::Index>(t) * units + unit : unit;
  }
};

/// Coefficient range of one penalized smooth term within the fixed effects.
struct SmoothBlock {
  std::string name;
  int offset = 0;
  int size = 0;
  int rank = 0;
  Eigen::MatrixXd penalty;
};

/// Covariates compiled into per-scope design blocks.
///
/// Fixed effects are ordered: intercept (if any), linear terms in insertion
/// order, then each smooth term's basis coefficients.
class Design {
 public:
  explicit Design(const CovariateSet& covariates);

  [[nodiscard]] int num_stations() const { return num_stations_; }
  [[nodiscard]] int num_timepoints() const { return num_timepoints_; }
  [[nodiscard]] int num_fixed() const { return static_cast<int>(names_.size()); }
  [[nodiscard]] int num_linear() const { return num_linear_; }
  [[nodiscard]] const std::vector<std::string>& fixed_names() const { return names_; }
  [[nodiscard]] const std::vector<Scope>& linear_scopes() const { return linear_scopes_; }
  [[nodiscard]] int intercept_column() const { return intercept_column_; }
  [[nodiscard]] bool has_dyadic() const { return !dyadic_.empty(); }

  [[nodiscard]] const ScopeBlock& time_block() const { return time_; }
  [[nodiscard]] const ScopeBlock& out_block() const { return out_; }
  [[nodiscard]] const ScopeBlock& in_block() const { return in_; }
  [[nodiscard]] const ScopeBlock& dyadic_block() const { return dyadic_; }

  [[nodiscard]] const std::vector<SmoothTermBasis>& bases() const { return bases_; }
  [[nodiscard]] const std::vector<SmoothBlock>& smooth_blocks() const { return smooth_; }
  [[nodiscard]] const std::vector<Scope>& smooth_scopes() const { return smooth_scopes_; }

  /// Per-scope linear predictor pieces for a given fixed-effect vector.
  struct Predictors {
    Eigen::VectorXd time;    // T
    Eigen::VectorXd out;     // N*T
    Eigen::VectorXd in;      // N*T
    Eigen::VectorXd dyadic;  // N*N*T or N*N
  };
  [[nodiscard]] Predictors predictors(const Eigen::Ref<const Eigen::VectorXd>& fixed) const;

  /// Fixed part of the predictor for route (a, b) at t; a, b == N denotes the
  /// latent station, which receives only the time contribution.
  [[nodiscard]] double route_predictor(const Predictors& p, int a, int b, int t) const;

  /// Adds weight * (design row of route (a, b) at t) into out (length num_fixed()).
  void add_route_row(int a, int b, int t, double weight, Eigen::Ref<Eigen::VectorXd> out) const;

 private:
  int num_stations_;
  int num_timepoints_;
  int num_linear_ = 0;
  int intercept_column_ = -1;
  std::vector<std::string> names_;
  std::vector<Scope> linear_scopes_;
  ScopeBlock time_;
  ScopeBlock out_;
  ScopeBlock in_;
  ScopeBlock dyadic_;
  std::vector<SmoothTermBasis> bases_;
  std::vector<SmoothBlock> smooth_;
  std::vector<Scope> smooth_scopes_;
};

}  // namespace latentflow
