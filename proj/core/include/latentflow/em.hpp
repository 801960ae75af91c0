#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentflow/bfgs.hpp"
#include "latentflow/model.hpp"

namespace latentflow {

struct EmConfig {
  double epsilon = 1e-3;  // relative Frobenius change of Sigma
  int max_outer = 50;
  BfgsOptions inner;
  double lambda_min = 1e-8;
  double lambda_max = 1e8;
  double divergence_tol = 1e-6;
  std::uint64_t seed = 0;  // recorded with the fit; the algorithm itself is deterministic

  /// Throws ConfigError on non-positive epsilon, lambda bounds or iteration limits.
  void validate() const;
};

struct EmTraceRow {
  int iteration = 0;
  double penalized_loglik = 0.0;
  double loglik = 0.0;
  double objective = 0.0;  // see em_objective
  double sigma_change = 0.0;
  Eigen::Matrix2d sigma;  // after the update
  Eigen::VectorXd lambda;  // after the update
  int inner_iterations = 0;
  double inner_grad_norm = 0.0;
  bool inner_converged = false;
};

struct FitResult {
  Eigen::VectorXd theta;
  ParamVector params;
  VarianceComponents vc;
  FisherInverse fisher_inverse;
  Eigen::VectorXd standard_errors;  // per fixed effect
  std::vector<EmTraceRow> trace;
  std::vector<std::string> warnings;
  bool converged = false;
  bool diverged = false;
  double penalized_loglik = 0.0;
  double loglik = 0.0;
};

/// Inner step: BFGS ascent on the penalized log-likelihood with vc fixed.
/// A NaN objective raises NumericalError naming the offending cell.
BfgsResult maximize_inner(const PenalizedModel& model, const Eigen::VectorXd& theta0,
                          const VarianceComponents& vc, const BfgsOptions& opts);

/// (1/|units|) * sum over units of (V_uu + u u^T).
Eigen::Matrix2d update_sigma(const ParamLayout& layout, const Eigen::VectorXd& theta,
                             const Eigen::MatrixXd& covariance, const std::vector<int>& units);

/// update_sigma over every random-effect unit.
Eigen::Matrix2d update_sigma(const ParamLayout& layout, const Eigen::VectorXd& theta,
                             const Eigen::MatrixXd& covariance);

/// Fellner-Schall update of every smoothing parameter, clamped to
/// [lambda_min, lambda_max]. Clamping events are appended to warnings.
Eigen::VectorXd update_lambda(const ParamLayout& layout, const Eigen::VectorXd& theta,
                              const Eigen::MatrixXd& covariance, const Eigen::VectorXd& lambda,
                              double lambda_min, double lambda_max,
                              std::vector<std::string>* warnings = nullptr);

/// l_P plus the log normalizing constants of the Gaussian priors on the
/// random effects and spline coefficients:
/// l_P - (U/2) log|Sigma| + sum_m (rank_m/2) log lambda_m.
/// Unlike l_P alone this does not drift when Sigma shrinks, so the
/// divergence check in fit() monitors it.
double em_objective(const ParamLayout& layout, double penalized_loglik,
                    const VarianceComponents& vc);

/// Approximate EM: alternate maximize_inner with the Sigma and lambda updates
/// until the relative Sigma change drops below epsilon or max_outer is reached.
/// Two consecutive decreases of em_objective by more than divergence_tol
/// stop the loop with diverged = true.
FitResult fit(const PenalizedModel& model, const EmConfig& cfg);

/// CSV rows: iteration, l_P, loglik, objective, sigma change, Sigma entries, lambda values, inner stats.
void write_trace_csv(std::ostream& os, const std::vector<EmTraceRow>& trace,
                     const std::vector<std::string>& smooth_names);

}  // namespace latentflow
