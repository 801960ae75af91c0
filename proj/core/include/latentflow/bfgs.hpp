#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace latentflow {

struct BfgsOptions {
  double grad_tol = 1e-6;  // stop when max |gradient| falls below this
  int max_iter = 500;
  double c1 = 1e-4;        // sufficient increase
  double c2 = 0.9;         // curvature
  int max_line_search = 60;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  double grad_norm = 0.0;  // max-norm
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool line_search_failed = false;
};

/// Objective returning f(x) and writing its gradient. A non-finite value
/// (typically -inf) marks x as infeasible and makes the line search step back.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Maximizes f with a dense inverse-Hessian BFGS update and a strong Wolfe
/// line search. Returns the best iterate seen; x0 must give a finite value.
BfgsResult bfgs_maximize(const Objective& f, const Eigen::VectorXd& x0,
                         const BfgsOptions& opts = {});

}  // namespace latentflow
