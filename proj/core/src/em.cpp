#include "latentflow/em.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "latentflow/errors.hpp"

namespace latentflow {

void EmConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("EM: epsilon must be positive");
  if (max_outer < 1) throw ConfigError("EM: max_outer must be at least 1");
  if (inner.max_iter < 0 || !(inner.grad_tol > 0.0)) {
    throw ConfigError("EM: inner optimizer needs grad_tol > 0 and max_iter >= 0");
  }
  if (!(inner.c1 > 0.0 && inner.c1 < inner.c2 && inner.c2 < 1.0)) {
    throw ConfigError("EM: Wolfe constants need 0 < c1 < c2 < 1");
  }
  if (!(lambda_min > 0.0) || !(lambda_max >= lambda_min)) {
    throw ConfigError("EM: lambda bounds need 0 < lambda_min <= lambda_max");
  }
}

BfgsResult maximize_inner(const PenalizedModel& model, const Eigen::VectorXd& theta0,
                          const VarianceComponents& vc, const BfgsOptions& opts) {
  vc.validate(model.layout().num_smooth());
  const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const double v = model.penalized_loglik_score(x, vc, grad);
    if (std::isnan(v) || (std::isfinite(v) && !grad.allFinite())) {
      throw NumericalError("penalized log-likelihood is NaN: " + model.locate_nonfinite(x));
    }
    return v;
  };
  Eigen::VectorXd g;
  if (!std::isfinite(model.penalized_loglik_score(theta0, vc, g))) {
    throw NumericalError("penalized log-likelihood is not finite at the starting point: " +
                         model.locate_nonfinite(theta0));
  }
  return bfgs_maximize(objective, theta0, opts);
}

Eigen::Matrix2d update_sigma(const ParamLayout& layout, const Eigen::VectorXd& theta,
                             const Eigen::MatrixXd& covariance, const std::vector<int>& units) {
  if (units.empty()) throw ConfigError("Sigma update needs at least one unit");
  Eigen::Matrix2d total = Eigen::Matrix2d::Zero();
  for (int unit : units) {
    const int k = layout.u_out(unit);
    const Eigen::Vector2d u(theta(k), theta(k + 1));
    total += covariance.block<2, 2>(k, k) + u * u.transpose();
  }
  total /= static_cast<double>(units.size());
  return 0.5 * (total + total.transpose());
}

Eigen::Matrix2d update_sigma(const ParamLayout& layout, const Eigen::VectorXd& theta,
                             const Eigen::MatrixXd& covariance) {
  std::vector<int> units(static_cast<std::size_t>(layout.num_units()));
  std::iota(units.begin(), units.end(), 0);
  return update_sigma(layout, theta, covariance, units);
}

Eigen::VectorXd update_lambda(const ParamLayout& layout, const Eigen::VectorXd& theta,
                              const Eigen::MatrixXd& covariance, const Eigen::VectorXd& lambda,
                              double lambda_min, double lambda_max,
                              std::vector<std::string>* warnings) {
  const int num_smooth = layout.num_smooth();
  if (lambda.size() != num_smooth) throw ConfigError("lambda has wrong length");
  auto warn = [&](const std::string& msg) {
    if (warnings != nullptr) warnings->push_back(msg);
  };
  Eigen::VectorXd out(num_smooth);
  for (int m = 0; m < num_smooth; ++m) {
    const auto& block = layout.smooth_blocks()[static_cast<std::size_t>(m)];
    const auto gamma = theta.segment(block.offset, block.size);
    const double quad = gamma.dot(block.penalty * gamma);
    if (!(quad > 0.0)) {
      warn("smooth '" + block.name + "': coefficients in the penalty null space; lambda set to maximum");
      out(m) = lambda_max;
      continue;
    }
    // S_lambda is block diagonal, so tr(S_lambda^- S_m) = rank(K_m) / lambda_m.
    const double trace_v =
        (covariance.block(block.offset, block.offset, block.size, block.size) * block.penalty)
            .trace();
    const double numerator = block.rank / lambda(m) - trace_v;
    double next = numerator / quad * lambda(m);
    if (!(next >= lambda_min)) {
      std::ostringstream os;
      os << "smooth '" << block.name << "': lambda update " << next << " clamped to " << lambda_min;
      warn(os.str());
      next = lambda_min;
    } else if (next > lambda_max) {
      std::ostringstream os;
      os << "smooth '" << block.name << "': lambda update " << next << " clamped to " << lambda_max;
      warn(os.str());
      next = lambda_max;
    }
    out(m) = next;
  }
  return out;
}

double em_objective(const ParamLayout& layout, double penalized_loglik,
                    const VarianceComponents& vc) {
  double value = penalized_loglik - 0.5 * layout.num_units() * std::log(vc.sigma.determinant());
  for (int m = 0; m < layout.num_smooth(); ++m) {
    value += 0.5 * layout.smooth_blocks()[static_cast<std::size_t>(m)].rank * std::log(vc.lambda(m));
  }
  return value;
}

FitResult fit(const PenalizedModel& model, const EmConfig& cfg) {
  cfg.validate();
  const auto& layout = model.layout();
  FitResult res;
  res.vc = VarianceComponents::initial(layout.num_smooth());
  Eigen::VectorXd theta = model.initial_params();

  double previous = -std::numeric_limits<double>::infinity();
  int violations = 0;
  FisherInverse inverse;
  for (int iter = 1; iter <= cfg.max_outer; ++iter) {
    const BfgsResult inner = maximize_inner(model, theta, res.vc, cfg.inner);
    theta = inner.x;
    if (inner.line_search_failed) {
      res.warnings.push_back("outer iteration " + std::to_string(iter) +
                             ": line search failed; continuing from the best iterate");
    }
    const double lp = inner.value;
    inverse = invert_fisher(model.observed_fisher(theta, res.vc));
    if (inverse.floored > 0) {
      res.warnings.push_back("outer iteration " + std::to_string(iter) + ": " +
                             std::to_string(inverse.floored) +
                             " Fisher eigenvalue(s) floored");
    }

    VarianceComponents next;
    next.sigma = update_sigma(layout, theta, inverse.covariance);
    next.lambda = update_lambda(layout, theta, inverse.covariance, res.vc.lambda, cfg.lambda_min,
                                cfg.lambda_max, &res.warnings);
    const double change = (next.sigma - res.vc.sigma).norm() / res.vc.sigma.norm();

    EmTraceRow row;
    row.iteration = iter;
    row.penalized_loglik = lp;
    row.loglik = model.loglik(theta);
    row.objective = em_objective(layout, lp, res.vc);
    row.sigma_change = change;
    row.sigma = next.sigma;
    row.lambda = next.lambda;
    row.inner_iterations = inner.iterations;
    row.inner_grad_norm = inner.grad_norm;
    row.inner_converged = inner.converged;
    res.trace.push_back(row);

    if (row.objective < previous - cfg.divergence_tol) {
      ++violations;
      std::ostringstream os;
      os << "outer iteration " << iter << ": EM objective decreased from " << previous << " to "
         << row.objective;
      res.warnings.push_back(os.str());
      if (violations >= 2) {
        res.diverged = true;
        break;
      }
    } else {
      violations = 0;
    }
    previous = row.objective;
    res.vc = next;
    if (change < cfg.epsilon) {
      res.converged = true;
      break;
    }
  }

  // Final covariance at the last estimate under the final variance components.
  res.fisher_inverse = invert_fisher(model.observed_fisher(theta, res.vc));
  res.theta = theta;
  res.params = ParamVector::unflatten(layout, theta);
  res.standard_errors = res.fisher_inverse.covariance.diagonal().head(layout.num_fixed()).cwiseSqrt();
  res.penalized_loglik = model.penalized_loglik(theta, res.vc);
  res.loglik = model.loglik(theta);
  return res;
}

void write_trace_csv(std::ostream& os, const std::vector<EmTraceRow>& trace,
                     const std::vector<std::string>& smooth_names) {
  os << "iteration,penalized_loglik,loglik,objective,sigma_change,sigma_out,sigma_cross,sigma_in";
  for (const auto& name : smooth_names) os << ",lambda_" << name;
  os << ",inner_iterations,inner_grad_norm,inner_converged\n";
  const auto old = os.precision(12);
  for (const auto& r : trace) {
    os << r.iteration << ',' << r.penalized_loglik << ',' << r.loglik << ',' << r.objective << ','
       << r.sigma_change
       << ',' << r.sigma(0, 0) << ',' << r.sigma(0, 1) << ',' << r.sigma(1, 1);
    for (Eigen::Index m = 0; m < r.lambda.size(); ++m) os << ',' << r.lambda(m);
    os << ',' << r.inner_iterations << ',' << r.inner_grad_norm << ','
       << (r.inner_converged ? 1 : 0) << '\n';
  }
  os.precision(old);
}

}  // namespace latentflow
