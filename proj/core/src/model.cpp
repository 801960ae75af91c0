#include "latentflow/model.hpp"

#include <cmath>
#include <sstream>

#include "latentflow/errors.hpp"

namespace latentflow {

ParamLayout::ParamLayout(const Design& design, int num_units)
    : num_fixed_(design.num_fixed()),
      num_linear_(design.num_linear()),
      num_units_(num_units),
      smooth_(design.smooth_blocks()),
      names_(design.fixed_names()) {}

ParamVector ParamVector::unflatten(const ParamLayout& layout, const Eigen::VectorXd& theta) {
  if (theta.size() != layout.dim()) throw ConfigError("parameter vector has wrong length");
  ParamVector p;
  p.beta = theta.head(layout.num_linear());
  for (const auto& block : layout.smooth_blocks()) {
    p.gamma.emplace_back(theta.segment(block.offset, block.size));
  }
  for (int unit = 0; unit < layout.num_units(); ++unit) {
    p.u.emplace_back(theta(layout.u_out(unit)), theta(layout.u_in(unit)));
  }
  return p;
}

Eigen::VectorXd ParamVector::flatten(const ParamLayout& layout) const {
  if (beta.size() != layout.num_linear() ||
      gamma.size() != static_cast<std::size_t>(layout.num_smooth()) ||
      u.size() != static_cast<std::size_t>(layout.num_units())) {
    throw ConfigError("parameter blocks do not match the layout");
  }
  Eigen::VectorXd theta(layout.dim());
  theta.head(layout.num_linear()) = beta;
  for (int m = 0; m < layout.num_smooth(); ++m) {
    const auto& block = layout.smooth_blocks()[static_cast<std::size_t>(m)];
    if (gamma[static_cast<std::size_t>(m)].size() != block.size) {
      throw ConfigError("smooth block '" + block.name + "' has wrong length");
    }
    theta.segment(block.offset, block.size) = gamma[static_cast<std::size_t>(m)];
  }
  for (int unit = 0; unit < layout.num_units(); ++unit) {
    theta(layout.u_out(unit)) = u[static_cast<std::size_t>(unit)](0);
    theta(layout.u_in(unit)) = u[static_cast<std::size_t>(unit)](1);
  }
  return theta;
}

VarianceComponents VarianceComponents::initial(int num_smooth) {
  VarianceComponents vc;
  vc.sigma = 0.5 * Eigen::Matrix2d::Identity();
  vc.lambda = Eigen::VectorXd::Ones(num_smooth);
  return vc;
}

void VarianceComponents::validate(int num_smooth) const {
  if (!sigma.allFinite() || sigma(0, 1) != sigma(1, 0) || sigma(0, 0) <= 0.0 ||
      sigma.determinant() <= 0.0) {
    std::ostringstream os;
    os << "random-effect covariance is not symmetric positive definite: [[" << sigma(0, 0) << ", "
       << sigma(0, 1) << "], [" << sigma(1, 0) << ", " << sigma(1, 1) << "]]";
    throw ConfigError(os.str());
  }
  if (lambda.size() != num_smooth) {
    throw ConfigError("expected " + std::to_string(num_smooth) + " smoothing parameters, got " +
                      std::to_string(lambda.size()));
  }
  for (Eigen::Index m = 0; m < lambda.size(); ++m) {
    if (!(lambda(m) > 0.0) || !std::isfinite(lambda(m))) {
      throw ConfigError("smoothing parameters must be positive and finite");
    }
  }
}

double PenalizedModel::penalty(const Eigen::VectorXd& theta, const VarianceComponents& vc) const {
  vc.validate(layout_.num_smooth());
  double total = 0.0;
  for (int m = 0; m < layout_.num_smooth(); ++m) {
    const auto& block = layout_.smooth_blocks()[static_cast<std::size_t>(m)];
    const auto gamma = theta.segment(block.offset, block.size);
    total += 0.5 * vc.lambda(m) * gamma.dot(block.penalty * gamma);
  }
  const Eigen::Matrix2d precision = vc.sigma.inverse();
  for (int unit = 0; unit < layout_.num_units(); ++unit) {
    const Eigen::Vector2d u(theta(layout_.u_out(unit)), theta(layout_.u_in(unit)));
    total += 0.5 * u.dot(precision * u);
  }
  return total;
}

double PenalizedModel::penalized_loglik(const Eigen::VectorXd& theta,
                                        const VarianceComponents& vc) const {
  const double pen = penalty(theta, vc);
  return loglik(theta) - pen;
}

double PenalizedModel::penalized_loglik_score(const Eigen::VectorXd& theta,
                                              const VarianceComponents& vc,
                                              Eigen::VectorXd& score) const {
  const double pen = penalty(theta, vc);
  const double ll = loglik_gradient(theta, score);
  for (int m = 0; m < layout_.num_smooth(); ++m) {
    const auto& block = layout_.smooth_blocks()[static_cast<std::size_t>(m)];
    score.segment(block.offset, block.size) -=
        vc.lambda(m) * (block.penalty * theta.segment(block.offset, block.size));
  }
  const Eigen::Matrix2d precision = vc.sigma.inverse();
  for (int unit = 0; unit < layout_.num_units(); ++unit) {
    const Eigen::Vector2d u(theta(layout_.u_out(unit)), theta(layout_.u_in(unit)));
    const Eigen::Vector2d g = precision * u;
    score(layout_.u_out(unit)) -= g(0);
    score(layout_.u_in(unit)) -= g(1);
  }
  return ll - pen;
}

Eigen::VectorXd PenalizedModel::penalized_score(const Eigen::VectorXd& theta,
                                                const VarianceComponents& vc) const {
  Eigen::VectorXd score;
  penalized_loglik_score(theta, vc, score);
  return score;
}

Eigen::MatrixXd PenalizedModel::observed_fisher(const Eigen::VectorXd& theta,
                                                const VarianceComponents& vc) const {
  vc.validate(layout_.num_smooth());
  Eigen::MatrixXd fisher = -loglik_hessian(theta);
  for (int m = 0; m < layout_.num_smooth(); ++m) {
    const auto& block = layout_.smooth_blocks()[static_cast<std::size_t>(m)];
    fisher.block(block.offset, block.offset, block.size, block.size) += vc.lambda(m) * block.penalty;
  }
  const Eigen::Matrix2d precision = vc.sigma.inverse();
  for (int unit = 0; unit < layout_.num_units(); ++unit) {
    fisher.block<2, 2>(layout_.u_out(unit), layout_.u_out(unit)) += precision;
  }
  // Exact symmetry regardless of accumulation order.
  const Eigen::MatrixXd sym = 0.5 * (fisher + fisher.transpose());
  return sym;
}

Eigen::Matrix2d FisherInverse::unit_block(const ParamLayout& layout, int unit) const {
  return covariance.block<2, 2>(layout.u_out(unit), layout.u_out(unit));
}

Eigen::MatrixXd FisherInverse::smooth_block(const ParamLayout& layout, int m) const {
  const auto& block = layout.smooth_blocks().at(static_cast<std::size_t>(m));
  return covariance.block(block.offset, block.offset, block.size, block.size);
}

FisherInverse invert_fisher(const Eigen::MatrixXd& fisher, double floor_ratio) {
  if (!fisher.allFinite()) throw NumericalError("observed Fisher matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fisher);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition of the observed Fisher matrix failed");
  }
  const Eigen::VectorXd& values = eig.eigenvalues();
  FisherInverse out;
  out.min_eigenvalue = values.minCoeff();
  out.max_eigenvalue = values.maxCoeff();
  if (!(out.max_eigenvalue > 0.0)) {
    std::ostringstream os;
    os << "observed Fisher matrix has no positive eigenvalue (largest " << out.max_eigenvalue << ")";
    throw NumericalError(os.str());
  }
  const double floor = floor_ratio * out.max_eigenvalue;
  Eigen::VectorXd inv(values.size());
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    double v = values(k);
    if (v < floor) {
      v = floor;
      ++out.floored;
    }
    inv(k) = 1.0 / v;
  }
  const Eigen::MatrixXd& vecs = eig.eigenvectors();
  out.covariance = vecs * inv.asDiagonal() * vecs.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

}  // namespace latentflow
