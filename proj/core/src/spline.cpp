#include "latentflow/spline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "latentflow/errors.hpp"

namespace latentflow {
namespace {

// Uniform cubic B-spline pieces on a unit interval, t in [0, 1].
std::array<double, 4> cubic_pieces(double t) {
  const double s = 1.0 - t;
  const double t2 = t * t;
  const double t3 = t2 * t;
  return {s * s * s / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
          (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0};
}

std::string describe(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

void SmoothTermSpec::validate() const {
  if (!(lo < hi)) {
    throw ConfigError("smooth term '" + name + "': domain requires lo < hi");
  }
  if (num_basis < 4) {
    throw ConfigError("smooth term '" + name + "': cubic B-splines need at least 4 coefficients");
  }
}

Eigen::MatrixXd second_difference_penalty(int k, SplineKind kind) {
  if (k < 3) throw ConfigError("second-difference penalty needs k >= 3");
  const int rows = kind == SplineKind::cyclic ? k : k - 2;
  Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(rows, k);
  for (int r = 0; r < rows; ++r) {
    if (kind == SplineKind::cyclic) {
      diff(r, (r + k - 1) % k) += 1.0;
      diff(r, r) += -2.0;
      diff(r, (r + 1) % k) += 1.0;
    } else {
      diff(r, r) = 1.0;
      diff(r, r + 1) = -2.0;
      diff(r, r + 2) = 1.0;
    }
  }
  return diff.transpose() * diff;
}

SmoothTermBasis::SmoothTermBasis(SmoothTermSpec spec, std::span<const double> data)
    : spec_(std::move(spec)) {
  spec_.validate();
  if (data.empty()) {
    throw DataError("smooth term '" + spec_.name + "': no fitting data");
  }
  const int k = spec_.num_basis;
  if (spec_.kind == SplineKind::open) {
    spacing_ = (spec_.hi - spec_.lo) / (k - 3);
    for (int j = 0; j < k + 4; ++j) knots_.push_back(spec_.lo + (j - 3) * spacing_);
  } else {
    spacing_ = (spec_.hi - spec_.lo) / k;
    for (int j = 0; j <= k; ++j) knots_.push_back(spec_.lo + j * spacing_);
  }
  penalty_ = second_difference_penalty(k, spec_.kind);

  column_means_ = Eigen::VectorXd::Zero(k);
  for (double x : data) {
    if (!std::isfinite(x) || x < spec_.lo || x > spec_.hi) {
      throw DataError("smooth term '" + spec_.name + "': value " + describe(x) +
                      " outside domain [" + describe(spec_.lo) + ", " + describe(spec_.hi) + "]");
    }
    column_means_ += evaluate_raw(x);
  }
  column_means_ /= static_cast<double>(data.size());
}

int SmoothTermBasis::penalty_rank() const {
  return spec_.kind == SplineKind::cyclic ? spec_.num_basis - 1 : spec_.num_basis - 2;
}

Eigen::VectorXd SmoothTermBasis::evaluate_raw(double x) const {
  const int k = spec_.num_basis;
  Eigen::VectorXd row = Eigen::VectorXd::Zero(k);
  if (spec_.kind == SplineKind::open) {
    if (!(x >= spec_.lo && x <= spec_.hi)) {
      throw ConfigError("smooth term '" + spec_.name + "': value " + describe(x) +
                        " outside domain");
    }
    const double u = (x - spec_.lo) / spacing_;
    const int cell = std::clamp(static_cast<int>(std::floor(u)), 0, k - 4);
    const auto pieces = cubic_pieces(u - cell);
    for (int m = 0; m < 4; ++m) row(cell + m) = pieces[m];
  } else {
    if (!std::isfinite(x)) {
      throw ConfigError("smooth term '" + spec_.name + "': non-finite value");
    }
    const double period = spec_.hi - spec_.lo;
    double wrapped = std::fmod(x - spec_.lo, period);
    if (wrapped < 0.0) wrapped += period;
    const double u = wrapped / spacing_;
    const int cell = std::clamp(static_cast<int>(std::floor(u)), 0, k - 1);
    const auto pieces = cubic_pieces(u - cell);
    for (int m = 0; m < 4; ++m) row((cell + m) % k) += pieces[m];
  }
  return row;
}

Eigen::VectorXd SmoothTermBasis::evaluate_row(double x) const {
  return evaluate_raw(x) - column_means_;
}

double SmoothTermBasis::quadratic_penalty(const Eigen::VectorXd& gamma, double lambda) const {
  if (gamma.size() != spec_.num_basis) {
    throw ConfigError("smooth term '" + spec_.name + "': coefficient length mismatch");
  }
  if (!(lambda > 0.0)) {
    throw ConfigError("smooth term '" + spec_.name + "': smoothing parameter must be positive");
  }
  return 0.5 * lambda * gamma.dot(penalty_ * gamma);
}

}  // namespace latentflow
