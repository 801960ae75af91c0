#pragma once

// Independent reference implementations used only by the tests.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// log I_d(x) by brute-force summation of every term in long double.
inline double log_bessel_i(int d, double x) {
  if (x == 0.0) return d == 0 ? 0.0 : -INFINITY;
  const long double lx = std::log(static_cast<long double>(x) / 2.0L);
  const long kmax = static_cast<long>(x) + 200 + static_cast<long>(20 * std::sqrt(x + 1.0));
  std::vector<long double> logs;
  logs.reserve(static_cast<std::size_t>(kmax));
  long double peak = -INFINITY;
  for (long k = 0; k < kmax; ++k) {
    const long double v = (d + 2.0L * k) * lx - std::lgamma(static_cast<long double>(k) + 1.0L) -
                          std::lgamma(static_cast<long double>(d + k) + 1.0L);
    logs.push_back(v);
    peak = std::max(peak, v);
  }
  long double sum = 0.0L;
  for (long double v : logs) sum += std::exp(v - peak);
  return static_cast<double>(peak + std::log(sum));
}

// Cox-de Boor recursion for B-spline j of degree p on the given knots.
inline double cox_de_boor(const std::vector<double>& t, int j, int p, double x) {
  if (p == 0) {
    return (t[j] <= x && x < t[j + 1]) ? 1.0 : 0.0;
  }
  double left = 0.0;
  double right = 0.0;
  if (t[j + p] != t[j]) left = (x - t[j]) / (t[j + p] - t[j]) * cox_de_boor(t, j, p - 1, x);
  if (t[j + p + 1] != t[j + 1]) {
    right = (t[j + p + 1] - x) / (t[j + p + 1] - t[j + 1]) * cox_de_boor(t, j + 1, p - 1, x);
  }
  return left + right;
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x;
    Eigen::VectorXd b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double h) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x;
    Eigen::VectorXd b = x;
    a(i) += h;
    b(i) -= h;
    j.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return j;
}

// max_i |a_i - b_i| / max(|b_i|, floor)
inline double max_rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max(std::abs(b.data()[i]), floor);
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / denom);
  }
  return worst;
}

}  // namespace oracle
