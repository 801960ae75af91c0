#include "latentflow/bfgs.hpp"

#include <cmath>
#include <limits>

#include "latentflow/errors.hpp"

namespace latentflow {
namespace {

// Internally the problem is minimization of phi(x) = -f(x).
struct Point {
  double alpha = 0.0;
  double value = std::numeric_limits<double>::infinity();
  double slope = 0.0;  // directional derivative of phi
  Eigen::VectorXd x;
  Eigen::VectorXd grad;  // gradient of phi
};

class LineSearch {
 public:
  LineSearch(const Objective& f, const BfgsOptions& opts, int& evals)
      : f_(f), opts_(opts), evals_(evals) {}

  // Strong Wolfe search along p from (x, phi0, g0). Returns false on failure;
  // best always holds the lowest finite point seen (alpha = 0 if none).
  bool run(const Eigen::VectorXd& x, double phi0, const Eigen::VectorXd& g0,
           const Eigen::VectorXd& p, double alpha0, Point& best) {
    x_ = &x;
    p_ = &p;
    phi0_ = phi0;
    slope0_ = g0.dot(p);
    noise_ = 1e-12 * (1.0 + std::abs(phi0));
    best = Point{0.0, phi0, slope0_, x, g0};
    best_ = &best;
    if (!(slope0_ < 0.0)) return false;

    Point prev{0.0, phi0, slope0_, x, g0};
    double alpha = alpha0;
    for (int k = 0; k < opts_.max_line_search; ++k) {
      Point cur = eval(alpha);
      if (!std::isfinite(cur.value)) {
        // Infeasible: shrink towards the last acceptable point.
        alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
        if (alpha - prev.alpha < 1e-16 * std::max(1.0, alpha)) return false;
        continue;
      }
      if (!sufficient(cur) || (k > 0 && cur.value > prev.value + noise_)) {
        return zoom(prev, cur, best);
      }
      if (std::abs(cur.slope) <= -opts_.c2 * slope0_) {
        best = cur;
        return true;
      }
      if (cur.slope >= 0.0) return zoom(cur, prev, best);
      prev = cur;
      alpha *= 2.0;
    }
    return false;
  }

 private:
  // Armijo decrease, or the approximate Wolfe form once value differences
  // are at rounding level: phi barely moved and the slope dropped enough.
  [[nodiscard]] bool sufficient(const Point& p) const {
    if (!std::isfinite(p.value)) return false;
    if (p.value <= phi0_ + opts_.c1 * p.alpha * slope0_) return true;
    return p.value <= phi0_ + noise_ && p.slope <= (2.0 * opts_.c1 - 1.0) * slope0_;
  }

  Point eval(double alpha) {
    Point pt;
    pt.alpha = alpha;
    pt.x = *x_ + alpha * *p_;
    Eigen::VectorXd grad;
    const double fx = f_(pt.x, grad);
    ++evals_;
    if (std::isnan(fx)) {
      throw NumericalError("objective returned NaN during the line search");
    }
    if (!std::isfinite(fx) || !grad.allFinite()) return pt;
    pt.value = -fx;
    pt.grad = -grad;
    pt.slope = pt.grad.dot(*p_);
    if (pt.value < best_->value) *best_ = pt;
    return pt;
  }

  bool zoom(Point lo, Point hi, Point& best) {
    for (int k = 0; k < opts_.max_line_search; ++k) {
      double alpha = 0.0;
      // Cubic interpolation when both ends are finite, bisection otherwise.
      if (std::isfinite(hi.value)) {
        const double d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (lo.alpha - hi.alpha);
        const double rad = d1 * d1 - lo.slope * hi.slope;
        if (rad >= 0.0) {
          const double d2 = std::copysign(std::sqrt(rad), hi.alpha - lo.alpha);
          alpha = hi.alpha - (hi.alpha - lo.alpha) * (hi.slope + d2 - d1) /
                                 (hi.slope - lo.slope + 2.0 * d2);
        }
      }
      const double a = std::min(lo.alpha, hi.alpha);
      const double b = std::max(lo.alpha, hi.alpha);
      const double margin = 0.1 * (b - a);
      if (!(alpha > a + margin && alpha < b - margin)) alpha = 0.5 * (a + b);
      if (b - a < 1e-14 * std::max(1.0, b)) return false;

      Point cur = eval(alpha);
      if (!std::isfinite(cur.value) || !sufficient(cur) || cur.value > lo.value + noise_) {
        hi = cur;
        continue;
      }
      if (std::abs(cur.slope) <= -opts_.c2 * slope0_) {
        best = cur;
        return true;
      }
      if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = cur;
    }
    return false;
  }

  const Objective& f_;
  const BfgsOptions& opts_;
  int& evals_;
  const Eigen::VectorXd* x_ = nullptr;
  const Eigen::VectorXd* p_ = nullptr;
  Point* best_ = nullptr;
  double phi0_ = 0.0;
  double slope0_ = 0.0;
  double noise_ = 0.0;
};

}  // namespace

BfgsResult bfgs_maximize(const Objective& f, const Eigen::VectorXd& x0, const BfgsOptions& opts) {
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = x0;
  Eigen::VectorXd grad;
  const double f0 = f(x0, grad);
  res.evaluations = 1;
  if (!std::isfinite(f0) || !grad.allFinite()) {
    throw NumericalError("objective is not finite at the starting point");
  }
  double phi = -f0;
  Eigen::VectorXd g = -grad;
  Eigen::VectorXd x = x0;
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  bool fresh = true;  // h is a (scaled) identity

  LineSearch search(f, opts, res.evaluations);
  while (true) {
    res.grad_norm = n > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
    if (res.grad_norm < opts.grad_tol) {
      res.converged = true;
      break;
    }
    if (res.iterations >= opts.max_iter) break;

    const Eigen::VectorXd p = -(h * g);
    // Keep the first trial step from leaping far when h is still the identity.
    const double alpha0 = fresh && !scaled ? std::min(1.0, 1.0 / res.grad_norm) : 1.0;
    Point next;
    const bool ok = search.run(x, phi, g, p, alpha0, next);
    if (!ok && next.alpha == 0.0) {
      if (fresh) {
        res.line_search_failed = true;
        break;
      }
      h.setIdentity();
      fresh = true;
      scaled = false;
      continue;
    }
    ++res.iterations;
    const Eigen::VectorXd s = next.x - x;
    const Eigen::VectorXd y = next.grad - g;
    x = next.x;
    phi = next.value;
    g = next.grad;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h = (sy / y.squaredNorm()) * Eigen::MatrixXd::Identity(n, n);
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h * y;
      // H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
           rho * (hy * s.transpose() + s * hy.transpose());
      fresh = false;
    }
    if (!ok) {
      // Progress was made but the Wolfe conditions were not met; restart the metric.
      h.setIdentity();
      fresh = true;
      scaled = false;
    }
  }
  res.x = x;
  res.value = -phi;
  res.gradient = -g;
  return res;
}

}  // namespace latentflow
