#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "latentflow/bfgs.hpp"
#include "latentflow/em.hpp"
#include "latentflow/errors.hpp"
#include "latentflow/feed_model.hpp"

using namespace latentflow;

namespace {

Eigen::MatrixXd random_spd(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = z(rng);
  return a * a.transpose() + n * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

TEST(Bfgs, QuadraticConvergesQuickly) {
  for (int n : {2, 5, 12}) {
    const Eigen::MatrixXd a = random_spd(n, 3 + n);
    const Eigen::VectorXd target = Eigen::VectorXd::LinSpaced(n, -2.0, 3.0);
    const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      const Eigen::VectorXd r = x - target;
      g = -(a * r);
      return -0.5 * r.dot(a * r);
    };
    BfgsOptions opts;
    opts.grad_tol = 1e-10;
    opts.c2 = 0.1;  // near-exact line search, the setting where BFGS terminates in ~n steps
    const auto res = bfgs_maximize(f, Eigen::VectorXd::Zero(n), opts);
    EXPECT_TRUE(res.converged);
    EXPECT_LT((res.x - target).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(res.iterations, n + 5) << "n=" << n;
  }
}

TEST(Bfgs, StartingAtOptimumStopsImmediately) {
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -2.0 * (x.array() - 1.0).matrix();
    return -(x.array() - 1.0).square().sum();
  };
  const auto res = bfgs_maximize(f, Eigen::VectorXd::Ones(4));
  EXPECT_TRUE(res.converged);
  EXPECT_LE(res.iterations, 1);
}

TEST(Bfgs, BacktracksOutOfInfeasibleRegion) {
  // log-barrier style objective: -inf for x >= 1.
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(1);
    if (x(0) >= 1.0) return -std::numeric_limits<double>::infinity();
    g(0) = 5.0 - 1.0 / (1.0 - x(0));
    return 5.0 * x(0) + std::log(1.0 - x(0));
  };
  const auto res = bfgs_maximize(f, Eigen::VectorXd::Zero(1));
  EXPECT_TRUE(res.converged);
  EXPECT_NEAR(res.x(0), 0.8, 1e-7);
}

TEST(Bfgs, NaNIsAnError) {
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Ones(1);
    return x(0) > 0.5 ? std::nan("") : x(0);
  };
  EXPECT_THROW(bfgs_maximize(f, Eigen::VectorXd::Zero(1)), NumericalError);
}

TEST(MaximizeInner, MatchesGridSearchOnToy) {
  const auto inst = fixture::make_instance({.stations = 3, .timepoints = 10}, 50);
  const SkellamFeedModel model(*inst.design, inst.panel, ModelKind::dyadic);
  const auto vc = VarianceComponents::initial(0);
  const auto res = maximize_inner(model, model.initial_params(), vc, {});
  ASSERT_TRUE(res.converged);

  // Oracle: successive grid refinement over (intercept, z_time) with the rest fixed.
  auto lp = [&](double a, double b) {
    Eigen::VectorXd x = res.x;
    x(0) = a;
    x(1) = b;
    return model.penalized_loglik(x, vc);
  };
  double ca = 0.0;
  double cb = 0.0;
  double width = 4.0;
  for (int level = 0; level < 12; ++level) {
    double best = -INFINITY;
    double ba = ca;
    double bb = cb;
    for (int i = -10; i <= 10; ++i) {
      for (int j = -10; j <= 10; ++j) {
        const double a = ca + width * i / 10.0;
        const double b = cb + width * j / 10.0;
        const double v = lp(a, b);
        if (v > best) {
          best = v;
          ba = a;
          bb = b;
        }
      }
    }
    ca = ba;
    cb = bb;
    width /= 5.0;
  }
  EXPECT_NEAR(res.x(0), ca, 1e-4);
  EXPECT_NEAR(res.x(1), cb, 1e-4);
}

TEST(UpdateSigma, HandExamples) {
  CovariateSet covs(1, 1, false);
  covs.add_linear("x", CovariateValues::time({1.0}));
  const Design design(covs);
  const ParamLayout one(design, 1);
  Eigen::VectorXd theta(3);
  theta << 0.0, 1.0, 0.0;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(3, 3);
  Eigen::Matrix2d want;
  want << 2.0, 0.0, 0.0, 1.0;
  EXPECT_EQ(update_sigma(one, theta, v), want);

  const ParamLayout four(design, 4);
  Eigen::MatrixXd blocks = Eigen::MatrixXd::Zero(9, 9);
  Eigen::Matrix2d b;
  b << 0.7, 0.2, 0.2, 0.4;
  for (int u = 0; u < 4; ++u) blocks.block<2, 2>(four.u_out(u), four.u_out(u)) = b;
  EXPECT_TRUE(update_sigma(four, Eigen::VectorXd::Zero(9), blocks).isApprox(b, 1e-15));
}

TEST(UpdateSigma, RandomInstanceAgainstResummation) {
  CovariateSet covs(1, 1);
  const Design design(covs);
  const ParamLayout lay(design, 5);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  Eigen::VectorXd theta(lay.dim());
  for (auto& x : theta) x = z(rng);
  const Eigen::MatrixXd v = random_spd(lay.dim(), 2).inverse();
  double s00 = 0.0, s01 = 0.0, s11 = 0.0;
  for (int u = 0; u < 5; ++u) {
    const int o = 1 + 2 * u;
    s00 += v(o, o) + theta(o) * theta(o);
    s01 += v(o, o + 1) + theta(o) * theta(o + 1);
    s11 += v(o + 1, o + 1) + theta(o + 1) * theta(o + 1);
  }
  const Eigen::Matrix2d s = update_sigma(lay, theta, v);
  EXPECT_DOUBLE_EQ(s(0, 0), s00 / 5);
  EXPECT_DOUBLE_EQ(s(0, 1), s01 / 5);
  EXPECT_DOUBLE_EQ(s(1, 1), s11 / 5);
  EXPECT_EQ(s(0, 1), s(1, 0));
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s).eigenvalues().minCoeff(), 0.0);

  const Eigen::Matrix2d partial = update_sigma(lay, theta, v, {0, 1, 2, 3});
  EXPECT_NEAR(partial(0, 0),
              (s00 - v(9, 9) - theta(9) * theta(9)) / 4, 1e-14);
}

namespace {

struct LambdaCase {
  std::unique_ptr<CovariateSet> covs;
  std::unique_ptr<Design> design;
  std::unique_ptr<ParamLayout> layout;
};

LambdaCase lambda_case() {
  LambdaCase c;
  c.covs = std::make_unique<CovariateSet>(2, 6);
  c.covs->add_smooth({"a", 5, SplineKind::open, 0, 1},
                     CovariateValues::time({0.1, 0.3, 0.5, 0.6, 0.8, 0.9}));
  c.covs->add_smooth({"b", 6, SplineKind::cyclic, 0, 1},
                     CovariateValues::time({0.2, 0.4, 0.1, 0.7, 0.95, 0.5}));
  c.design = std::make_unique<Design>(*c.covs);
  c.layout = std::make_unique<ParamLayout>(*c.design, 3);
  return c;
}

}  // namespace

TEST(UpdateLambda, TracesAgainstDenseAlgebra) {
  const auto c = lambda_case();
  const auto& lay = *c.layout;
  const int p = lay.dim();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  Eigen::VectorXd theta(p);
  for (auto& x : theta) x = z(rng);
  const Eigen::MatrixXd v = random_spd(p, 5).inverse();
  Eigen::VectorXd lambda(2);
  lambda << 0.8, 3.0;

  // Dense oracle: S_m zero-padded, S_lambda pseudo-inverse by orthogonal decomposition.
  std::vector<Eigen::MatrixXd> s;
  Eigen::MatrixXd s_lambda = Eigen::MatrixXd::Zero(p, p);
  for (int m = 0; m < 2; ++m) {
    const auto& b = lay.smooth_blocks()[static_cast<std::size_t>(m)];
    Eigen::MatrixXd sm = Eigen::MatrixXd::Zero(p, p);
    sm.block(b.offset, b.offset, b.size, b.size) = b.penalty;
    s_lambda += lambda(m) * sm;
    s.push_back(sm);
  }
  const Eigen::MatrixXd pinv = s_lambda.completeOrthogonalDecomposition().pseudoInverse();
  const auto got = update_lambda(lay, theta, v, lambda, 1e-12, 1e12);
  for (int m = 0; m < 2; ++m) {
    const double num = (pinv * s[static_cast<std::size_t>(m)]).trace() - (v * s[static_cast<std::size_t>(m)]).trace();
    const double den = theta.dot(s[static_cast<std::size_t>(m)] * theta);
    const double want = std::max(num / den * lambda(m), 1e-12);
    EXPECT_NEAR(got(m), want, 1e-9 * std::abs(want));
  }
}

TEST(UpdateLambda, FixedPointAndClamping) {
  const auto c = lambda_case();
  const auto& lay = *c.layout;
  const int p = lay.dim();
  const auto& b = lay.smooth_blocks()[0];
  const Eigen::MatrixXd v = 0.01 * Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd lambda(2);
  lambda << 2.0, 1.0;

  // Scale gamma_0 so that gamma^T K gamma equals the numerator.
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  theta.segment(b.offset, b.size) << 0.0, 1.0, -1.0, 0.5, 0.0;
  const double numerator = b.rank / lambda(0) - 0.01 * b.penalty.trace();
  const double quad = theta.segment(b.offset, b.size).dot(b.penalty * theta.segment(b.offset, b.size));
  theta.segment(b.offset, b.size) *= std::sqrt(numerator / quad);
  const auto& b1 = lay.smooth_blocks()[1];
  theta.segment(b1.offset, b1.size).setConstant(0.0);
  theta(b1.offset) = 1.0;

  std::vector<std::string> warnings;
  const auto next = update_lambda(lay, theta, v, lambda, 1e-6, 1e6, &warnings);
  EXPECT_NEAR(next(0), lambda(0), 1e-12);

  // Large posterior variance makes the numerator negative.
  const Eigen::MatrixXd big = 100.0 * Eigen::MatrixXd::Identity(p, p);
  warnings.clear();
  const auto clamped = update_lambda(lay, theta, big, lambda, 1e-6, 1e6, &warnings);
  EXPECT_EQ(clamped(0), 1e-6);
  EXPECT_EQ(clamped(1), 1e-6);
  EXPECT_EQ(warnings.size(), 2u);

  // Coefficients in the null space: fully smoothed.
  theta.segment(b.offset, b.size) = Eigen::VectorXd::LinSpaced(b.size, 0, 1);
  warnings.clear();
  EXPECT_EQ(update_lambda(lay, theta, v, lambda, 1e-6, 1e6, &warnings)(0), 1e6);
  EXPECT_FALSE(warnings.empty());
}

TEST(Fit, ZeroSignalTerminatesWithoutNaN) {
  CovariateSet covs(3, 8);
  const Design design(covs);
  const auto panel = FeedPanel::from_differences(fixture::station_names(3), fixture::time_names(8),
                                                 std::vector<int>(24, 0));
  const SkellamFeedModel model(design, panel, ModelKind::dyadic);
  EmConfig cfg;
  cfg.max_outer = 3;
  cfg.inner.max_iter = 60;
  const auto res = fit(model, cfg);
  EXPECT_TRUE(res.theta.allFinite());
  EXPECT_TRUE(std::isfinite(res.penalized_loglik));
  EXPECT_LT(res.theta(0), std::log(0.01));
  EXPECT_FALSE(res.trace.empty());
}

TEST(Fit, TraceCsvLayout) {
  const auto inst = fixture::make_instance({.stations = 3, .timepoints = 12, .smooth = true}, 60);
  const SkellamFeedModel model(*inst.design, inst.panel, ModelKind::station);
  EmConfig cfg;
  cfg.max_outer = 4;
  const auto res = fit(model, cfg);
  ASSERT_FALSE(res.trace.empty());
  EXPECT_EQ(res.standard_errors.size(), model.layout().num_fixed());
  EXPECT_TRUE(res.standard_errors.allFinite());
  std::ostringstream os;
  write_trace_csv(os, res.trace, {"temp", "seas"});
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "iteration,penalized_loglik,loglik,objective,sigma_change,sigma_out,sigma_cross,sigma_in,"
            "lambda_temp,lambda_seas,inner_iterations,inner_grad_norm,inner_converged");
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')),
            res.trace.size() + 1);
  if (res.converged) EXPECT_LT(res.trace.back().sigma_change, cfg.epsilon);
}

TEST(EmConfig, Validation) {
  EmConfig cfg;
  cfg.epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lambda_min = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
