#include <random>

#include <gtest/gtest.h>

#include "latentflow/errors.hpp"
#include "latentflow/spline.hpp"
#include "oracles.hpp"

using latentflow::SmoothTermBasis;
using latentflow::SmoothTermSpec;
using latentflow::SplineKind;

namespace {

std::vector<double> uniform_data(double lo, double hi, int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& x : out) x = u(rng);
  return out;
}

int rank_of(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  int r = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) r += eig.eigenvalues()(i) > 1e-9 ? 1 : 0;
  return r;
}

}  // namespace

TEST(SmoothTermSpec, Validation) {
  EXPECT_THROW((SmoothTermSpec{"x", 3, SplineKind::open, 0, 1}.validate()),
               latentflow::ConfigError);
  EXPECT_THROW((SmoothTermSpec{"x", 6, SplineKind::open, 1, 1}.validate()),
               latentflow::ConfigError);
}

TEST(SplineBasis, PartitionOfUnity) {
  for (auto kind : {SplineKind::open, SplineKind::cyclic}) {
    const SmoothTermBasis b({"x", 9, kind, -2.0, 3.0}, uniform_data(-2, 3, 50, 1));
    for (double x : uniform_data(-2, 3, 1000, 2)) {
      EXPECT_NEAR(b.evaluate_raw(x).sum(), 1.0, 1e-13);
    }
    EXPECT_NEAR(b.evaluate_raw(-2.0).sum(), 1.0, 1e-13);
    EXPECT_NEAR(b.evaluate_raw(3.0).sum(), 1.0, 1e-13);
  }
}

TEST(SplineBasis, MatchesCoxDeBoorAtKnotsAndBetween) {
  const SmoothTermBasis b({"x", 8, SplineKind::open, 0.0, 5.0}, uniform_data(0, 5, 20, 3));
  const auto& t = b.knots();
  ASSERT_EQ(t.size(), 12u);
  std::vector<double> points(t.begin() + 3, t.end() - 4);  // interior knots incl. lo
  for (double x : uniform_data(0, 5, 30, 4)) points.push_back(x);
  for (double x : points) {
    const Eigen::VectorXd row = b.evaluate_raw(x);
    for (int j = 0; j < b.size(); ++j) {
      EXPECT_NEAR(row(j), oracle::cox_de_boor(t, j, 3, x), 1e-12) << "x=" << x << " j=" << j;
    }
  }
}

TEST(SplineBasis, CyclicMatchesPeriodicCoxDeBoor) {
  const int k = 7;
  const SmoothTermBasis b({"doy", k, SplineKind::cyclic, 0.0, 1.0}, uniform_data(0, 1, 20, 5));
  const double h = 1.0 / k;
  std::vector<double> t;
  for (int j = -2 * k; j <= 2 * k + 4; ++j) t.push_back(j * h);
  for (double x : uniform_data(0, 1, 40, 6)) {
    const Eigen::VectorXd row = b.evaluate_raw(x);
    for (int j = 0; j < k; ++j) {
      // Basis j is supported on [(j - 3) h, (j + 1) h), wrapped with period 1.
      double want = 0.0;
      for (int shift : {-1, 0, 1}) want += oracle::cox_de_boor(t, j - 3 + 2 * k + shift * k, 3, x);
      EXPECT_NEAR(row(j), want, 1e-12) << x << " " << j;
    }
  }
}

TEST(SplineBasis, CyclicPeriodicity) {
  const SmoothTermBasis b({"doy", 10, SplineKind::cyclic, 0.0, 1.0}, uniform_data(0, 1, 20, 7));
  EXPECT_LT((b.evaluate_row(0.0) - b.evaluate_row(1.0)).norm(), 1e-13);
  EXPECT_LT((b.evaluate_row(0.25) - b.evaluate_row(1.25)).norm(), 1e-13);
}

TEST(SplineBasis, Centering) {
  const auto data = uniform_data(10, 20, 200, 8);
  const SmoothTermBasis b({"temp", 10, SplineKind::open, 10, 20}, data);
  Eigen::VectorXd gamma = Eigen::VectorXd::LinSpaced(10, -1.0, 2.0).array().square();
  double mean = 0.0;
  for (double x : data) mean += b.evaluate_row(x).dot(gamma);
  EXPECT_NEAR(mean / data.size(), 0.0, 1e-12);
  EXPECT_NEAR(b.evaluate_row(13.3).sum(), 1.0 - b.column_means().sum(), 1e-12);
}

TEST(SplineBasis, OutOfDomainErrors) {
  try {
    SmoothTermBasis b({"temp", 6, SplineKind::open, 0, 1}, std::vector<double>{0.5, 1.25});
    FAIL() << "expected DataError";
  } catch (const latentflow::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("1.25"), std::string::npos);
  }
  const SmoothTermBasis b({"temp", 6, SplineKind::open, 0, 1}, std::vector<double>{0.5});
  EXPECT_THROW(b.evaluate_row(1.5), latentflow::ConfigError);
}

TEST(Penalty, RankAndNullSpace) {
  using latentflow::second_difference_penalty;
  EXPECT_EQ(rank_of(second_difference_penalty(4, SplineKind::open)), 2);
  for (int k : {5, 8, 12}) {
    const auto open = second_difference_penalty(k, SplineKind::open);
    const auto cyc = second_difference_penalty(k, SplineKind::cyclic);
    EXPECT_EQ(rank_of(open), k - 2);
    EXPECT_EQ(rank_of(cyc), k - 1);
    EXPECT_LT((open - open.transpose()).norm(), 1e-15);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
    const Eigen::VectorXd lin = Eigen::VectorXd::LinSpaced(k, 0, k - 1);
    EXPECT_LT((open * ones).norm(), 1e-12);
    EXPECT_LT((open * lin).norm(), 1e-12);
    EXPECT_LT((cyc * ones).norm(), 1e-12);
    EXPECT_GT((cyc * lin).norm(), 1e-3);
  }
}

TEST(Penalty, QuadraticExamples) {
  const SmoothTermBasis b({"x", 5, SplineKind::open, 0, 1}, std::vector<double>{0.3});
  Eigen::VectorXd e = Eigen::VectorXd::Zero(5);
  e(2) = 1.0;
  EXPECT_DOUBLE_EQ(b.quadratic_penalty(e, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(b.quadratic_penalty(Eigen::VectorXd::Zero(5), 2.0), 0.0);
  EXPECT_NEAR(b.quadratic_penalty(Eigen::VectorXd::LinSpaced(5, 1, 3), 7.0), 0.0, 1e-12);
  EXPECT_THROW(b.quadratic_penalty(Eigen::VectorXd::Zero(4), 1.0), latentflow::ConfigError);
}

TEST(Penalty, InvarianceUnderNullSpaceShifts) {
  const SmoothTermBasis open({"x", 8, SplineKind::open, 0, 1}, std::vector<double>{0.3});
  const SmoothTermBasis cyc({"x", 8, SplineKind::cyclic, 0, 1}, std::vector<double>{0.3});
  Eigen::VectorXd g(8);
  g << 0.3, -1.2, 0.8, 2.0, -0.4, 0.1, 1.5, -0.9;
  const Eigen::VectorXd lin = Eigen::VectorXd::LinSpaced(8, 0, 7);
  EXPECT_NEAR(open.quadratic_penalty(g, 1.0),
              open.quadratic_penalty(g + Eigen::VectorXd::Constant(8, 4.0) + 0.7 * lin, 1.0), 1e-10);
  EXPECT_NEAR(cyc.quadratic_penalty(g, 1.0),
              cyc.quadratic_penalty(g + Eigen::VectorXd::Constant(8, 4.0), 1.0), 1e-10);
  EXPECT_GT(std::abs(cyc.quadratic_penalty(g + 0.7 * lin, 1.0) - cyc.quadratic_penalty(g, 1.0)),
            1e-3);
}
