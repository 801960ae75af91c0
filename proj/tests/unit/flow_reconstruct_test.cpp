#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "latentflow/errors.hpp"
#include "latentflow/flow.hpp"

using namespace latentflow;

namespace {

// Field with the given route matrices; margins are row and column sums.
IntensityField field_from(const std::vector<Eigen::MatrixXd>& nu) {
  IntensityField f;
  f.num_stations = static_cast<int>(nu.front().rows()) - 1;
  const int t_len = static_cast<int>(nu.size());
  f.nu = nu;
  f.mu_out.resize(f.num_stations + 1, t_len);
  f.mu_in.resize(f.num_stations + 1, t_len);
  for (int t = 0; t < t_len; ++t) {
    f.mu_out.col(t) = nu[static_cast<std::size_t>(t)].rowwise().sum();
    f.mu_in.col(t) = nu[static_cast<std::size_t>(t)].colwise().sum().transpose();
  }
  return f;
}

IntensityField random_field(int n, int t_len, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> ln(-2.0, 1.5);
  std::vector<Eigen::MatrixXd> nu;
  for (int t = 0; t < t_len; ++t) {
    Eigen::MatrixXd m(n + 1, n + 1);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = ln(rng);
    m(n, n) = 0.0;
    nu.push_back(m);
  }
  return field_from(nu);
}

TripTensor trips_of(int n, int t_len, std::vector<int> counts) {
  TripTensor y;
  y.num_stations = n;
  y.num_timepoints = t_len;
  y.counts = std::move(counts);
  return y;
}

}  // namespace

TEST(Reconstruct, NoLatentOutflowKeepsRoutes) {
  Eigen::MatrixXd nu(3, 3);
  nu << 0.4, 1.2, 0.0,
        0.7, 0.3, 0.0,
        0.5, 0.9, 0.0;
  const auto flow = reconstruct(field_from({nu}));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(flow.mu(i, j, 0), nu(i, j));
  }
}

TEST(Reconstruct, SymmetricSplit) {
  Eigen::MatrixXd nu(3, 3);
  nu << 1.0, 1.0, 1.0,
        1.0, 1.0, 1.0,
        1.0, 1.0, 0.0;
  const auto flow = reconstruct(field_from({nu}));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_DOUBLE_EQ(flow.mu(i, j, 0), 1.5);
      EXPECT_DOUBLE_EQ(flow.pi(i, j, 0), 0.5);
    }
  }
}

TEST(Reconstruct, ConservationOnRandomFields) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    const auto field = random_field(2 + static_cast<int>(seed % 7), 5, seed);
    const auto flow = reconstruct(field);
    const auto check = check_conservation(field, flow);
    EXPECT_LT(check.max_mass_error, 1e-12);
    EXPECT_LT(check.max_pi_error, 1e-12);
    for (int t = 0; t < flow.num_timepoints; ++t) {
      for (int i = 0; i < flow.num_stations; ++i) {
        const double rhs = field.nu[static_cast<std::size_t>(t)].row(i).sum();
        EXPECT_NEAR(flow.out_degree(i, t), rhs, 1e-12 * std::max(1.0, rhs));
      }
    }
  }
}

TEST(Reconstruct, EquivariantUnderRelabeling) {
  const int n = 5;
  const auto field = random_field(n, 3, 11);
  std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<Eigen::MatrixXd> permuted;
  for (const auto& m : field.nu) {
    Eigen::MatrixXd p(n + 1, n + 1);
    for (int a = 0; a <= n; ++a) {
      for (int b = 0; b <= n; ++b) {
        const int ia = a == n ? n : perm[static_cast<std::size_t>(a)];
        const int ib = b == n ? n : perm[static_cast<std::size_t>(b)];
        p(a, b) = m(ia, ib);
      }
    }
    permuted.push_back(p);
  }
  const auto base = reconstruct(field);
  const auto relabeled = reconstruct(field_from(permuted));
  for (int t = 0; t < 3; ++t) {
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        EXPECT_NEAR(relabeled.mu(a, b, t),
                    base.mu(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)], t),
                    1e-15);
      }
    }
  }
}

TEST(Reconstruct, ZeroRouteSumThrows) {
  Eigen::MatrixXd nu = Eigen::MatrixXd::Zero(3, 3);
  nu(1, 0) = 1.0;
  nu(0, 2) = 1.0;
  EXPECT_THROW(reconstruct(field_from({nu})), NumericalError);
}

TEST(Reconstruct, FittedModelIntensities) {
  fixture::Options opt;
  opt.dyadic = true;
  const auto inst = fixture::make_instance(opt, 5);
  SkellamFeedModel model(*inst.design, inst.panel, ModelKind::dyadic);
  const Eigen::VectorXd theta = fixture::random_theta(model.layout().dim(), 9);
  const auto field = model.intensities(theta);
  const auto flow = reconstruct(field);
  const auto check = check_conservation(field, flow);
  EXPECT_LT(check.max_mass_error, 1e-12);
  EXPECT_LT(check.max_pi_error, 1e-12);
}

TEST(Evaluate, PerfectTruthGivesZeroError) {
  Eigen::MatrixXd nu(3, 3);
  nu << 1.0, 2.0, 0.0,
        3.0, 1.0, 0.0,
        0.5, 0.5, 0.0;
  const auto flow = reconstruct(field_from({nu}));
  const auto truth = trips_of(2, 1, {1, 2, 3, 1});
  const auto r = evaluate(flow, &truth);
  EXPECT_DOUBLE_EQ(r.delta_t_out(0), 0.0);
  EXPECT_DOUBLE_EQ(r.delta_t_in(0), 0.0);
  EXPECT_DOUBLE_EQ(r.delta_station_out.maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(r.delta_station_in.maxCoeff(), 0.0);
}

TEST(Evaluate, SingleCellRelativeError) {
  Eigen::MatrixXd nu(2, 2);
  nu << 2.0, 0.0,
        0.3, 0.0;
  const auto flow = reconstruct(field_from({nu}));
  const auto truth = trips_of(1, 1, {1});
  const auto r = evaluate(flow, &truth);
  EXPECT_DOUBLE_EQ(r.delta_t_out(0), 0.5);
  EXPECT_DOUBLE_EQ(r.delta_station_out(0), 0.5);
  EXPECT_DOUBLE_EQ(r.delta_station_in(0), 0.5);
}

TEST(Evaluate, CountProbabilitiesAtTypicalIntensity) {
  const int n = 4;
  Eigen::MatrixXd nu = Eigen::MatrixXd::Constant(n + 1, n + 1, 0.017);
  nu.col(n).setZero();
  const auto r = evaluate(reconstruct(field_from({nu})));
  EXPECT_NEAR(r.prob_zero(0), std::exp(-0.017), 1e-15);
  EXPECT_NEAR(r.prob_zero(0), 0.98314, 5e-6);
  EXPECT_NEAR(r.prob_one(0), 0.017 * std::exp(-0.017), 1e-15);
  EXPECT_FALSE(r.has_truth);
}

TEST(Evaluate, ProbabilitySharesSumToOne) {
  const auto field = random_field(6, 8, 3);
  const auto r = evaluate(reconstruct(field));
  for (int t = 0; t < 8; ++t) {
    EXPECT_NEAR(r.prob_zero(t) + r.prob_one(t) + r.prob_two_plus(t), 1.0, 1e-15);
    EXPECT_GE(r.prob_two_plus(t), 0.0);
  }
}

TEST(Evaluate, CumulatedDegreesAndDifferences) {
  const auto field = random_field(4, 6, 8);
  const auto flow = reconstruct(field);
  const auto r = evaluate(flow);
  for (int i = 0; i < 4; ++i) {
    double out = 0.0;
    double in = 0.0;
    for (int t = 0; t < 6; ++t) {
      out += flow.out_degree(i, t);
      in += flow.in_degree(i, t);
      EXPECT_DOUBLE_EQ(r.diff_hat(i, t), field.mu_in(i, t) - field.mu_out(i, t));
    }
    EXPECT_NEAR(r.cumulated_out(i), out, 1e-12);
    EXPECT_NEAR(r.cumulated_in(i), in, 1e-12);
  }
}

TEST(Evaluate, TinyEstimatesExcludedFromStationMeans) {
  Eigen::MatrixXd a(3, 3);
  a << 1e-12, 1e-12, 0.0,
       1.0, 1.0, 0.0,
       0.0, 0.0, 0.0;
  Eigen::MatrixXd b = a;
  b.row(0) << 1.0, 1.0, 0.0;
  const auto flow = reconstruct(field_from({a, b}));
  const auto truth = trips_of(2, 2, {0, 0, 2, 2, 1, 1, 1, 1});
  const auto r = evaluate(flow, &truth);
  EXPECT_EQ(r.excluded_cells, 1);
  EXPECT_DOUBLE_EQ(r.delta_station_out(0), 0.0);
  EXPECT_TRUE(std::isfinite(r.delta_station_out(0)));
}

TEST(Evaluate, ShapeMismatchThrows) {
  const auto flow = reconstruct(random_field(3, 2, 1));
  const auto truth = trips_of(3, 3, std::vector<int>(27, 0));
  EXPECT_THROW(evaluate(flow, &truth), DataError);
}

TEST(Evaluate, CsvFamiliesWritten) {
  const auto field = random_field(3, 2, 4);
  const auto flow = reconstruct(field);
  const auto truth = trips_of(3, 2, std::vector<int>(18, 1));
  const auto r = evaluate(flow, &truth);
  const auto dir = std::filesystem::temp_directory_path() / "latentflow_eval_csv";
  std::filesystem::remove_all(dir);
  write_eval_csv(dir, r, fixture::station_names(3), fixture::time_names(2));
  for (const char* name : {"network_errors.csv", "station_errors.csv", "cumulated_degrees.csv",
                           "differences.csv", "count_probabilities.csv"}) {
    std::ifstream is(dir / name);
    ASSERT_TRUE(is.good()) << name;
    std::string header;
    std::getline(is, header);
    EXPECT_FALSE(header.empty());
  }
  write_flows_csv(dir / "flows.csv", flow, fixture::station_names(3), fixture::time_names(2));
  std::ifstream is(dir / "flows.csv");
  int lines = 0;
  for (std::string line; std::getline(is, line);) ++lines;
  EXPECT_EQ(lines, 1 + 3 * 3 * 2);
  std::filesystem::remove_all(dir);
}
