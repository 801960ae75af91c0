#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "latentflow/errors.hpp"
#include "latentflow/io.hpp"

using namespace latentflow;

namespace {

FeedTable feeds_from(const std::string& text) {
  std::istringstream is(text);
  return read_feeds(is, "feeds.csv");
}

std::vector<CovariateRecord> covariates_from(const std::string& text) {
  std::istringstream is(text);
  return read_covariates(is, "cov.csv");
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

const char* kTwoStations =
    "station_id,timestamp,fill\n"
    "A,2024-03-01T07:00:00Z,5\n"
    "A,2024-03-01T08:00:00Z,4\n"
    "B,2024-03-01T07:00:00Z,3\n"
    "B,2024-03-01T08:00:00Z,4\n";

}  // namespace

TEST(Timestamps, ParseAndFormat) {
  const auto h = parse_hour_timestamp("2024-03-01T08:00:00Z");
  EXPECT_EQ(h % 24, 8);
  EXPECT_EQ(parse_hour_timestamp("2024-03-01T08:00"), h);
  EXPECT_EQ(parse_hour_timestamp("2024-03-01 08:00:00+00:00"), h);
  EXPECT_EQ(parse_hour_timestamp("1970-01-01T00:00:00Z"), 0);
  EXPECT_EQ(format_hour_timestamp(h), "2024-03-01T08:00:00Z");
  EXPECT_EQ(parse_hour_timestamp("2024-03-02T00:00:00Z") - parse_hour_timestamp("2024-03-01T23:00:00Z"), 1);
  EXPECT_THROW(parse_hour_timestamp("2024-03-01T08:30:00Z"), DataError);
  EXPECT_THROW(parse_hour_timestamp("2023-02-29T08:00:00Z"), DataError);
  EXPECT_THROW(parse_hour_timestamp("2024-03-01"), DataError);
}

TEST(Feeds, TwoStationDifferences) {
  const auto table = feeds_from(kTwoStations);
  const auto panel = build_panel(table, select_timepoints(table, std::nullopt));
  ASSERT_EQ(panel.num_timepoints(), 1);
  EXPECT_EQ(panel.diff(0, 0), -1);
  EXPECT_EQ(panel.diff(1, 0), 1);
  EXPECT_EQ(panel.diff(2, 0), 0);
  EXPECT_EQ(panel.time_labels()[0], "2024-03-01T08:00:00Z");
}

TEST(Feeds, MissingFillMarksCell) {
  const auto table = feeds_from(
      "station_id,timestamp,fill\n"
      "A,2024-03-01T07:00:00Z,5\nA,2024-03-01T08:00:00Z,\n"
      "B,2024-03-01T07:00:00Z,3\nB,2024-03-01T08:00:00Z,6\n"
      "C,2024-03-01T07:00:00Z,1\nC,2024-03-01T08:00:00Z,NA\n");
  const auto panel = build_panel(table, select_timepoints(table, std::nullopt));
  EXPECT_FALSE(panel.observed(0, 0));
  EXPECT_TRUE(panel.observed(1, 0));
  EXPECT_FALSE(panel.observed(2, 0));
  EXPECT_EQ(panel.diff(panel.latent_index(), 0), -3);
}

TEST(Feeds, RoundTripIsByteIdentical) {
  const std::string text =
      "station_id,timestamp,fill,capacity\n"
      "A,2024-03-01T07:00:00Z,5,20\n"
      "A,2024-03-01T08:00:00Z,,20\n"
      "B,2024-03-01T07:00:00Z,3,\n"
      "B,2024-03-01T08:00:00Z,4,\n";
  std::ostringstream os;
  write_feeds(os, feeds_from(text));
  EXPECT_EQ(os.str(), text);
  std::ostringstream plain;
  write_feeds(plain, feeds_from(kTwoStations));
  EXPECT_EQ(plain.str(), kTwoStations);
}

TEST(Feeds, RowOrderDoesNotMatter) {
  std::istringstream lines(kTwoStations);
  std::string header;
  std::getline(lines, header);
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  std::mt19937 rng(4);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(rows.begin(), rows.end(), rng);
    std::string text = header + "\n";
    for (const auto& r : rows) text += r + "\n";
    std::ostringstream os;
    write_feeds(os, feeds_from(text));
    EXPECT_EQ(os.str(), kTwoStations);
  }
}

TEST(Feeds, NonIntegerFillReportsLine) {
  const auto msg = error_of([] {
    feeds_from("station_id,timestamp,fill\nA,2024-03-01T07:00:00Z,5\nA,2024-03-01T08:00:00Z,4.5\n");
  });
  EXPECT_NE(msg.find("feeds.csv:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("4.5"), std::string::npos) << msg;
}

TEST(Feeds, GapsListedPerStation) {
  const auto msg = error_of([] {
    feeds_from(
        "station_id,timestamp,fill\n"
        "A,2024-03-01T07:00:00Z,5\nA,2024-03-01T08:00:00Z,4\nA,2024-03-01T09:00:00Z,4\n"
        "B,2024-03-01T07:00:00Z,3\n"
        "C,2024-03-01T08:00:00Z,3\nC,2024-03-01T09:00:00Z,3\n");
  });
  EXPECT_NE(msg.find("station B: 2 missing"), std::string::npos) << msg;
  EXPECT_NE(msg.find("station C: 1 missing (2024-03-01T07:00:00Z)"), std::string::npos) << msg;
  EXPECT_EQ(msg.find("station A"), std::string::npos) << msg;
}

TEST(Feeds, RejectsMalformedInput) {
  EXPECT_THROW(feeds_from("station,timestamp,fill\nA,2024-03-01T07:00:00Z,1\n"), DataError);
  EXPECT_THROW(feeds_from("station_id,timestamp,fill\nA,2024-03-01T07:00:00Z,-1\n"), DataError);
  EXPECT_THROW(feeds_from("station_id,timestamp,fill\nA,2024-03-01T07:00:00Z,1\n"
                          "A,2024-03-01T07:00:00Z,2\n"),
               DataError);
  EXPECT_THROW(feeds_from("station_id,timestamp,fill\nA,2024-03-01T07:00:00Z\n"), DataError);
  EXPECT_THROW(feeds_from("station_id,timestamp,fill\n"), DataError);
}

TEST(Feeds, HourFilterNeedsPrecedingHour) {
  std::string text = "station_id,timestamp,fill\n";
  for (const char* ts : {"2024-03-01T07:00:00Z", "2024-03-01T08:00:00Z", "2024-03-01T23:00:00Z",
                         "2024-03-02T00:00:00Z", "2024-03-02T08:00:00Z"}) {
    text += std::string("A,") + ts + ",1\n";
  }
  const auto table = feeds_from(text);
  EXPECT_EQ(select_timepoints(table, 8), std::vector<int>({1}));  // day 2 hour 8 lacks hour 7
  EXPECT_EQ(select_timepoints(table, 24), std::vector<int>({3}));
  EXPECT_EQ(select_timepoints(table, std::nullopt), std::vector<int>({1, 3}));
  EXPECT_TRUE(select_timepoints(table, 12).empty());
}

TEST(Covariates, AssembleEveryScope) {
  const auto records = covariates_from(
      "scope,timestamp,station,station_to,name,value\n"
      "time,2024-03-01T08:00:00Z,,,rain,0.5\n"
      "time,2024-03-01T07:00:00Z,,,rain,9\n"
      "station_out,,A,,hub,1\n"
      "station_out,,B,,hub,0\n"
      "station_in,2024-03-01T08:00:00Z,A,,busy,2\n"
      "station_in,2024-03-01T08:00:00Z,B,,busy,3\n"
      "dyadic,,A,B,dist,1.5\n"
      "dyadic,,B,A,dist,1.25\n");
  const std::vector<std::int64_t> hours{parse_hour_timestamp("2024-03-01T08:00:00Z")};
  const auto values = assemble_covariates(records, {"A", "B"}, hours);
  ASSERT_EQ(values.size(), 4u);
  EXPECT_EQ(values[0].first, "rain");
  EXPECT_DOUBLE_EQ(values[0].second.at(0, 0, 0), 0.5);
  EXPECT_FALSE(values[1].second.time_varying());
  EXPECT_DOUBLE_EQ(values[1].second.at(0, 1, 0), 1.0);
  EXPECT_DOUBLE_EQ(values[2].second.at(0, 1, 0), 3.0);  // station_in reads the destination
  EXPECT_DOUBLE_EQ(values[3].second.at(0, 1, 0), 1.5);
  EXPECT_DOUBLE_EQ(values[3].second.at(1, 0, 0), 1.25);
  EXPECT_DOUBLE_EQ(values[3].second.at(1, 1, 0), 0.0);
}

TEST(Covariates, RejectsInconsistentRows) {
  EXPECT_THROW(covariates_from("scope,timestamp,station,station_to,name,value\n"
                               "time,,,,rain,1\n"),
               DataError);
  EXPECT_THROW(covariates_from("scope,timestamp,station,station_to,name,value\n"
                               "dyadic,,A,,dist,1\n"),
               DataError);
  EXPECT_THROW(covariates_from("scope,timestamp,station,station_to,name,value\n"
                               "station_out,,A,,x,1\nstation_in,,B,,x,1\n"),
               DataError);
  EXPECT_THROW(covariates_from("scope,timestamp,station,station_to,name,value\n"
                               "station_out,,A,,x,1\nstation_out,,A,,x,2\n"),
               DataError);
  EXPECT_THROW(covariates_from("scope,timestamp,station,station_to,name,value\n"
                               "weekly,,A,,x,1\n"),
               DataError);
  const auto missing = covariates_from("scope,timestamp,station,station_to,name,value\n"
                                       "station_out,,A,,x,1\n");
  EXPECT_THROW(assemble_covariates(missing, {"A", "B"}, {0}), DataError);
  const auto unknown = covariates_from("scope,timestamp,station,station_to,name,value\n"
                                       "station_out,,Z,,x,1\n");
  EXPECT_THROW(assemble_covariates(unknown, {"A"}, {0}), DataError);
}

TEST(Trips, ReadsCountsAtTimepoints) {
  std::istringstream is(
      "origin,destination,timestamp,count\n"
      "A,B,2024-03-01T08:00:00Z,3\n"
      "B,B,2024-03-01T08:00:00Z,1\n"
      "A,B,2024-03-01T09:00:00Z,7\n");
  const auto y = read_trips(is, {"A", "B"}, {parse_hour_timestamp("2024-03-01T08:00:00Z")});
  EXPECT_EQ(y.at(0, 1, 0), 3);
  EXPECT_EQ(y.at(1, 1, 0), 1);
  EXPECT_EQ(y.at(0, 0, 0), 0);
}

TEST(RunConfigJson, DefaultsAndOverrides) {
  const auto def = parse_run_config("{}");
  EXPECT_EQ(def.model_kind, ModelKind::dyadic);
  EXPECT_FALSE(def.hour);
  EXPECT_EQ(def.bands.draws, 10000);
  EXPECT_DOUBLE_EQ(def.em.epsilon, 1e-3);

  const auto cfg = parse_run_config(R"({
    "model": "station", "hour": 8, "linear": ["rain"],
    "smooth": [{"covariate": "temp", "num_basis": 8}, {"covariate": "seas", "kind": "cyclic"}],
    "distance": {"covariate": "km", "alpha": 1.5, "alpha_grid": [0.5, 1.0]},
    "derived": {"seasonal": true, "weekdays": true},
    "em": {"epsilon": 1e-4, "inner": {"grad_tol": 1e-7}},
    "bands": {"draws": 500}, "output_dir": "out"})");
  EXPECT_EQ(cfg.model_kind, ModelKind::station);
  EXPECT_EQ(*cfg.hour, 8);
  ASSERT_EQ(cfg.smooth.size(), 2u);
  EXPECT_EQ(cfg.smooth[0].spec.num_basis, 8);
  EXPECT_EQ(cfg.smooth[1].spec.num_basis, 10);
  EXPECT_EQ(cfg.smooth[1].spec.kind, SplineKind::cyclic);
  EXPECT_DOUBLE_EQ(cfg.distance->alpha, 1.5);
  EXPECT_DOUBLE_EQ(cfg.em.inner.grad_tol, 1e-7);
  EXPECT_EQ(cfg.bands.draws, 500);

  const auto again = parse_run_config(run_config_json(cfg));
  EXPECT_EQ(run_config_json(again), run_config_json(cfg));
}

TEST(RunConfigJson, RejectsInvalid) {
  EXPECT_THROW(parse_run_config(R"({"hour": 0})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"hour": 25})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"hours": 8})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": "pairwise"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"em": {"epsilon": -1}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"smooth": [{"covariate": "t", "lower": 0}]})"), ConfigError);
  EXPECT_THROW(parse_run_config("{"), ConfigError);
}

TEST(Ingest, DerivedCovariates) {
  // 2024-03-01 is a Friday; 2024 is a leap year.
  const auto table = feeds_from(
      "station_id,timestamp,fill,capacity\n"
      "A,2024-03-01T07:00:00Z,0,10\nA,2024-03-01T08:00:00Z,0,10\n"
      "A,2024-03-03T07:00:00Z,10,10\nA,2024-03-03T08:00:00Z,10,10\n"
      "B,2024-03-01T07:00:00Z,3,\nB,2024-03-01T08:00:00Z,0,\n"
      "B,2024-03-03T07:00:00Z,2,\nB,2024-03-03T08:00:00Z,2,\n");
  RunConfig cfg = parse_run_config(
      R"({"hour": 8, "derived": {"seasonal": true, "weekdays": true, "nobikes": true, "noboxes": true}})");
  const auto data = ingest(table, {}, cfg);
  ASSERT_EQ(data.panel.num_timepoints(), 2);
  const auto& lin = data.covariates->linear();
  std::vector<std::string> names;
  for (const auto& t : lin) names.push_back(t.name);
  EXPECT_EQ(names, std::vector<std::string>({"seas", "tue", "wed", "thu", "fri", "sat", "sun", "nobikes"}));
  EXPECT_DOUBLE_EQ(lin[0].values.at(0, 0, 0), 60.0 / 366.0);
  EXPECT_DOUBLE_EQ(lin[4].values.at(0, 0, 0), 1.0);  // fri on day one
  EXPECT_DOUBLE_EQ(lin[6].values.at(0, 0, 1), 1.0);  // sun on day two
  EXPECT_DOUBLE_EQ(lin[7].values.at(0, 1, 0), 1.0);  // A empty at 7 and 8
  EXPECT_DOUBLE_EQ(lin[7].values.at(1, 0, 0), 0.0);  // B emptied during the hour
  ASSERT_EQ(data.warnings.size(), 1u);               // B has no capacity
}

TEST(Ingest, ConfiguredTerms) {
  std::string feeds = "station_id,timestamp,fill\n";
  std::string cov = "scope,timestamp,station,station_to,name,value\n";
  for (const char* s : {"A", "B"}) {
    for (int d = 1; d <= 6; ++d) {
      feeds += std::string(s) + ",2024-03-0" + std::to_string(d) + "T07:00:00Z,5\n";
      feeds += std::string(s) + ",2024-03-0" + std::to_string(d) + "T08:00:00Z," + std::to_string(d) + "\n";
    }
  }
  for (int d = 1; d <= 6; ++d) {
    cov += "time,2024-03-0" + std::to_string(d) + "T08:00:00Z,,,temp," + std::to_string(d * 2) + "\n";
    cov += "time,2024-03-0" + std::to_string(d) + "T08:00:00Z,,,rain," + std::to_string(d % 2) + "\n";
  }
  cov += "dyadic,,A,B,km,1\ndyadic,,B,A,km,2\n";
  const auto cfg = parse_run_config(R"({"hour": 8, "smooth": [{"covariate": "temp", "num_basis": 5}],
      "distance": {"covariate": "km", "alpha": 2.0}})");
  const auto data = ingest(feeds_from(feeds), covariates_from(cov), cfg);
  const auto& set = *data.covariates;
  ASSERT_EQ(set.linear().size(), 2u);
  EXPECT_EQ(set.linear()[0].name, "rain");
  EXPECT_EQ(set.linear()[1].name, "f_dist");
  EXPECT_DOUBLE_EQ(set.linear()[1].values.at(1, 0, 0), distance_transform(2.0, 2.0));
  ASSERT_EQ(set.smooth().size(), 1u);
  EXPECT_DOUBLE_EQ(set.smooth()[0].spec.lo, 2.0);
  EXPECT_DOUBLE_EQ(set.smooth()[0].spec.hi, 12.0);

  const auto bad = parse_run_config(R"({"hour": 8, "linear": ["snow"]})");
  const auto msg = error_of([&] { ingest(feeds_from(feeds), covariates_from(cov), bad); });
  EXPECT_NE(msg.find("unknown covariate 'snow'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("rain"), std::string::npos) << msg;
}

TEST(SmoothBandDraws, MatchesNormalQuantiles) {
  const SmoothTermSpec spec{"x", 6, SplineKind::open, 0.0, 1.0};
  std::vector<double> data;
  for (int k = 0; k <= 50; ++k) data.push_back(k / 50.0);
  const SmoothTermBasis basis(spec, data);
  Eigen::VectorXd gamma = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(6, 6);
  const Eigen::MatrixXd cov = 0.01 * (a * a.transpose() + Eigen::MatrixXd::Identity(6, 6));
  BandConfig cfg;
  cfg.grid_points = 11;
  const auto band = smooth_band(basis, gamma, cov, cfg, 7);
  for (int r = 0; r < 11; ++r) {
    const double half = 1.959964 * band.std_error(r);
    EXPECT_NEAR(band.upper(r) - band.estimate(r), half, 0.05 * half);
    EXPECT_NEAR(band.estimate(r) - band.lower(r), half, 0.05 * half);
  }
  const auto flat = smooth_band(basis, gamma, Eigen::MatrixXd::Zero(6, 6), cfg, 7);
  EXPECT_LT((flat.upper - flat.lower).cwiseAbs().maxCoeff(), 1e-12);
}
