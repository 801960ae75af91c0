#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latentflow/covariates.hpp"
#include "latentflow/em.hpp"
#include "latentflow/feed_model.hpp"
#include "latentflow/panel.hpp"
#include "latentflow/simulation.hpp"
#include "latentflow/trips.hpp"

namespace latentflow {

/// Hours since 1970-01-01T00:00Z of an ISO-8601 UTC timestamp aligned to a
/// full hour. Accepts YYYY-MM-DDTHH:MM[:SS] with an optional Z or +00:00.
std::int64_t parse_hour_timestamp(std::string_view text);
std::string format_hour_timestamp(std::int64_t epoch_hours);

/// Station fills on the union of all timestamps in the file.
///
/// Every station must have a row at every timestamp; a row with an empty or
/// NA fill is a missing value, an absent row is a gap.
struct FeedTable {
  std::vector<std::string> station_ids;  // sorted
  std::vector<std::int64_t> hours;       // sorted, unique
  std::vector<std::string> timestamps;   // as written in the file, per hour
  std::vector<FeedPanel::Fill> fills;    // station-major, N x hours
  std::vector<std::optional<std::int64_t>> capacity;  // per station
  bool has_capacity_column = false;

  [[nodiscard]] int num_stations() const { return static_cast<int>(station_ids.size()); }
  [[nodiscard]] int num_hours() const { return static_cast<int>(hours.size()); }
  [[nodiscard]] FeedPanel::Fill fill(int i, int h) const {
    return fills[static_cast<std::size_t>(i) * hours.size() + static_cast<std::size_t>(h)];
  }
};

/// Columns station_id,timestamp,fill[,capacity]. Errors carry source:line.
FeedTable read_feeds(std::istream& is, const std::string& source = "<feeds>");
FeedTable read_feeds(const std::filesystem::path& file);

/// Re-emits the table sorted by station id, then timestamp.
void write_feeds(std::ostream& os, const FeedTable& table);

/// Timepoints of the panel: grid positions whose hour of day is hour % 24
/// and whose preceding hour is on the grid. Without an hour, every position
/// with a preceding hour.
std::vector<int> select_timepoints(const FeedTable& table, std::optional<int> hour);

/// Differences between consecutive hours at the selected positions.
FeedPanel build_panel(const FeedTable& table, const std::vector<int>& positions);

/// Rows of the covariate CSV (scope,timestamp,station,station_to,name,value).
struct CovariateRecord {
  Scope scope = Scope::time;
  std::optional<std::int64_t> hour;  // absent: static
  std::string station;
  std::string station_to;
  std::string name;
  double value = 0.0;
  std::size_t line = 0;
};

std::vector<CovariateRecord> read_covariates(std::istream& is,
                                             const std::string& source = "<covariates>");
std::vector<CovariateRecord> read_covariates(const std::filesystem::path& file);
void write_covariates(std::ostream& os, const std::vector<CovariateRecord>& records);

/// Dense values of every named covariate aligned on (stations, timepoints).
/// Missing keys are reported together in one DataError.
std::vector<std::pair<std::string, CovariateValues>> assemble_covariates(
    const std::vector<CovariateRecord>& records, const std::vector<std::string>& station_ids,
    const std::vector<std::int64_t>& timepoint_hours);

/// Trip counts, columns origin,destination,timestamp,count; absent cells are 0.
TripTensor read_trips(std::istream& is, const std::vector<std::string>& station_ids,
                      const std::vector<std::int64_t>& timepoint_hours,
                      const std::string& source = "<trips>");
TripTensor read_trips(const std::filesystem::path& file,
                      const std::vector<std::string>& station_ids,
                      const std::vector<std::int64_t>& timepoint_hours);

struct SmoothConfig {
  std::string covariate;
  SmoothTermSpec spec;  // spec.name defaults to the covariate
  bool range_given = false;
};

struct DistanceConfig {
  std::string covariate = "dist";
  std::string name = "f_dist";
  double alpha = 1.0;
  std::vector<double> alpha_grid;  // non-empty: profile the fit over these values
};

struct DerivedConfig {
  bool seasonal = false;  // seas: day of year in [0, 1)
  bool weekdays = false;  // tue .. sun, Monday as reference
  bool nobikes = false;   // origin empty at t-1 and t
  bool noboxes = false;   // destination full at t-1 and t; needs capacities
};

struct BandConfig {
  int draws = 10000;
  int grid_points = 100;
  double level = 0.95;
};

/// Settings of one fit. Serialized as a JSON object with nested sections.
struct RunConfig {
  ModelKind model_kind = ModelKind::dyadic;
  std::optional<int> hour;  // 1..24
  std::optional<std::vector<std::string>> linear;  // absent: every unused covariate
  std::vector<SmoothConfig> smooth;
  std::optional<DistanceConfig> distance;
  DerivedConfig derived;
  EmConfig em;
  BandConfig bands;
  std::string output_dir = "latentflow-out";

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& file);
std::string run_config_json(const RunConfig& cfg);

/// Everything a fit needs. The design refers to covariates, so keep the
/// dataset alive while a model built from it is in use.
struct Dataset {
  FeedTable feeds;
  std::vector<int> positions;  // grid positions of the timepoints
  std::vector<std::int64_t> timepoint_hours;
  FeedPanel panel;
  std::unique_ptr<CovariateSet> covariates;
  std::vector<std::string> warnings;
};

/// Reads feeds and (optionally) covariates, applies the hour filter and
/// assembles the covariate set described by cfg. alpha overrides the
/// configured distance exponent.
Dataset ingest(const FeedTable& feeds, const std::vector<CovariateRecord>& covariates,
               const RunConfig& cfg, std::optional<double> alpha = std::nullopt);
Dataset ingest(const std::filesystem::path& feeds,
               const std::optional<std::filesystem::path>& covariates, const RunConfig& cfg);

/// Rebuilds the covariate set of an existing dataset for another alpha.
void rebuild_covariates(Dataset& data, const std::vector<CovariateRecord>& covariates,
                        const RunConfig& cfg, std::optional<double> alpha);

/// Pointwise band of a fitted smooth on an evaluation grid.
struct SmoothBand {
  std::string name;
  Eigen::VectorXd x;
  Eigen::VectorXd estimate;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd std_error;  // delta-method standard error
};

/// Quantile band of f(x) = B(x) gamma from draws of gamma ~ N(gamma_hat, V_mm).
SmoothBand smooth_band(const SmoothTermBasis& basis, const Eigen::VectorXd& gamma,
                       const Eigen::MatrixXd& covariance, const BandConfig& cfg,
                       std::uint64_t seed);

/// Writes coefficients.csv, smooth_<name>.csv, random_effects.csv, sigma.csv,
/// lambda.csv, trace.csv, theta.csv and fit.json into dir.
void write_fit_outputs(const std::filesystem::path& dir, const SkellamFeedModel& model,
                       const FitResult& fit, const RunConfig& cfg,
                       std::optional<double> alpha = std::nullopt);

/// Fitted parameters read back from a fit directory (theta.csv and fit.json).
struct SavedFit {
  Eigen::VectorXd theta;
  VarianceComponents vc;
  std::optional<double> alpha;
  RunConfig config;
};
SavedFit read_fit_outputs(const std::filesystem::path& dir);

/// Simulation scenario in the JSON configuration format; keys absent from
/// the text keep the values of base.
SimConfig parse_sim_config(std::string_view json_text, const SimConfig& base);
std::string sim_config_json(const SimConfig& cfg);

/// Writes one replication as feeds.csv, covariates.csv, trips.csv and a
/// matching config.json. Day d of the replication becomes timepoint
/// (2024-01-01 + d) at hour 8, with its previous fill at hour 7.
void write_simulated_data(const std::filesystem::path& dir, const SimReplication& rep);

}  // namespace latentflow
