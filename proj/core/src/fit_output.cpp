#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "latentflow/errors.hpp"
#include "latentflow/io.hpp"

namespace latentflow {

namespace {

using json = nlohmann::json;

// Type-7 sample quantile of a sorted range.
double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::ofstream open_output(const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw DataError("cannot write " + file.string());
  os.precision(12);
  return os;
}

std::string file_safe(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  }
  return out;
}

constexpr const char* kLatentLabel = "<latent>";

}  // namespace

SmoothBand smooth_band(const SmoothTermBasis& basis, const Eigen::VectorXd& gamma,
                       const Eigen::MatrixXd& covariance, const BandConfig& cfg,
                       std::uint64_t seed) {
  const int k = basis.size();
  if (gamma.size() != k || covariance.rows() != k || covariance.cols() != k) {
    throw ConfigError("smooth band: coefficient and covariance sizes differ from the basis");
  }
  const int g = cfg.grid_points;
  const auto& spec = basis.spec();
  SmoothBand band;
  band.name = spec.name;
  band.x = Eigen::VectorXd::LinSpaced(g, spec.lo, spec.hi);
  Eigen::MatrixXd rows(g, k);
  for (int r = 0; r < g; ++r) rows.row(r) = basis.evaluate_row(band.x(r)).transpose();
  band.estimate = rows * gamma;
  band.std_error = (rows * covariance).cwiseProduct(rows).rowwise().sum().cwiseMax(0.0).cwiseSqrt();

  // Square root of the PSD covariance; tiny negative eigenvalues from rounding are clipped.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (covariance + covariance.transpose()));
  const Eigen::MatrixXd root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const Eigen::MatrixXd rows_root = rows * root;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd draws(g, cfg.draws);
  Eigen::VectorXd z(k);
  for (int d = 0; d < cfg.draws; ++d) {
    for (int j = 0; j < k; ++j) z(j) = normal(rng);
    draws.col(d) = band.estimate + rows_root * z;
  }
  band.lower.resize(g);
  band.upper.resize(g);
  const double tail = 0.5 * (1.0 - cfg.level);
  std::vector<double> buf(static_cast<std::size_t>(cfg.draws));
  for (int r = 0; r < g; ++r) {
    for (int d = 0; d < cfg.draws; ++d) buf[static_cast<std::size_t>(d)] = draws(r, d);
    std::sort(buf.begin(), buf.end());
    band.lower(r) = quantile_sorted(buf, tail);
    band.upper(r) = quantile_sorted(buf, 1.0 - tail);
  }
  return band;
}

void write_fit_outputs(const std::filesystem::path& dir, const SkellamFeedModel& model,
                       const FitResult& fit, const RunConfig& cfg, std::optional<double> alpha) {
  std::filesystem::create_directories(dir);
  const Design& design = model.design();
  const ParamLayout& layout = model.layout();
  const FeedPanel& panel = model.panel();
  const auto& cov = fit.fisher_inverse.covariance;

  {
    auto os = open_output(dir / "coefficients.csv");
    os << "name,estimate,std_error\n";
    for (int c = 0; c < layout.num_linear(); ++c) {
      os << layout.fixed_names()[static_cast<std::size_t>(c)] << ',' << fit.theta(c) << ','
         << fit.standard_errors(c) << '\n';
    }
  }
  for (int m = 0; m < layout.num_smooth(); ++m) {
    const auto& block = layout.smooth_blocks()[static_cast<std::size_t>(m)];
    const auto band =
        smooth_band(design.bases()[static_cast<std::size_t>(m)], fit.theta.segment(block.offset, block.size),
                    cov.block(block.offset, block.offset, block.size, block.size), cfg.bands,
                    cfg.em.seed + static_cast<std::uint64_t>(m));
    auto os = open_output(dir / ("smooth_" + file_safe(block.name) + ".csv"));
    os << "x,estimate,lower,upper,std_error\n";
    for (Eigen::Index r = 0; r < band.x.size(); ++r) {
      os << band.x(r) << ',' << band.estimate(r) << ',' << band.lower(r) << ',' << band.upper(r)
         << ',' << band.std_error(r) << '\n';
    }
  }
  {
    auto os = open_output(dir / "random_effects.csv");
    os << "station,u_out,u_in,se_out,se_in\n";
    for (int unit = 0; unit < layout.num_units(); ++unit) {
      const std::string id = unit == panel.num_stations()
                                 ? kLatentLabel
                                 : panel.station_ids()[static_cast<std::size_t>(unit)];
      const int a = layout.u_out(unit);
      const int b = layout.u_in(unit);
      os << id << ',' << fit.theta(a) << ',' << fit.theta(b) << ','
         << std::sqrt(std::max(0.0, cov(a, a))) << ',' << std::sqrt(std::max(0.0, cov(b, b)))
         << '\n';
    }
  }
  {
    auto os = open_output(dir / "sigma.csv");
    os << "parameter,estimate\n";
    os << "sigma_out," << fit.vc.sigma(0, 0) << "\nsigma_cross," << fit.vc.sigma(0, 1)
       << "\nsigma_in," << fit.vc.sigma(1, 1) << '\n';
  }
  std::vector<std::string> smooth_names;
  for (const auto& block : layout.smooth_blocks()) smooth_names.push_back(block.name);
  {
    auto os = open_output(dir / "lambda.csv");
    os << "smooth,lambda\n";
    for (std::size_t m = 0; m < smooth_names.size(); ++m) {
      os << smooth_names[m] << ',' << fit.vc.lambda(static_cast<Eigen::Index>(m)) << '\n';
    }
  }
  {
    auto os = open_output(dir / "trace.csv");
    write_trace_csv(os, fit.trace, smooth_names);
  }
  {
    auto os = open_output(dir / "theta.csv");
    os.precision(17);
    os << "index,name,value\n";
    for (int c = 0; c < layout.dim(); ++c) {
      std::string name;
      if (c < layout.num_fixed()) {
        name = layout.fixed_names()[static_cast<std::size_t>(c)];
      } else {
        const int unit = (c - layout.num_fixed()) / 2;
        const std::string id = unit == panel.num_stations()
                                   ? kLatentLabel
                                   : panel.station_ids()[static_cast<std::size_t>(unit)];
        name = ((c - layout.num_fixed()) % 2 == 0 ? "u_out:" : "u_in:") + id;
      }
      os << c << ',' << name << ',' << fit.theta(c) << '\n';
    }
  }
  json summary;
  summary["model"] = std::string(to_string(model.kind()));
  summary["stations"] = panel.num_stations();
  summary["timepoints"] = panel.num_timepoints();
  summary["converged"] = fit.converged;
  summary["diverged"] = fit.diverged;
  summary["outer_iterations"] = fit.trace.size();
  summary["loglik"] = fit.loglik;
  summary["penalized_loglik"] = fit.penalized_loglik;
  summary["sigma"] = {{fit.vc.sigma(0, 0), fit.vc.sigma(0, 1)},
                      {fit.vc.sigma(1, 0), fit.vc.sigma(1, 1)}};
  summary["lambda"] = json::object();
  for (std::size_t m = 0; m < smooth_names.size(); ++m) {
    summary["lambda"][smooth_names[m]] = fit.vc.lambda(static_cast<Eigen::Index>(m));
  }
  summary["lambda_order"] = smooth_names;
  if (alpha) summary["alpha"] = *alpha;
  summary["fisher_floored"] = fit.fisher_inverse.floored;
  summary["warnings"] = fit.warnings;
  summary["config"] = json::parse(run_config_json(cfg));
  auto os = open_output(dir / "fit.json");
  os << summary.dump(2) << '\n';
}

SavedFit read_fit_outputs(const std::filesystem::path& dir) {
  SavedFit saved;
  {
    std::ifstream is(dir / "theta.csv");
    if (!is) throw DataError("cannot open " + (dir / "theta.csv").string());
    std::string line;
    std::getline(is, line);
    std::vector<double> values;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto last = line.rfind(',');
      try {
        values.push_back(std::stod(line.substr(last + 1)));
      } catch (const std::exception&) {
        throw DataError((dir / "theta.csv").string() + ": malformed line '" + line + "'");
      }
    }
    saved.theta = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  std::ifstream is(dir / "fit.json");
  if (!is) throw DataError("cannot open " + (dir / "fit.json").string());
  try {
    const json summary = json::parse(is);
    const auto s = summary.at("sigma");
    saved.vc.sigma << s.at(0).at(0).get<double>(), s.at(0).at(1).get<double>(),
        s.at(1).at(0).get<double>(), s.at(1).at(1).get<double>();
    const auto order = summary.at("lambda_order").get<std::vector<std::string>>();
    saved.vc.lambda.resize(static_cast<Eigen::Index>(order.size()));
    for (std::size_t m = 0; m < order.size(); ++m) {
      saved.vc.lambda(static_cast<Eigen::Index>(m)) = summary.at("lambda").at(order[m]).get<double>();
    }
    if (summary.contains("alpha")) saved.alpha = summary.at("alpha").get<double>();
    saved.config = parse_run_config(summary.at("config").dump());
  } catch (const json::exception& e) {
    throw DataError((dir / "fit.json").string() + ": " + e.what());
  }
  return saved;
}

SimConfig parse_sim_config(std::string_view json_text, const SimConfig& base) {
  SimConfig cfg = base;
  try {
    const json root = json::parse(json_text);
    if (!root.is_object()) throw ConfigError("scenario must be a JSON object");
    for (const auto& [key, value] : root.items()) {
      if (key == "name") {
        cfg.name = value.get<std::string>();
      } else if (key == "stations") {
        cfg.num_stations = value.get<int>();
      } else if (key == "timepoints") {
        cfg.num_timepoints = value.get<int>();
      } else if (key == "replications") {
        cfg.replications = value.get<int>();
      } else if (key == "beta") {
        const auto b = value.get<std::vector<double>>();
        if (b.size() != 3) throw ConfigError("scenario beta needs 3 values");
        cfg.beta = Eigen::Vector3d(b[0], b[1], b[2]);
      } else if (key == "sigma") {
        cfg.sigma << value.at(0).at(0).get<double>(), value.at(0).at(1).get<double>(),
            value.at(1).at(0).get<double>(), value.at(1).at(1).get<double>();
      } else if (key == "carryover_prob") {
        cfg.carryover_prob = value.get<double>();
      } else if (key == "prev_scale") {
        cfg.prev_scale = value.get<double>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else {
        throw ConfigError("unknown key '" + key + "' in scenario");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string sim_config_json(const SimConfig& cfg) {
  const json root{{"name", cfg.name},
                  {"stations", cfg.num_stations},
                  {"timepoints", cfg.num_timepoints},
                  {"replications", cfg.replications},
                  {"beta", {cfg.beta(0), cfg.beta(1), cfg.beta(2)}},
                  {"sigma", {{cfg.sigma(0, 0), cfg.sigma(0, 1)}, {cfg.sigma(1, 0), cfg.sigma(1, 1)}}},
                  {"carryover_prob", cfg.carryover_prob},
                  {"prev_scale", cfg.prev_scale},
                  {"seed", cfg.seed}};
  return root.dump(2);
}

void write_simulated_data(const std::filesystem::path& dir, const SimReplication& rep) {
  std::filesystem::create_directories(dir);
  const FeedPanel& panel = rep.panel;
  const int n = panel.num_stations();
  const int t_len = panel.num_timepoints();
  const std::int64_t first = parse_hour_timestamp("2024-01-01T08:00:00Z");
  std::vector<std::int64_t> hours;
  for (int t = 0; t < t_len; ++t) hours.push_back(first + 24 * static_cast<std::int64_t>(t));
  {
    auto os = open_output(dir / "feeds.csv");
    os << "station_id,timestamp,fill\n";
    for (int i = 0; i < n; ++i) {
      // Previous-hour fill high enough that no fill goes negative.
      std::int64_t base = 100;
      for (int t = 0; t < t_len; ++t) base = std::max<std::int64_t>(base, -panel.diff(i, t));
      const auto& id = panel.station_ids()[static_cast<std::size_t>(i)];
      for (int t = 0; t < t_len; ++t) {
        os << id << ',' << format_hour_timestamp(hours[static_cast<std::size_t>(t)] - 1) << ','
           << base << '\n';
        os << id << ',' << format_hour_timestamp(hours[static_cast<std::size_t>(t)]) << ','
           << base + panel.diff(i, t) << '\n';
      }
    }
  }
  {
    std::vector<CovariateRecord> records;
    for (int t = 0; t < t_len; ++t) {
      CovariateRecord r;
      r.scope = Scope::time;
      r.hour = hours[static_cast<std::size_t>(t)];
      r.name = "z1";
      r.value = rep.z_time[static_cast<std::size_t>(t)];
      records.push_back(r);
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        CovariateRecord r;
        r.scope = Scope::dyadic;
        r.station = panel.station_ids()[static_cast<std::size_t>(i)];
        r.station_to = panel.station_ids()[static_cast<std::size_t>(j)];
        r.name = "z2";
        r.value = rep.z_pair[static_cast<std::size_t>(i * n + j)];
        records.push_back(r);
      }
    }
    auto os = open_output(dir / "covariates.csv");
    write_covariates(os, records);
  }
  {
    auto os = open_output(dir / "trips.csv");
    os << "origin,destination,timestamp,count\n";
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int t = 0; t < t_len; ++t) {
          os << panel.station_ids()[static_cast<std::size_t>(i)] << ','
             << panel.station_ids()[static_cast<std::size_t>(j)] << ','
             << format_hour_timestamp(hours[static_cast<std::size_t>(t)]) << ','
             << rep.trips.at(i, j, t) << '\n';
        }
      }
    }
  }
  RunConfig cfg;
  cfg.hour = 8;
  cfg.linear = std::vector<std::string>{"z1", "z2"};
  auto os = open_output(dir / "config.json");
  os << run_config_json(cfg) << '\n';
}

}  // namespace latentflow
