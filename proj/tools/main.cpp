// latentflow command-line tool: fit, simulate, reconstruct, evaluate.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latentflow/design.hpp"
#include "latentflow/em.hpp"
#include "latentflow/errors.hpp"
#include "latentflow/feed_model.hpp"
#include "latentflow/flow.hpp"
#include "latentflow/io.hpp"
#include "latentflow/simulation.hpp"

namespace fs = std::filesystem;
using namespace latentflow;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct DataArgs {
  std::string feeds;
  std::string covariates;
  std::string config;
  std::optional<int> hour;
  std::string model;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_data_options(CLI::App* cmd, DataArgs& args) {
  cmd->add_option("--feeds", args.feeds, "Station feed CSV (station_id,timestamp,fill[,capacity])")
      ->required();
  cmd->add_option("--covariates", args.covariates,
                  "Covariate CSV (scope,timestamp,station,station_to,name,value)");
  cmd->add_option("--config", args.config, "JSON run configuration");
  cmd->add_option("--hour", args.hour, "Hour of day 1..24 to model")->check(CLI::Range(1, 24));
  cmd->add_option("--model", args.model, "Model kind")
      ->check(CLI::IsMember({"dyadic", "station"}));
  cmd->add_option("--out", args.out, "Output directory");
  cmd->add_option("--seed", args.seed, "Seed for band sampling");
}

RunConfig apply_overrides(RunConfig cfg, const DataArgs& args) {
  if (args.hour) cfg.hour = *args.hour;
  if (!args.model.empty()) cfg.model_kind = parse_model_kind(args.model);
  if (!args.out.empty()) cfg.output_dir = args.out;
  if (args.seed) cfg.em.seed = *args.seed;
  cfg.validate();
  return cfg;
}

// A fitted model together with everything it references.
struct FitRun {
  Dataset data;
  std::unique_ptr<Design> design;
  std::unique_ptr<SkellamFeedModel> model;
  FitResult fit;
  std::optional<double> alpha;
};

std::unique_ptr<FitRun> prepare(const FeedTable& feeds, const std::vector<CovariateRecord>& records,
                                const RunConfig& cfg, std::optional<double> alpha) {
  auto run = std::make_unique<FitRun>();
  run->data = ingest(feeds, records, cfg, alpha);
  run->design = std::make_unique<Design>(*run->data.covariates);
  run->model = std::make_unique<SkellamFeedModel>(*run->design, run->data.panel, cfg.model_kind);
  if (cfg.distance) run->alpha = alpha.value_or(cfg.distance->alpha);
  return run;
}

// Ingestion warnings go first so fit.json carries them with the fit's own.
void merge_data_warnings(FitRun& run) {
  run.fit.warnings.insert(run.fit.warnings.begin(), run.data.warnings.begin(),
                          run.data.warnings.end());
}

void report_fit(const FitRun& run) {
  const auto& f = run.fit;
  std::cerr << "fit: " << run.data.panel.num_stations() << " stations, "
            << run.data.panel.num_timepoints() << " timepoints, " << f.trace.size()
            << " outer iterations, " << (f.converged ? "converged" : "not converged")
            << (f.diverged ? " (diverged)" : "") << ", loglik " << f.loglik << '\n';
  for (const auto& w : f.warnings) std::cerr << "warning: " << w << '\n';
}

std::unique_ptr<FitRun> fit_with_profile(const FeedTable& feeds,
                                         const std::vector<CovariateRecord>& records,
                                         const RunConfig& cfg, const fs::path& out) {
  if (!cfg.distance || cfg.distance->alpha_grid.empty()) {
    auto run = prepare(feeds, records, cfg, std::nullopt);
    run->fit = fit(*run->model, cfg.em);
    merge_data_warnings(*run);
    return run;
  }
  fs::create_directories(out);
  std::ofstream profile(out / "alpha_profile.csv");
  profile.precision(12);
  profile << "alpha,loglik,penalized_loglik,converged\n";
  std::unique_ptr<FitRun> best;
  for (double alpha : cfg.distance->alpha_grid) {
    auto run = prepare(feeds, records, cfg, alpha);
    run->fit = fit(*run->model, cfg.em);
    profile << alpha << ',' << run->fit.loglik << ',' << run->fit.penalized_loglik << ','
            << (run->fit.converged ? 1 : 0) << '\n';
    std::cerr << "alpha " << alpha << ": loglik " << run->fit.loglik << '\n';
    const bool usable = run->fit.converged && !run->fit.diverged;
    const bool best_usable = best && best->fit.converged && !best->fit.diverged;
    if (!best || (usable && !best_usable) ||
        (usable == best_usable && run->fit.loglik > best->fit.loglik)) {
      best = std::move(run);
    }
  }
  std::cerr << "selected alpha " << *best->alpha << '\n';
  merge_data_warnings(*best);
  return best;
}

std::vector<CovariateRecord> load_records(const std::string& path) {
  if (path.empty()) return {};
  return read_covariates(fs::path(path));
}

int cmd_fit(const DataArgs& args) {
  RunConfig cfg = args.config.empty() ? RunConfig{} : load_run_config(args.config);
  cfg = apply_overrides(cfg, args);
  const auto feeds = read_feeds(fs::path(args.feeds));
  const auto records = load_records(args.covariates);
  const fs::path out = cfg.output_dir;
  auto run = fit_with_profile(feeds, records, cfg, out);
  report_fit(*run);
  write_fit_outputs(out, *run->model, run->fit, cfg, run->alpha);
  std::cout << std::left << std::setw(16) << "term" << std::right << std::setw(14) << "estimate"
            << std::setw(14) << "std.error" << '\n';
  const auto& layout = run->model->layout();
  for (int c = 0; c < layout.num_linear(); ++c) {
    std::cout << std::left << std::setw(16) << layout.fixed_names()[static_cast<std::size_t>(c)]
              << std::right << std::setw(14) << std::setprecision(5) << run->fit.theta(c)
              << std::setw(14) << run->fit.standard_errors(c) << '\n';
  }
  std::cerr << "wrote " << out.string() << '\n';
  return run->fit.diverged ? kNumerical : kOk;
}

struct FlowArgs {
  DataArgs data;
  std::string fit_dir;
  std::string trips;
};

// Fitted model for reconstruct/evaluate: read from a fit directory or fitted afresh.
std::unique_ptr<FitRun> fitted_model(const FlowArgs& args, RunConfig& cfg) {
  const auto feeds = read_feeds(fs::path(args.data.feeds));
  const auto records = load_records(args.data.covariates);
  if (args.fit_dir.empty()) {
    cfg = apply_overrides(args.data.config.empty() ? RunConfig{} : load_run_config(args.data.config),
                          args.data);
    auto run = fit_with_profile(feeds, records, cfg, cfg.output_dir);
    report_fit(*run);
    return run;
  }
  const SavedFit saved = read_fit_outputs(args.fit_dir);
  cfg = apply_overrides(args.data.config.empty() ? saved.config : load_run_config(args.data.config),
                        args.data);
  auto run = prepare(feeds, records, cfg, saved.alpha);
  if (saved.theta.size() != run->model->layout().dim()) {
    throw DataError("fit in " + args.fit_dir + " has " + std::to_string(saved.theta.size()) +
                    " parameters, the data and configuration imply " +
                    std::to_string(run->model->layout().dim()));
  }
  run->fit.theta = saved.theta;
  run->fit.vc = saved.vc;
  for (const auto& w : run->data.warnings) std::cerr << "warning: " << w << '\n';
  return run;
}

int cmd_reconstruct(const FlowArgs& args) {
  RunConfig cfg;
  auto run = fitted_model(args, cfg);
  const auto field = run->model->intensities(run->fit.theta);
  const auto flow = reconstruct(field);
  const auto check = check_conservation(field, flow);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  write_flows_csv(out / "flows.csv", flow, run->data.panel.station_ids(),
                  run->data.panel.time_labels());
  std::cerr << "conservation: max mass error " << check.max_mass_error << ", max pi error "
            << check.max_pi_error << '\n';
  std::cerr << "wrote " << (out / "flows.csv").string() << '\n';
  return kOk;
}

int cmd_evaluate(const FlowArgs& args) {
  RunConfig cfg;
  auto run = fitted_model(args, cfg);
  const auto flow = reconstruct(run->model->intensities(run->fit.theta));
  std::optional<TripTensor> truth;
  if (!args.trips.empty()) {
    truth = read_trips(fs::path(args.trips), run->data.panel.station_ids(),
                       run->data.timepoint_hours);
  }
  const auto report = evaluate(flow, truth ? &*truth : nullptr);
  const fs::path out = cfg.output_dir;
  write_eval_csv(out, report, run->data.panel.station_ids(), run->data.panel.time_labels());
  if (report.has_truth) {
    std::cout << "mean network relative error: out " << report.mean_delta_t_out() << ", in "
              << report.mean_delta_t_in() << '\n';
    if (report.excluded_cells > 0) {
      std::cerr << report.excluded_cells << " station cells with estimates below "
                << kTinyIntensity << " left out of station means\n";
    }
  }
  std::cerr << "wrote evaluation tables to " << out.string() << '\n';
  return kOk;
}

struct SimArgs {
  std::string scenario = "reference";
  bool full_scale = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  std::optional<int> timepoints;
  std::optional<int> stations;
  std::string out = "latentflow-sim";
  bool write_data = false;
  bool no_fit = false;
};

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int cmd_simulate(const SimArgs& args) {
  SimConfig cfg = SimConfig::reference(args.full_scale);
  if (args.scenario != "reference") {
    std::ifstream is(args.scenario);
    if (!is) throw ConfigError("unknown scenario '" + args.scenario + "' (use 'reference' or a JSON file)");
    std::stringstream text;
    text << is.rdbuf();
    cfg = parse_sim_config(text.str(), cfg);
  }
  if (args.seed) cfg.seed = *args.seed;
  if (args.replications) cfg.replications = *args.replications;
  if (args.timepoints) cfg.num_timepoints = *args.timepoints;
  if (args.stations) cfg.num_stations = *args.stations;
  cfg.validate();

  const fs::path out = args.out;
  fs::create_directories(out);
  {
    std::ofstream os(out / "scenario.json");
    os << sim_config_json(cfg) << '\n';
  }
  std::cerr << "scenario " << cfg.name << ": N = " << cfg.num_stations
            << ", T = " << cfg.num_timepoints << ", S = " << cfg.replications << ", beta = ("
            << cfg.beta(0) << ", " << cfg.beta(1) << ", " << cfg.beta(2) << ")\n";
  if (args.write_data) {
    write_simulated_data(out / "data", generate(cfg, 0));
    std::cerr << "wrote replication 0 data to " << (out / "data").string() << '\n';
  }
  if (args.no_fit) return kOk;

  const auto study = run_study(cfg, ModelKind::dyadic, EmConfig{}, [&](int r, const FitResult* f) {
    std::cerr << "replication " << r + 1 << "/" << cfg.replications << ": "
              << (f == nullptr ? "failed" : f->converged ? "converged" : "not converged") << '\n';
  });
  {
    std::ofstream os(out / "study.csv");
    write_study_csv(os, cfg.name, study);
  }
  std::ofstream summary(out / "study_summary.csv");
  summary.precision(10);
  summary << "parameter,truth,median,mean,fits\n";
  std::cout << std::left << std::setw(14) << "parameter" << std::right << std::setw(10) << "truth"
            << std::setw(12) << "median" << '\n';
  for (const char* p : {"(Intercept)", "z1", "z2", "sigma_out", "sigma_cross", "sigma_in"}) {
    const auto est = study.estimates(p);
    double truth = std::nan("");
    for (const auto& row : study.rows) {
      if (row.parameter == p) {
        truth = row.truth;
        break;
      }
    }
    double mean = 0.0;
    for (double e : est) mean += e / static_cast<double>(est.size());
    summary << p << ',' << truth << ',' << median(est) << ',' << mean << ',' << est.size() << '\n';
    std::cout << std::left << std::setw(14) << p << std::right << std::setw(10) << truth
              << std::setw(12) << std::setprecision(4) << median(est) << '\n';
  }
  for (const auto& m : study.messages) std::cerr << "warning: " << m << '\n';
  std::cerr << study.converged << "/" << study.fits << " fits converged; wrote "
            << out.string() << '\n';
  return study.failed == study.fits ? kNumerical : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent origin-destination flows from station fill differences"};
  app.require_subcommand(1);

  DataArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the Skellam feed model");
  add_data_options(fit_cmd, fit_args);

  FlowArgs rec_args;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Reconstruct origin-destination flows");
  add_data_options(rec_cmd, rec_args.data);
  rec_cmd->add_option("--fit", rec_args.fit_dir, "Directory written by 'fit' (refits when absent)");

  FlowArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Flow metrics, optionally against observed trips");
  add_data_options(eval_cmd, eval_args.data);
  eval_cmd->add_option("--fit", eval_args.fit_dir, "Directory written by 'fit' (refits when absent)");
  eval_cmd->add_option("--trips", eval_args.trips, "Observed trips CSV (origin,destination,timestamp,count)");

  SimArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the parameter-recovery study");
  sim_cmd->add_option("--scenario", sim_args.scenario, "'reference' or a JSON scenario file");
  sim_cmd->add_flag("--full-scale", sim_args.full_scale, "250 replications of 500 timepoints");
  sim_cmd->add_option("--seed", sim_args.seed, "Base seed");
  sim_cmd->add_option("--replications", sim_args.replications, "Number of replications")
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--timepoints", sim_args.timepoints, "Timepoints per replication")
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--stations", sim_args.stations, "Stations per network")
      ->check(CLI::Range(2, 100000));
  sim_cmd->add_option("--out", sim_args.out, "Output directory");
  sim_cmd->add_flag("--write-data", sim_args.write_data,
                    "Also write replication 0 as feeds/covariates/trips CSV");
  sim_cmd->add_flag("--no-fit", sim_args.no_fit, "Only generate; skip the study");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit_args);
    if (rec_cmd->parsed()) return cmd_reconstruct(rec_args);
    if (eval_cmd->parsed()) return cmd_evaluate(eval_args);
    if (sim_cmd->parsed()) return cmd_simulate(sim_args);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
