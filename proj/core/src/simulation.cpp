#include "latentflow/simulation.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "latentflow/design.hpp"
#include "latentflow/errors.hpp"

namespace latentflow {

SimConfig SimConfig::reference(bool full_scale) {
  SimConfig cfg;
  if (full_scale) {
    cfg.num_timepoints = 500;
    cfg.replications = 250;
  }
  return cfg;
}

void SimConfig::validate() const {
  if (num_stations < 2 || num_timepoints < 1 || replications < 1) {
    throw ConfigError("simulation: need at least 2 stations, 1 timepoint and 1 replication");
  }
  if (!(carryover_prob >= 0.0 && carryover_prob <= 1.0)) {
    throw ConfigError("simulation: carryover probability must lie in [0, 1]");
  }
  if (!(prev_scale >= 0.0) || !std::isfinite(prev_scale)) {
    throw ConfigError("simulation: previous-hour scale must be non-negative");
  }
  if (!beta.allFinite()) throw ConfigError("simulation: beta must be finite");
  Eigen::LLT<Eigen::Matrix2d> llt(sigma);
  if (sigma(0, 1) != sigma(1, 0) || llt.info() != Eigen::Success) {
    throw ConfigError("simulation: sigma must be symmetric positive definite");
  }
}

double SimReplication::expected_difference(const SimConfig& cfg, int i, int t) const {
  const int n = trips.num_stations;
  if (i == n) {
    double total = 0.0;
    for (int k = 0; k < n; ++k) total -= expected_difference(cfg, k, t);
    return total;
  }
  double in = 0.0;
  double out = 0.0;
  for (int j = 0; j < n; ++j) {
    in += mu_at(j, i, t);
    out += mu_at(i, j, t);
  }
  const double p = cfg.carryover_prob;
  return (1.0 - p) * in + p * cfg.prev_scale * in - out;
}

SimReplication generate(const SimConfig& cfg, int index) {
  cfg.validate();
  const int n = cfg.num_stations;
  const int t_len = cfg.num_timepoints;
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu),
                    static_cast<std::uint32_t>(cfg.seed >> 32), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimReplication rep;
  rep.index = index;
  rep.z_time.resize(static_cast<std::size_t>(t_len));
  for (auto& z : rep.z_time) z = normal(rng);
  rep.z_pair.assign(static_cast<std::size_t>(n * n), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double z = normal(rng);
      rep.z_pair[static_cast<std::size_t>(i * n + j)] = z;
      rep.z_pair[static_cast<std::size_t>(j * n + i)] = z;
    }
  }
  const Eigen::Matrix2d chol = cfg.sigma.llt().matrixL();
  rep.u.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d e(normal(rng), normal(rng));
    rep.u.row(i) = (chol * e).transpose();
  }

  rep.trips = TripTensor(n, t_len);
  rep.previous = TripTensor(n, t_len);
  rep.completed = TripTensor(n, t_len);
  rep.carried = TripTensor(n, t_len);
  rep.mu.assign(rep.trips.counts.size(), 0.0);
  const double p = cfg.carryover_prob;
  std::vector<int> diffs(static_cast<std::size_t>(n * t_len), 0);
  for (int t = 0; t < t_len; ++t) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double mu = std::exp(cfg.beta(0) + cfg.beta(1) * rep.z_time[static_cast<std::size_t>(t)] +
                                   cfg.beta(2) * rep.z_pair[static_cast<std::size_t>(i * n + j)] +
                                   rep.u(i, 0) + rep.u(j, 1));
        const std::size_t k = rep.trips.index(i, j, t);
        rep.mu[k] = mu;
        const int y = std::poisson_distribution<int>(mu)(rng);
        const double prev_mu = cfg.prev_scale * mu;
        const int y_prev = prev_mu > 0.0 ? std::poisson_distribution<int>(prev_mu)(rng) : 0;
        const int done = std::binomial_distribution<int>(y, 1.0 - p)(rng);
        const int carry = std::binomial_distribution<int>(y_prev, p)(rng);
        rep.trips.counts[k] = y;
        rep.previous.counts[k] = y_prev;
        rep.completed.counts[k] = done;
        rep.carried.counts[k] = carry;
        diffs[static_cast<std::size_t>(j * t_len + t)] += done + carry;
        diffs[static_cast<std::size_t>(i * t_len + t)] -= y;
      }
    }
  }

  std::vector<std::string> ids;
  // Zero-padded so that lexicographic order matches the index order.
  const std::size_t width = std::to_string(n).size();
  for (int i = 0; i < n; ++i) {
    const std::string num = std::to_string(i + 1);
    ids.push_back("S" + std::string(width - num.size(), '0') + num);
  }
  std::vector<std::string> labels;
  for (int t = 0; t < t_len; ++t) labels.push_back(std::to_string(t));
  rep.panel = FeedPanel::from_differences(std::move(ids), std::move(labels), std::move(diffs));

  rep.covariates = std::make_unique<CovariateSet>(n, t_len);
  rep.covariates->add_linear("z1", CovariateValues::time(rep.z_time));
  rep.covariates->add_linear("z2", CovariateValues::dyadic(n, t_len, rep.z_pair));
  return rep;
}

std::vector<double> StudyResult::estimates(const std::string& parameter) const {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.parameter == parameter) out.push_back(r.estimate);
  }
  return out;
}

StudyResult run_study(const SimConfig& cfg, ModelKind kind, const EmConfig& em,
                      const std::function<void(int, const FitResult*)>& progress) {
  cfg.validate();
  if (kind == ModelKind::station) {
    throw ConfigError("simulation study includes a dyadic covariate; use the dyadic model");
  }
  StudyResult study;
  const char* beta_names[] = {"(Intercept)", "z1", "z2"};
  for (int r = 0; r < cfg.replications; ++r) {
    const SimReplication rep = generate(cfg, r);
    const Design design(*rep.covariates);
    const SkellamFeedModel model(design, rep.panel, kind);
    ++study.fits;
    try {
      const FitResult res = fit(model, em);
      if (res.converged) ++study.converged;
      for (int k = 0; k < 3; ++k) {
        study.rows.push_back({r, beta_names[k], res.theta(k), cfg.beta(k), res.standard_errors(k)});
      }
      std::vector<int> physical(static_cast<std::size_t>(cfg.num_stations));
      for (int i = 0; i < cfg.num_stations; ++i) physical[static_cast<std::size_t>(i)] = i;
      const Eigen::Matrix2d s =
          update_sigma(model.layout(), res.theta, res.fisher_inverse.covariance, physical);
      const double nan = std::nan("");
      study.rows.push_back({r, "sigma_out", s(0, 0), cfg.sigma(0, 0), nan});
      study.rows.push_back({r, "sigma_cross", s(0, 1), cfg.sigma(0, 1), nan});
      study.rows.push_back({r, "sigma_in", s(1, 1), cfg.sigma(1, 1), nan});
      const int w = cfg.num_stations;
      study.rows.push_back({r, "u_w_out", res.theta(model.layout().u_out(w)), nan, nan});
      study.rows.push_back({r, "u_w_in", res.theta(model.layout().u_in(w)), nan, nan});
      if (progress) progress(r, &res);
    } catch (const NumericalError& e) {
      ++study.failed;
      study.messages.push_back("replication " + std::to_string(r) + ": " + e.what());
      if (progress) progress(r, nullptr);
    }
  }
  return study;
}

void write_study_csv(std::ostream& os, const std::string& scenario, const StudyResult& result) {
  os << "scenario,replication,parameter,estimate,truth,std_error\n";
  const auto old = os.precision(10);
  for (const auto& r : result.rows) {
    os << scenario << ',' << r.replication << ',' << r.parameter << ',' << r.estimate << ',';
    if (std::isfinite(r.truth)) os << r.truth;
    os << ',';
    if (std::isfinite(r.standard_error)) os << r.standard_error;
    os << '\n';
  }
  os.precision(old);
}

}  // namespace latentflow
