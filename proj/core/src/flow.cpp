#include "latentflow/flow.hpp"

#include <cmath>
#include <fstream>

#include "latentflow/errors.hpp"

namespace latentflow {

double FlowEstimate::out_degree(int i, int t) const {
  double s = 0.0;
  for (int j = 0; j < num_stations; ++j) s += mu(i, j, t);
  return s;
}

double FlowEstimate::in_degree(int i, int t) const {
  double s = 0.0;
  for (int k = 0; k < num_stations; ++k) s += mu(k, i, t);
  return s;
}

FlowEstimate reconstruct(const IntensityField& field) {
  const int n = field.num_stations;
  const int t_len = static_cast<int>(field.nu.size());
  FlowEstimate flow;
  flow.num_stations = n;
  flow.num_timepoints = t_len;
  const std::size_t cells = static_cast<std::size_t>(n) * n * static_cast<std::size_t>(t_len);
  flow.mu_hat.assign(cells, 0.0);
  flow.pi_hat.assign(cells, 0.0);
  flow.route_sum.resize(n, t_len);
  flow.latent_out.resize(n, t_len);
  flow.model_mu_out = field.mu_out;
  flow.model_mu_in = field.mu_in;

  for (int t = 0; t < t_len; ++t) {
    const Eigen::MatrixXd& nu = field.nu[static_cast<std::size_t>(t)];
    if (nu.rows() != n + 1 || nu.cols() != n + 1) {
      throw DataError("reconstruct: route intensities have the wrong shape");
    }
    for (int i = 0; i < n; ++i) {
      const double total = nu.row(i).head(n).sum();
      if (!(total > 0.0) || !std::isfinite(total)) {
        throw NumericalError("reconstruct: physical route intensities of station index " +
                             std::to_string(i) + " at timepoint " + std::to_string(t) +
                             " do not sum to a positive finite value");
      }
      const double latent = nu(i, n);
      flow.route_sum(i, t) = total;
      flow.latent_out(i, t) = latent;
      for (int j = 0; j < n; ++j) {
        const double pi = nu(i, j) / total;
        flow.pi_hat[flow.index(i, j, t)] = pi;
        flow.mu_hat[flow.index(i, j, t)] = nu(i, j) + latent * pi;
      }
    }
  }
  return flow;
}

ConservationCheck check_conservation(const IntensityField& field, const FlowEstimate& flow) {
  ConservationCheck check;
  const int n = flow.num_stations;
  for (int t = 0; t < flow.num_timepoints; ++t) {
    const Eigen::MatrixXd& nu = field.nu[static_cast<std::size_t>(t)];
    for (int i = 0; i < n; ++i) {
      double mass = 0.0;
      double pis = 0.0;
      double routes = 0.0;
      for (int j = 0; j < n; ++j) {
        mass += flow.mu(i, j, t);
        pis += flow.pi(i, j, t);
        routes += nu(i, j);
      }
      const double rhs = routes + nu(i, n);
      check.max_mass_error =
          std::max(check.max_mass_error, std::abs(mass - rhs) / std::max(1.0, std::abs(rhs)));
      check.max_pi_error = std::max(check.max_pi_error, std::abs(pis - 1.0));
    }
  }
  return check;
}

double EvalReport::mean_delta_t_out() const { return delta_t_out.size() ? delta_t_out.mean() : NAN; }
double EvalReport::mean_delta_t_in() const { return delta_t_in.size() ? delta_t_in.mean() : NAN; }

EvalReport evaluate(const FlowEstimate& flow, const TripTensor* truth) {
  const int n = flow.num_stations;
  const int t_len = flow.num_timepoints;
  if (truth != nullptr && (truth->num_stations != n || truth->num_timepoints != t_len)) {
    throw DataError("evaluate: observed trips are " + std::to_string(truth->num_stations) +
                    " stations x " + std::to_string(truth->num_timepoints) +
                    " timepoints, estimates are " + std::to_string(n) + " x " +
                    std::to_string(t_len));
  }
  EvalReport r;
  r.num_stations = n;
  r.num_timepoints = t_len;
  r.out_degree.resize(n, t_len);
  r.in_degree.resize(n, t_len);
  r.prob_zero.resize(t_len);
  r.prob_one.resize(t_len);
  r.prob_two_plus.resize(t_len);
  const double cells = static_cast<double>(n) * n;
  for (int t = 0; t < t_len; ++t) {
    double p0 = 0.0;
    double p1 = 0.0;
    for (int i = 0; i < n; ++i) {
      r.out_degree(i, t) = flow.out_degree(i, t);
      r.in_degree(i, t) = flow.in_degree(i, t);
      for (int j = 0; j < n; ++j) {
        const double m = flow.mu(i, j, t);
        const double e = std::exp(-m);
        p0 += e;
        p1 += m * e;
      }
    }
    r.prob_zero(t) = p0 / cells;
    r.prob_one(t) = p1 / cells;
    r.prob_two_plus(t) = 1.0 - r.prob_zero(t) - r.prob_one(t);
  }
  r.cumulated_out = r.out_degree.rowwise().sum();
  r.cumulated_in = r.in_degree.rowwise().sum();
  r.diff_hat = flow.model_mu_in - flow.model_mu_out;
  if (truth == nullptr) return r;

  r.has_truth = true;
  r.observed_out = Eigen::MatrixXd::Zero(n, t_len);
  r.observed_in = Eigen::MatrixXd::Zero(n, t_len);
  r.observed_zero = Eigen::VectorXd::Zero(t_len);
  r.observed_one = Eigen::VectorXd::Zero(t_len);
  r.observed_two_plus = Eigen::VectorXd::Zero(t_len);
  for (int t = 0; t < t_len; ++t) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const int y = truth->at(i, j, t);
        r.observed_out(i, t) += y;
        r.observed_in(j, t) += y;
        (y == 0 ? r.observed_zero : y == 1 ? r.observed_one : r.observed_two_plus)(t) += 1.0 / cells;
      }
    }
  }
  r.observed_cumulated_out = r.observed_out.rowwise().sum();
  r.observed_cumulated_in = r.observed_in.rowwise().sum();

  r.delta_t_out.resize(t_len);
  r.delta_t_in.resize(t_len);
  for (int t = 0; t < t_len; ++t) {
    const double est_out = r.out_degree.col(t).sum();
    const double est_in = r.in_degree.col(t).sum();
    r.delta_t_out(t) = std::abs(est_out - r.observed_out.col(t).sum()) / est_out;
    r.delta_t_in(t) = std::abs(est_in - r.observed_in.col(t).sum()) / est_in;
  }
  r.delta_station_out = Eigen::VectorXd::Zero(n);
  r.delta_station_in = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    int used_out = 0;
    int used_in = 0;
    for (int t = 0; t < t_len; ++t) {
      const double eo = r.out_degree(i, t);
      const double ei = r.in_degree(i, t);
      if (eo < kTinyIntensity) {
        ++r.excluded_cells;
      } else {
        r.delta_station_out(i) += std::abs(eo - r.observed_out(i, t)) / eo;
        ++used_out;
      }
      if (ei < kTinyIntensity) {
        ++r.excluded_cells;
      } else {
        r.delta_station_in(i) += std::abs(ei - r.observed_in(i, t)) / ei;
        ++used_in;
      }
    }
    r.delta_station_out(i) = used_out > 0 ? r.delta_station_out(i) / used_out : NAN;
    r.delta_station_in(i) = used_in > 0 ? r.delta_station_in(i) / used_in : NAN;
  }
  return r;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw DataError("cannot write " + file.string());
  os.precision(10);
  return os;
}

}  // namespace

void write_eval_csv(const std::filesystem::path& dir, const EvalReport& r,
                    const std::vector<std::string>& station_ids,
                    const std::vector<std::string>& time_labels) {
  if (static_cast<int>(station_ids.size()) != r.num_stations ||
      static_cast<int>(time_labels.size()) != r.num_timepoints) {
    throw DataError("evaluation labels do not match the report");
  }
  std::filesystem::create_directories(dir);
  const int n = r.num_stations;
  const int t_len = r.num_timepoints;
  {
    auto os = open_csv(dir / "network_errors.csv");
    os << "timestamp,estimated_out,estimated_in,observed_out,observed_in,delta_out,delta_in\n";
    for (int t = 0; t < t_len; ++t) {
      os << time_labels[static_cast<std::size_t>(t)] << ',' << r.out_degree.col(t).sum() << ','
         << r.in_degree.col(t).sum();
      if (r.has_truth) {
        os << ',' << r.observed_out.col(t).sum() << ',' << r.observed_in.col(t).sum() << ','
           << r.delta_t_out(t) << ',' << r.delta_t_in(t);
      } else {
        os << ",,,,";
      }
      os << '\n';
    }
  }
  if (r.has_truth) {
    auto os = open_csv(dir / "station_errors.csv");
    os << "station,mean_delta_out,mean_delta_in\n";
    for (int i = 0; i < n; ++i) {
      os << station_ids[static_cast<std::size_t>(i)] << ',' << r.delta_station_out(i) << ','
         << r.delta_station_in(i) << '\n';
    }
  }
  {
    auto os = open_csv(dir / "cumulated_degrees.csv");
    os << "station,estimated_out,estimated_in,observed_out,observed_in\n";
    for (int i = 0; i < n; ++i) {
      os << station_ids[static_cast<std::size_t>(i)] << ',' << r.cumulated_out(i) << ','
         << r.cumulated_in(i);
      if (r.has_truth) {
        os << ',' << r.observed_cumulated_out(i) << ',' << r.observed_cumulated_in(i);
      } else {
        os << ",,";
      }
      os << '\n';
    }
  }
  {
    auto os = open_csv(dir / "differences.csv");
    os << "station,timestamp,estimated_difference\n";
    for (int i = 0; i <= n; ++i) {
      const std::string id = i == n ? "<latent>" : station_ids[static_cast<std::size_t>(i)];
      for (int t = 0; t < t_len; ++t) {
        os << id << ',' << time_labels[static_cast<std::size_t>(t)] << ',' << r.diff_hat(i, t)
           << '\n';
      }
    }
  }
  {
    auto os = open_csv(dir / "count_probabilities.csv");
    os << "timestamp,p_zero,p_one,p_two_plus,observed_zero,observed_one,observed_two_plus\n";
    for (int t = 0; t < t_len; ++t) {
      os << time_labels[static_cast<std::size_t>(t)] << ',' << r.prob_zero(t) << ','
         << r.prob_one(t) << ',' << r.prob_two_plus(t);
      if (r.has_truth) {
        os << ',' << r.observed_zero(t) << ',' << r.observed_one(t) << ','
           << r.observed_two_plus(t);
      } else {
        os << ",,,";
      }
      os << '\n';
    }
  }
}

void write_flows_csv(const std::filesystem::path& file, const FlowEstimate& flow,
                     const std::vector<std::string>& station_ids,
                     const std::vector<std::string>& time_labels) {
  auto os = open_csv(file);
  os << "origin,destination,timestamp,mu_hat,pi_hat\n";
  const int n = flow.num_stations;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int t = 0; t < flow.num_timepoints; ++t) {
        os << station_ids[static_cast<std::size_t>(i)] << ','
           << station_ids[static_cast<std::size_t>(j)] << ','
           << time_labels[static_cast<std::size_t>(t)] << ',' << flow.mu(i, j, t) << ','
           << flow.pi(i, j, t) << '\n';
      }
    }
  }
}

}  // namespace latentflow
