#include "latentflow/feed_model.hpp"

#include <cmath>
#include <limits>

#include "latentflow/errors.hpp"
#include "latentflow/skellam.hpp"

namespace latentflow {

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::dyadic ? "dyadic" : "station";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "dyadic") return ModelKind::dyadic;
  if (text == "station") return ModelKind::station;
  throw ConfigError("unknown model kind '" + std::string(text) + "' (expected dyadic or station)");
}

struct SkellamFeedModel::Linear {
  Design::Predictors pred;
  Eigen::VectorXd u_out;  // N+1
  Eigen::VectorXd u_in;   // N+1

  [[nodiscard]] double base(const Design& d, int t) const {
    return d.time_block().empty() ? 0.0 : pred.time(t);
  }
  [[nodiscard]] double out(const Design& d, int a, int t) const {
    double v = u_out(a);
    if (a < d.num_stations() && !d.out_block().empty()) v += pred.out(d.out_block().row(a, t));
    return v;
  }
  [[nodiscard]] double in(const Design& d, int b, int t) const {
    double v = u_in(b);
    if (b < d.num_stations() && !d.in_block().empty()) v += pred.in(d.in_block().row(b, t));
    return v;
  }
  [[nodiscard]] double route(const Design& d, int a, int b, int t) const {
    const int n = d.num_stations();
    double v = base(d, t) + out(d, a, t) + in(d, b, t);
    if (a < n && b < n && !d.dyadic_block().empty()) {
      v += pred.dyadic(d.dyadic_block().row(a * n + b, t));
    }
    return v;
  }
};

SkellamFeedModel::SkellamFeedModel(const Design& design, const FeedPanel& panel, ModelKind kind)
    : PenalizedModel(ParamLayout(design, design.num_stations() + 1)),
      design_(design),
      panel_(panel),
      kind_(kind) {
  if (panel.num_stations() != design.num_stations() ||
      panel.num_timepoints() != design.num_timepoints()) {
    throw DataError("feed model: panel and covariates disagree on stations or timepoints");
  }
  if (kind == ModelKind::station && design.has_dyadic()) {
    throw ConfigError("station-based model cannot include dyadic covariates");
  }
}

SkellamFeedModel::Linear SkellamFeedModel::linear_parts(const Eigen::VectorXd& theta) const {
  const auto& lay = layout();
  if (theta.size() != lay.dim()) throw ConfigError("parameter vector has wrong length");
  Linear lin;
  lin.pred = design_.predictors(theta.head(lay.num_fixed()));
  const int units = lay.num_units();
  lin.u_out.resize(units);
  lin.u_in.resize(units);
  for (int a = 0; a < units; ++a) {
    lin.u_out(a) = theta(lay.u_out(a));
    lin.u_in(a) = theta(lay.u_in(a));
  }
  return lin;
}

Eigen::MatrixXd SkellamFeedModel::routes(const Linear& lin, int t) const {
  const int n = design_.num_stations();
  Eigen::MatrixXd m(n + 1, n + 1);
  for (int a = 0; a <= n; ++a) {
    for (int b = 0; b <= n; ++b) {
      m(a, b) = (a == n && b == n) ? 0.0 : std::exp(lin.route(design_, a, b, t));
    }
  }
  return m;
}

IntensitySlice SkellamFeedModel::station_margins(const Linear& lin, int t) const {
  const int n = design_.num_stations();
  const double base = lin.base(design_, t);
  Eigen::VectorXd e_out(n + 1);
  Eigen::VectorXd e_in(n + 1);
  for (int a = 0; a <= n; ++a) {
    e_out(a) = std::exp(base + lin.out(design_, a, t));
    e_in(a) = std::exp(lin.in(design_, a, t));
  }
  const double sum_in = e_in.sum();
  const double sum_out = e_out.sum();
  IntensitySlice s;
  s.mu_out = e_out * sum_in;
  s.mu_in = e_in * sum_out;
  // The latent station has no self-loop.
  s.mu_out(n) = e_out(n) * (sum_in - e_in(n));
  s.mu_in(n) = e_in(n) * (sum_out - e_out(n));
  return s;
}

IntensitySlice SkellamFeedModel::slice(const Linear& lin, int t) const {
  if (kind_ == ModelKind::station) return station_margins(lin, t);
  const Eigen::MatrixXd m = routes(lin, t);
  return {m.rowwise().sum(), m.colwise().sum().transpose()};
}

double SkellamFeedModel::eta(const Eigen::VectorXd& theta, int i, int j, int t) const {
  const int n = design_.num_stations();
  if (i < 0 || j < 0 || i > n || j > n || t < 0 || t >= design_.num_timepoints()) {
    throw ConfigError("route index out of range");
  }
  if (i == n && j == n) {
    throw ConfigError("no self-loops for the latent station");
  }
  return linear_parts(theta).route(design_, i, j, t);
}

double SkellamFeedModel::nu(const Eigen::VectorXd& theta, int i, int j, int t) const {
  return std::exp(eta(theta, i, j, t));
}

Eigen::MatrixXd SkellamFeedModel::route_intensities(const Eigen::VectorXd& theta, int t) const {
  return routes(linear_parts(theta), t);
}

IntensitySlice SkellamFeedModel::margins_dyadic(const Eigen::VectorXd& theta, int t) const {
  const Eigen::MatrixXd m = routes(linear_parts(theta), t);
  return {m.rowwise().sum(), m.colwise().sum().transpose()};
}

IntensitySlice SkellamFeedModel::margins_station(const Eigen::VectorXd& theta, int t) const {
  if (design_.has_dyadic()) {
    throw ConfigError("station-based margins are undefined with dyadic covariates");
  }
  return station_margins(linear_parts(theta), t);
}

IntensitySlice SkellamFeedModel::margins(const Eigen::VectorXd& theta, int t) const {
  return slice(linear_parts(theta), t);
}

IntensityField SkellamFeedModel::intensities(const Eigen::VectorXd& theta) const {
  const Linear lin = linear_parts(theta);
  const int n = design_.num_stations();
  const int t_len = design_.num_timepoints();
  IntensityField field;
  field.num_stations = n;
  field.mu_out.resize(n + 1, t_len);
  field.mu_in.resize(n + 1, t_len);
  field.nu.reserve(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    field.nu.push_back(routes(lin, t));
    const IntensitySlice s = slice(lin, t);
    field.mu_out.col(t) = s.mu_out;
    field.mu_in.col(t) = s.mu_in;
  }
  return field;
}

namespace {

bool usable(double mu) { return mu > 0.0 && std::isfinite(mu); }

}  // namespace

double SkellamFeedModel::loglik(const Eigen::VectorXd& theta) const {
  const Linear lin = linear_parts(theta);
  const int n = design_.num_stations();
  double total = 0.0;
  for (int t = 0; t < design_.num_timepoints(); ++t) {
    const IntensitySlice s = slice(lin, t);
    for (int i = 0; i <= n; ++i) {
      if (!panel_.observed(i, t)) continue;
      if (!usable(s.mu_in(i)) || !usable(s.mu_out(i))) {
        return -std::numeric_limits<double>::infinity();
      }
      total += skellam::skellam_logpmf({s.mu_in(i), s.mu_out(i)}, panel_.diff(i, t));
    }
  }
  return total;
}

double SkellamFeedModel::loglik_gradient(const Eigen::VectorXd& theta,
                                         Eigen::VectorXd& grad) const {
  const auto& lay = layout();
  const Linear lin = linear_parts(theta);
  const int n = design_.num_stations();
  const int units = n + 1;
  const auto& tb = design_.time_block();
  const auto& ob = design_.out_block();
  const auto& ib = design_.in_block();
  const auto& db = design_.dyadic_block();

  grad = Eigen::VectorXd::Zero(lay.dim());
  Eigen::VectorXd g1(units);
  Eigen::VectorXd g2(units);
  Eigen::VectorXd row_w(units);
  Eigen::VectorXd col_w(units);
  Eigen::VectorXd pair_w;
  if (!db.empty()) pair_w.resize(static_cast<Eigen::Index>(n) * n);
  double total = 0.0;

  auto scatter = [&](const ScopeBlock& block, const Eigen::VectorXd& contrib) {
    for (std::size_t c = 0; c < block.columns.size(); ++c) {
      grad(block.columns[c]) += contrib(static_cast<Eigen::Index>(c));
    }
  };

  for (int t = 0; t < design_.num_timepoints(); ++t) {
    Eigen::MatrixXd m;
    IntensitySlice s;
    if (kind_ == ModelKind::dyadic) {
      m = routes(lin, t);
      s = {m.rowwise().sum(), m.colwise().sum().transpose()};
    } else {
      s = station_margins(lin, t);
    }

    for (int i = 0; i < units; ++i) {
      g1(i) = 0.0;
      g2(i) = 0.0;
      if (!panel_.observed(i, t)) continue;
      if (!usable(s.mu_in(i)) || !usable(s.mu_out(i))) {
        grad.setConstant(std::numeric_limits<double>::quiet_NaN());
        return -std::numeric_limits<double>::infinity();
      }
      const auto dv = skellam::skellam_derivs({s.mu_in(i), s.mu_out(i)}, panel_.diff(i, t));
      total += dv.ll;
      g1(i) = dv.d_theta1;
      g2(i) = dv.d_theta2;
    }

    // Route (a, b) feeds mu_out(a) and mu_in(b): weight nu_ab * (g1_b + g2_a).
    if (kind_ == ModelKind::dyadic) {
      Eigen::MatrixXd w = m;
      for (int a = 0; a < units; ++a) {
        for (int b = 0; b < units; ++b) w(a, b) *= g1(b) + g2(a);
      }
      row_w = w.rowwise().sum();
      col_w = w.colwise().sum().transpose();
      if (!db.empty()) {
        for (int a = 0; a < n; ++a) {
          for (int b = 0; b < n; ++b) pair_w(a * n + b) = w(a, b);
        }
      }
    } else {
      const double base = lin.base(design_, t);
      Eigen::VectorXd e_out(units);
      Eigen::VectorXd e_in(units);
      for (int a = 0; a < units; ++a) {
        e_out(a) = std::exp(base + lin.out(design_, a, t));
        e_in(a) = std::exp(lin.in(design_, a, t));
      }
      const double sum_in = e_in.sum();
      const double sum_out = e_out.sum();
      const double in_g1 = e_in.dot(g1);
      const double out_g2 = e_out.dot(g2);
      for (int a = 0; a < units; ++a) {
        const bool latent = a == n;
        const double in_total = latent ? sum_in - e_in(n) : sum_in;
        const double in_weighted = latent ? in_g1 - e_in(n) * g1(n) : in_g1;
        row_w(a) = e_out(a) * (in_weighted + g2(a) * in_total);
        const double out_total = latent ? sum_out - e_out(n) : sum_out;
        const double out_weighted = latent ? out_g2 - e_out(n) * g2(n) : out_g2;
        col_w(a) = e_in(a) * (out_weighted + g1(a) * out_total);
      }
    }

    if (!tb.empty()) scatter(tb, tb.rows.row(tb.row(0, t)).transpose() * row_w.sum());
    if (!ob.empty()) {
      scatter(ob, ob.rows.middleRows(ob.row(0, t), n).transpose() * row_w.head(n));
    }
    if (!ib.empty()) {
      scatter(ib, ib.rows.middleRows(ib.row(0, t), n).transpose() * col_w.head(n));
    }
    if (!db.empty()) {
      scatter(db, db.rows.middleRows(db.row(0, t), static_cast<Eigen::Index>(n) * n).transpose() *
                      pair_w);
    }
    for (int a = 0; a < units; ++a) {
      grad(lay.u_out(a)) += row_w(a);
      grad(lay.u_in(a)) += col_w(a);
    }
  }
  return total;
}

Eigen::MatrixXd SkellamFeedModel::loglik_hessian(const Eigen::VectorXd& theta) const {
  const auto& lay = layout();
  const Linear lin = linear_parts(theta);
  const int n = design_.num_stations();
  const int units = n + 1;
  const int q = lay.num_fixed();
  const int dim = lay.dim();

  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd grad_in(dim, units);
  Eigen::MatrixXd grad_out(dim, units);
  Eigen::VectorXd f(q);
  Eigen::VectorXd g1(units), g2(units), g11(units), g22(units), g12(units);

  for (int t = 0; t < design_.num_timepoints(); ++t) {
    // Both parameterizations share the same route intensities.
    const Eigen::MatrixXd m = routes(lin, t);
    const Eigen::VectorXd mu_out = m.rowwise().sum();
    const Eigen::VectorXd mu_in = m.colwise().sum().transpose();

    for (int i = 0; i < units; ++i) {
      g1(i) = g2(i) = g11(i) = g22(i) = g12(i) = 0.0;
      if (!panel_.observed(i, t)) continue;
      if (!usable(mu_in(i)) || !usable(mu_out(i))) {
        throw NumericalError("Hessian undefined: intensity at station index " + std::to_string(i) +
                             ", timepoint " + std::to_string(t) + " is not positive and finite");
      }
      const auto dv = skellam::skellam_derivs({mu_in(i), mu_out(i)}, panel_.diff(i, t));
      g1(i) = dv.d_theta1;
      g2(i) = dv.d_theta2;
      g11(i) = dv.d2_theta1;
      g22(i) = dv.d2_theta2;
      g12(i) = dv.d2_cross;
    }

    grad_in.setZero();
    grad_out.setZero();
    for (int a = 0; a < units; ++a) {
      for (int b = 0; b < units; ++b) {
        if (a == n && b == n) continue;
        const double nu = m(a, b);
        const double w = nu * (g1(b) + g2(a));
        f.setZero();
        design_.add_route_row(a, b, t, 1.0, f);
        const int ua = lay.u_out(a);
        const int ub = lay.u_in(b);

        grad_in.col(b).head(q) += nu * f;
        grad_in(ua, b) += nu;
        grad_in(ub, b) += nu;
        grad_out.col(a).head(q) += nu * f;
        grad_out(ua, a) += nu;
        grad_out(ub, a) += nu;

        // Second derivative of the route intensity itself: nu * x x^T.
        hess.topLeftCorner(q, q).noalias() += w * f * f.transpose();
        hess.block(0, ua, q, 1) += w * f;
        hess.block(0, ub, q, 1) += w * f;
        hess.block(ua, 0, 1, q) += w * f.transpose();
        hess.block(ub, 0, 1, q) += w * f.transpose();
        hess(ua, ua) += w;
        hess(ub, ub) += w;
        hess(ua, ub) += w;
        hess(ub, ua) += w;
      }
    }
    hess.noalias() += grad_in * g11.asDiagonal() * grad_in.transpose();
    hess.noalias() += grad_out * g22.asDiagonal() * grad_out.transpose();
    const Eigen::MatrixXd cross = grad_in * g12.asDiagonal() * grad_out.transpose();
    hess += cross + cross.transpose();
  }
  return 0.5 * (hess + hess.transpose());
}

Eigen::VectorXd SkellamFeedModel::initial_params() const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout().dim());
  if (design_.intercept_column() >= 0) {
    theta(design_.intercept_column()) = std::log(panel_.mean_abs_difference() + 0.01);
  }
  return theta;
}

std::string SkellamFeedModel::locate_nonfinite(const Eigen::VectorXd& theta) const {
  const Linear lin = linear_parts(theta);
  const int n = design_.num_stations();
  for (int t = 0; t < design_.num_timepoints(); ++t) {
    const IntensitySlice s = slice(lin, t);
    for (int i = 0; i <= n; ++i) {
      if (!panel_.observed(i, t)) continue;
      const std::string where =
          "station " + (i == n ? std::string("<latent>") : panel_.station_ids()[static_cast<std::size_t>(i)]) +
          " at " + panel_.time_labels()[static_cast<std::size_t>(t)];
      if (!usable(s.mu_in(i)) || !usable(s.mu_out(i))) {
        return where + ": intensities (" + std::to_string(s.mu_in(i)) + ", " +
               std::to_string(s.mu_out(i)) + ")";
      }
      const double ll = skellam::skellam_logpmf({s.mu_in(i), s.mu_out(i)}, panel_.diff(i, t));
      if (!std::isfinite(ll)) return where + ": log-likelihood " + std::to_string(ll);
    }
  }
  return "no non-finite cell found";
}

}  // namespace latentflow
