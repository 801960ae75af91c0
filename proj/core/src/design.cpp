#include "latentflow/design.hpp"

#include "latentflow/errors.hpp"

namespace latentflow {
namespace {

struct Source {
  int column = 0;
  int width = 1;
  const CovariateValues* values = nullptr;  // nullptr: intercept
  const SmoothTermBasis* basis = nullptr;
};

ScopeBlock assemble(const std::vector<Source>& sources, Scope scope, int n, int t_len) {
  ScopeBlock block;
  if (sources.empty()) {
    block.rows.resize(0, 0);
    return block;
  }
  block.units = scope == Scope::time ? 1 : scope == Scope::dyadic ? n * n : n;
  block.time_varying = scope == Scope::time;
  int width = 0;
  for (const auto& s : sources) {
    if (s.values != nullptr && s.values->time_varying()) block.time_varying = true;
    for (int c = 0; c < s.width; ++c) block.columns.push_back(s.column + c);
    width += s.width;
  }
  const int periods = block.time_varying ? t_len : 1;
  block.rows.resize(static_cast<Eigen::Index>(block.units) * periods, width);

  for (int t = 0; t < periods; ++t) {
    for (int unit = 0; unit < block.units; ++unit) {
      int i = 0;
      int j = 0;
      if (scope == Scope::station_out) i = unit;
      if (scope == Scope::station_in) j = unit;
      if (scope == Scope::dyadic) {
        i = unit / n;
        j = unit % n;
      }
      const Eigen::Index r = block.row(unit, t);
      int col = 0;
      for (const auto& s : sources) {
        const double x = s.values == nullptr ? 1.0 : s.values->at(i, j, t);
        if (s.basis != nullptr) {
          block.rows.block(r, col, 1, s.width) = s.basis->evaluate_row(x).transpose();
        } else {
          block.rows(r, col) = x;
        }
        col += s.width;
      }
    }
  }
  return block;
}

}  // namespace

Design::Design(const CovariateSet& covariates)
    : num_stations_(covariates.num_stations()), num_timepoints_(covariates.num_timepoints()) {
  std::vector<Source> by_scope[4];
  auto slot = [](Scope s) { return static_cast<int>(s); };

  if (covariates.intercept()) {
    intercept_column_ = 0;
    names_.emplace_back("(Intercept)");
    linear_scopes_.push_back(Scope::time);
    by_scope[slot(Scope::time)].push_back({0, 1, nullptr, nullptr});
  }
  for (const auto& term : covariates.linear()) {
    const int column = static_cast<int>(names_.size());
    names_.push_back(term.name);
    linear_scopes_.push_back(term.values.scope());
    by_scope[slot(term.values.scope())].push_back({column, 1, &term.values, nullptr});
  }
  num_linear_ = static_cast<int>(names_.size());

  bases_.reserve(covariates.smooth().size());
  for (const auto& term : covariates.smooth()) {
    bases_.emplace_back(term.spec, term.values.values());
  }
  for (std::size_t m = 0; m < covariates.smooth().size(); ++m) {
    const auto& term = covariates.smooth()[m];
    const auto& basis = bases_[m];
    const int offset = static_cast<int>(names_.size());
    for (int r = 0; r < basis.size(); ++r) {
      names_.push_back(term.spec.name + "." + std::to_string(r + 1));
    }
    smooth_.push_back({term.spec.name, offset, basis.size(), basis.penalty_rank(), basis.penalty()});
    smooth_scopes_.push_back(term.values.scope());
    by_scope[slot(term.values.scope())].push_back({offset, basis.size(), &term.values, &basis});
  }

  const int n = num_stations_;
  const int t_len = num_timepoints_;
  time_ = assemble(by_scope[slot(Scope::time)], Scope::time, n, t_len);
  out_ = assemble(by_scope[slot(Scope::station_out)], Scope::station_out, n, t_len);
  in_ = assemble(by_scope[slot(Scope::station_in)], Scope::station_in, n, t_len);
  dyadic_ = assemble(by_scope[slot(Scope::dyadic)], Scope::dyadic, n, t_len);
}

namespace {

Eigen::VectorXd block_predictor(const ScopeBlock& block,
                                const Eigen::Ref<const Eigen::VectorXd>& fixed) {
  if (block.empty()) return {};
  Eigen::VectorXd coef(static_cast<Eigen::Index>(block.columns.size()));
  for (std::size_t c = 0; c < block.columns.size(); ++c) {
    coef(static_cast<Eigen::Index>(c)) = fixed(block.columns[c]);
  }
  return block.rows * coef;
}

}  // namespace

Design::Predictors Design::predictors(const Eigen::Ref<const Eigen::VectorXd>& fixed) const {
  if (fixed.size() != num_fixed()) {
    throw ConfigError("design: fixed-effect vector has wrong length");
  }
  return {block_predictor(time_, fixed), block_predictor(out_, fixed), block_predictor(in_, fixed),
          block_predictor(dyadic_, fixed)};
}

double Design::route_predictor(const Predictors& p, int a, int b, int t) const {
  const int n = num_stations_;
  double eta = time_.empty() ? 0.0 : p.time(t);
  if (a < n && !out_.empty()) eta += p.out(out_.row(a, t));
  if (b < n && !in_.empty()) eta += p.in(in_.row(b, t));
  if (a < n && b < n && !dyadic_.empty()) eta += p.dyadic(dyadic_.row(a * n + b, t));
  return eta;
}

void Design::add_route_row(int a, int b, int t, double weight,
                           Eigen::Ref<Eigen::VectorXd> out) const {
  const int n = num_stations_;
  auto add = [&](const ScopeBlock& block, int unit) {
    const Eigen::Index r = block.row(unit, t);
    for (std::size_t c = 0; c < block.columns.size(); ++c) {
      out(block.columns[c]) += weight * block.rows(r, static_cast<Eigen::Index>(c));
    }
  };
  if (!time_.empty()) add(time_, 0);
  if (a < n && !out_.empty()) add(out_, a);
  if (b < n && !in_.empty()) add(in_, b);
  if (a < n && b < n && !dyadic_.empty()) add(dyadic_, a * n + b);
}

}  // namespace latentflow
