#include "medtransport/nuisance.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>

#include "medtransport/error.hpp"
#include "medtransport/kernels.hpp"
#include "medtransport/random.hpp"

namespace medtransport::nuisance {

std::string to_string(Column c) {
  switch (c) {
    case Column::s: return "S";
    case Column::a: return "A";
    case Column::w: return "W";
    case Column::r: return "R";
    case Column::c: return "C";
    case Column::y: return "Y";
    case Column::m: return "M";
  }
  return "?";
}

double Covariates::get(Column col) const {
  switch (col) {
    case Column::s: return s;
    case Column::a: return a;
    case Column::w: return w;
    case Column::r: return r;
    case Column::c: return c;
    default: break;
  }
  throw ConfigError("nuisance", "column " + to_string(col) + " is not a covariate");
}

Covariates covariates_of(const ObservationTable& t, std::size_t i) {
  return {static_cast<double>(t.s[i]), static_cast<double>(t.a[i]), static_cast<double>(t.w[i]),
          t.r[i], t.c_obs[i]};
}

namespace {

double cell(const ObservationTable& t, std::size_t i, Column col) {
  switch (col) {
    case Column::s: return t.s[i];
    case Column::a: return t.a[i];
    case Column::w: return t.w[i];
    case Column::r: return t.r[i];
    case Column::c: return t.c_obs[i];
    case Column::y: return t.y[i];
    case Column::m: return t.m[i];
  }
  return 0.0;
}

double dot(const Eigen::VectorXd& beta, const std::vector<Column>& predictors, const Covariates& v) {
  double eta = beta[0];
  for (std::size_t j = 0; j < predictors.size(); ++j) eta += beta[j + 1] * v.get(predictors[j]);
  return eta;
}

double coefficient_of(const Eigen::VectorXd& beta, const std::vector<Column>& predictors,
                      Column col) {
  for (std::size_t j = 0; j < predictors.size(); ++j)
    if (predictors[j] == col) return beta[j + 1];
  return 0.0;
}

double normal_density(double value, double mean, double sd) {
  const double z = (value - mean) / sd;
  const double d = std::exp(-0.5 * z * z) / (sd * std::numbers::sqrt2 / std::numbers::inv_sqrtpi);
  return std::max(d, kDensityFloor);
}

}  // namespace

Design make_design(const ObservationTable& t, std::span<const std::size_t> rows,
                   std::span<const Column> predictors) {
  Design d;
  d.predictors.assign(predictors.begin(), predictors.end());
  d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(predictors.size() + 1));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    d.x(ki, 0) = 1.0;
    for (std::size_t j = 0; j < predictors.size(); ++j) {
      const double v = cell(t, rows[k], predictors[j]);
      if (!std::isfinite(v))
        throw DataError("nuisance", "non-finite predictor " + to_string(predictors[j]) +
                                        " on row " + std::to_string(rows[k]));
      d.x(ki, static_cast<Eigen::Index>(j + 1)) = v;
    }
  }
  return d;
}

Eigen::VectorXd column_values(const ObservationTable& t, std::span<const std::size_t> rows,
                              Column col) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) v[static_cast<Eigen::Index>(k)] = cell(t, rows[k], col);
  return v;
}

// ---------------------------------------------------------------------------
// Logistic regression by Newton-Raphson (IRLS).

double LogisticFit::linear_predictor(const Covariates& v) const {
  return dot(coefficients, predictors, v);
}

double LogisticFit::predict(const Covariates& v) const { return logistic(linear_predictor(v)); }

double LogisticFit::coefficient(Column col) const {
  return coefficient_of(coefficients, predictors, col);
}

LogisticFit fit_logistic(const Design& design, const Eigen::VectorXd& y,
                         const LogisticOptions& options) {
  const Eigen::MatrixXd& x = design.x;
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n == 0) throw StratumError("nuisance", "logistic fit on empty rows");
  const double n_pos = y.sum();
  if (n_pos <= 0.0 || n_pos >= static_cast<double>(n))
    throw SeparationError(
        "outcome takes a single value; the likelihood has no finite maximum (set ridge > 0 only "
        "helps slopes, not the intercept)");
  if (options.ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < p) throw SingularDesignError("rank-deficient design in logistic regression");
  }

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p, options.ridge);
  penalty[0] = 0.0;

  auto objective = [&](const Eigen::VectorXd& beta, Eigen::VectorXd& prob) {
    const Eigen::VectorXd eta = x * beta;
    double dev = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = logistic(eta[i]);
      // log(1 + exp(eta)) - y * eta, computed stably
      const double l1p = eta[i] > 0 ? eta[i] + std::log1p(std::exp(-eta[i])) : std::log1p(std::exp(eta[i]));
      dev += 2.0 * (l1p - y[i] * eta[i]);
    }
    return dev + (penalty.array() * beta.array().square()).sum();
  };

  LogisticFit fit;
  fit.predictors = design.predictors;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta[0] = logit(n_pos / static_cast<double>(n));
  Eigen::VectorXd prob(n);
  double obj = objective(beta, prob);
  const double inv_n = 1.0 / static_cast<double>(n);

  for (int it = 0; it <= options.max_iterations; ++it) {
    const Eigen::VectorXd score = x.transpose() * (y - prob) - (penalty.array() * beta.array()).matrix();
    fit.max_score = score.cwiseAbs().maxCoeff() * inv_n;
    fit.n_iterations = it;
    if (fit.max_score < options.tolerance) {
      fit.converged = true;
      break;
    }
    if (it == options.max_iterations) break;
    const Eigen::VectorXd wts = (prob.array() * (1.0 - prob.array())).matrix();
    Eigen::MatrixXd info = x.transpose() * wts.asDiagonal() * x;
    info.diagonal() += penalty;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw SingularDesignError("information matrix not positive definite");
    const Eigen::VectorXd step = ldlt.solve(score);
    double scale = 1.0;
    Eigen::VectorXd trial_prob(n);
    Eigen::VectorXd trial = beta + step;
    double trial_obj = objective(trial, trial_prob);
    for (int half = 0; half < 30 && !(trial_obj <= obj + 1e-12 * std::abs(obj)); ++half) {
      scale *= 0.5;
      trial = beta + scale * step;
      trial_obj = objective(trial, trial_prob);
    }
    beta = trial;
    prob = trial_prob;
    obj = trial_obj;
  }

  fit.coefficients = beta;
  fit.deviance = obj - (penalty.array() * beta.array().square()).sum();
  if (options.ridge == 0.0 &&
      (!fit.converged || fit.deviance * inv_n < 1e-6 || beta.cwiseAbs().maxCoeff() > 1e3)) {
    throw SeparationError(
        "logistic likelihood did not converge (perfect or quasi-complete separation); refit with "
        "ridge > 0");
  }
  if (!fit.converged)
    throw EstimationError("nuisance", "logistic regression did not converge in " +
                                          std::to_string(options.max_iterations) + " iterations");
  return fit;
}

LogisticFit fit_logistic(const ObservationTable& t, std::span<const std::size_t> rows,
                         Column outcome, std::span<const Column> predictors, double ridge) {
  LogisticOptions opt;
  opt.ridge = ridge;
  return fit_logistic(make_design(t, rows, predictors), column_values(t, rows, outcome), opt);
}

// ---------------------------------------------------------------------------
// Linear-Gaussian conditional models.

double GaussianConditionalFit::mean(const Covariates& v) const {
  return dot(coefficients, predictors, v);
}

double GaussianConditionalFit::coefficient(Column col) const {
  return coefficient_of(coefficients, predictors, col);
}

double GaussianConditionalFit::density(double value, const Covariates& v) const {
  if (degenerate())
    throw DegenerateDensityError("conditional model has zero residual standard deviation");
  return normal_density(value, mean(v), residual_sd);
}

GaussianConditionalFit fit_gaussian_conditional(const Design& design, const Eigen::VectorXd& y) {
  const Eigen::Index n = design.x.rows();
  const Eigen::Index p = design.x.cols();
  if (n < p + 1)
    throw StratumError("nuisance", "linear model needs at least " + std::to_string(p + 1) +
                                       " rows, got " + std::to_string(n));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.x);
  if (qr.rank() < p) throw SingularDesignError("rank-deficient design in linear regression");
  GaussianConditionalFit fit;
  fit.predictors = design.predictors;
  fit.coefficients = qr.solve(y);
  fit.n = static_cast<std::size_t>(n);
  const double rss = (y - design.x * fit.coefficients).squaredNorm();
  // n - p - 1 with p predictors excluding the intercept.
  fit.residual_sd = std::sqrt(rss / static_cast<double>(n - p));
  if (fit.residual_sd < 1e-12 * (1.0 + y.cwiseAbs().maxCoeff())) fit.residual_sd = 0.0;
  return fit;
}

GaussianConditionalFit fit_gaussian_conditional(const ObservationTable& t,
                                                std::span<const std::size_t> rows, Column target,
                                                std::span<const Column> predictors) {
  return fit_gaussian_conditional(make_design(t, rows, predictors), column_values(t, rows, target));
}

// ---------------------------------------------------------------------------

std::string to_string(VariableType v) { return v == VariableType::binary ? "binary" : "continuous"; }

VariableType parse_variable_type(const std::string& s) {
  std::string l;
  for (char ch : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (l == "binary") return VariableType::binary;
  if (l == "continuous") return VariableType::continuous;
  throw ConfigError("nuisance", "unknown variable type: " + s);
}

double ConditionalModel::density(double value, const Covariates& v) const {
  if (!fitted) throw StratumError("nuisance", "conditional model was not fitted (empty stratum)");
  if (type == VariableType::continuous) return gaussian.density(value, v);
  const double p1 = logistic.predict(v);
  return std::max(value > 0.5 ? p1 : 1.0 - p1, kDensityFloor);
}

namespace {

ConditionalModel fit_conditional(const ObservationTable& t, const std::vector<std::size_t>& rows,
                                 Column target, std::span<const Column> predictors,
                                 VariableType type, const NuisanceOptions& opt) {
  ConditionalModel model;
  model.type = type;
  if (rows.size() < predictors.size() + 2) return model;  // left unfitted
  const Design d = make_design(t, rows, predictors);
  const Eigen::VectorXd y = column_values(t, rows, target);
  if (type == VariableType::continuous) {
    model.gaussian = opt.fitters.gaussian(d, y);
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y[i] != 0.0 && y[i] != 1.0)
        throw DataError("nuisance", to_string(target) + " declared binary but has value " +
                                        std::to_string(y[i]));
    LogisticOptions lo;
    lo.ridge = opt.ridge;
    model.logistic = opt.fitters.logistic(d, y, lo);
  }
  model.fitted = true;
  return model;
}

}  // namespace

NuisanceFit fit_nuisance(const ObservationTable& t, const NuisanceOptions& options) {
  NuisanceFit fit;
  fit.options = options;
  fit.n_rows = t.size();
  if (options.n_mc < 1) throw ConfigError("nuisance", "n_mc must be >= 1");

  std::vector<std::size_t> source_cc;
  std::array<std::array<std::vector<std::size_t>, 2>, 2> med_rows;  // [s][w] complete cases
  std::array<std::vector<std::size_t>, 2> env_rows;
  std::array<std::array<std::size_t, 2>, 2> group_count{};
  std::size_t source_treated = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const int s = t.s[i];
    const int w = t.w[i];
    env_rows[s].push_back(i);
    ++group_count[s][w];
    if (s == 1 && t.a[i]) ++source_treated;
    if (!t.m[i]) continue;
    med_rows[s][w].push_back(i);
    if (s == 1) source_cc.push_back(i);
  }
  if (env_rows[1].empty()) throw StratumError("nuisance", "no source-environment rows (S = 1)");
  if (env_rows[0].empty()) throw StratumError("nuisance", "no target-environment rows (S = 0)");

  static constexpr Column outcome_predictors[] = {Column::a, Column::r, Column::c, Column::w};
  {
    // W is dropped from the outcome model when the source has a single group.
    std::vector<Column> preds(std::begin(outcome_predictors), std::end(outcome_predictors));
    if (group_count[1][0] == 0 || group_count[1][1] == 0) preds.pop_back();
    LogisticOptions lo;
    lo.ridge = options.ridge;
    fit.outcome_model = options.fitters.logistic(make_design(t, source_cc, preds),
                                                 column_values(t, source_cc, Column::y), lo);
  }

  static constexpr Column mediator_predictors[] = {Column::a, Column::r};
  static constexpr Column intermediate_predictors[] = {Column::a};
  for (int s = 0; s < 2; ++s) {
    for (int w = 0; w < 2; ++w) {
      fit.mediator[s][w] = fit_conditional(t, med_rows[s][w], Column::c, mediator_predictors,
                                           options.mediator_type, options);
    }
    fit.intermediate[s] = fit_conditional(t, env_rows[s], Column::r, intermediate_predictors,
                                          options.intermediate_type, options);
  }

  const double n = static_cast<double>(t.size());
  const double n1 = static_cast<double>(env_rows[1].size());
  const double n0 = static_cast<double>(env_rows[0].size());
  fit.treatment_marginal = static_cast<double>(source_treated) / n1;
  fit.selection_marginal = n0 / n;
  for (int w = 0; w < 2; ++w) {
    fit.group_share_source[w] = static_cast<double>(group_count[1][w]) / n1;
    fit.group_share_target[w] = static_cast<double>(group_count[0][w]) / n0;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Stochastic mediator intervention g*(c | a*, s, w).

double MediatorIntervention::density(double c) const {
  if (type == VariableType::binary) return std::max(c > 0.5 ? p_one : 1.0 - p_one, kDensityFloor);
  if (!component_weights.empty()) {
    double d = 0.0;
    for (std::size_t j = 0; j < component_means.size(); ++j)
      d += component_weights[j] * normal_density(c, component_means[j], component_sd);
    return std::max(d, kDensityFloor);
  }
  const double x[1] = {c};
  double out[1];
  kernels::serial::gaussian_mixture_density(x, component_means, component_sd, out);
  return std::max(out[0], kDensityFloor);
}

std::vector<double> MediatorIntervention::density(std::span<const double> c) const {
  std::vector<double> out(c.size());
  if (type == VariableType::binary || !component_weights.empty()) {
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = density(c[i]);
    return out;
  }
  kernels::omp::gaussian_mixture_density(c, component_means, component_sd, out);
  for (double& d : out) d = std::max(d, kDensityFloor);
  return out;
}

double MediatorIntervention::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < support.size(); ++k) m += mass[k] * support[k];
  return m;
}

MediatorIntervention mediator_intervention_density(const NuisanceFit& fit, int a_star, int s, int w) {
  const ConditionalModel& med = fit.mediator[s][w];
  const ConditionalModel& inter = fit.intermediate[s];
  if (!med.fitted)
    throw StratumError("nuisance", "mediator model for S=" + std::to_string(s) + ", W=" +
                                       std::to_string(w) + " has too few complete cases");
  if (!inter.fitted) throw StratumError("nuisance", "intermediate model was not fitted");
  if (med.type == VariableType::continuous && med.gaussian.degenerate())
    throw DegenerateDensityError("mediator model has zero residual standard deviation");
  if (inter.type == VariableType::continuous && inter.gaussian.degenerate())
    throw DegenerateDensityError("intermediate model has zero residual standard deviation");

  MediatorIntervention g;
  g.a_star = a_star;
  g.s = s;
  g.w = w;
  g.type = med.type;

  const std::uint64_t stream = static_cast<std::uint64_t>(a_star * 4 + s * 2 + w);
  Rng rng(derive_seed(fit.options.seed, stream));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Covariates cov;
  cov.a = a_star;
  cov.s = s;
  cov.w = w;

  // Intermediate values r_k with weights: exact two-point mass or n_mc draws.
  std::vector<double> r_values;
  std::vector<double> r_weights;
  if (inter.type == VariableType::binary) {
    const double p1 = inter.logistic.predict(cov);
    r_values = {0.0, 1.0};
    r_weights = {1.0 - p1, p1};
  } else {
    const std::size_t k_count = fit.options.n_mc;
    const double mu = inter.gaussian.mean(cov);
    const double sd = inter.gaussian.residual_sd;
    r_values.resize(k_count);
    for (double& r : r_values) r = mu + sd * normal(rng);
    r_weights.assign(k_count, 1.0 / static_cast<double>(k_count));
  }

  if (med.type == VariableType::binary) {
    g.p_one = 0.0;
    for (std::size_t k = 0; k < r_values.size(); ++k) {
      cov.r = r_values[k];
      g.p_one += r_weights[k] * med.logistic.predict(cov);
    }
    g.support = {0.0, 1.0};
    g.mass = {1.0 - g.p_one, g.p_one};
    return g;
  }

  g.component_sd = med.gaussian.residual_sd;
  const std::size_t k_count = fit.options.n_mc;
  if (inter.type == VariableType::binary) {
    // Exact two-component mixture.
    for (std::size_t j = 0; j < 2; ++j) {
      cov.r = r_values[j];
      g.component_means.push_back(med.gaussian.mean(cov));
    }
    g.component_weights = r_weights;
  } else {
    g.component_means.resize(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
      cov.r = r_values[k];
      g.component_means[k] = med.gaussian.mean(cov);
    }
  }
  g.support.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    std::size_t comp = k;
    if (inter.type == VariableType::binary) comp = unif(rng) < r_weights[0] ? 0 : 1;
    g.support[k] = g.component_means[comp] + g.component_sd * normal(rng);
  }
  g.mass.assign(k_count, 1.0 / static_cast<double>(k_count));
  return g;
}

}  // namespace medtransport::nuisance
