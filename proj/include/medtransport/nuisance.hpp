#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "medtransport/table.hpp"

namespace medtransport::nuisance {

enum class Column { s, a, w, r, c, y, m };

std::string to_string(Column c);

/// Values of the model covariates for one (possibly hypothetical) unit.
struct Covariates {
  double s = 0, a = 0, w = 0, r = 0, c = 0;
  double get(Column col) const;
};

Covariates covariates_of(const ObservationTable& t, std::size_t row);

/// Design matrix with a leading intercept column.
struct Design {
  std::vector<Column> predictors;
  Eigen::MatrixXd x;
};

Design make_design(const ObservationTable& t, std::span<const std::size_t> rows,
                   std::span<const Column> predictors);
Eigen::VectorXd column_values(const ObservationTable& t, std::span<const std::size_t> rows,
                              Column col);

struct LogisticOptions {
  double ridge = 0.0;
  double tolerance = 1e-8;  ///< on the largest per-observation mean score component
  int max_iterations = 100;
};

struct LogisticFit {
  std::vector<Column> predictors;
  Eigen::VectorXd coefficients;  ///< intercept first
  bool converged = false;
  int n_iterations = 0;
  double deviance = 0.0;
  double max_score = 0.0;  ///< max_j |mean score_j| at the returned coefficients

  double linear_predictor(const Covariates& v) const;
  double predict(const Covariates& v) const;
  /// Coefficient on `col` (0 when the column is not a predictor).
  double coefficient(Column col) const;
};

LogisticFit fit_logistic(const Design& design, const Eigen::VectorXd& y,
                         const LogisticOptions& options = {});
LogisticFit fit_logistic(const ObservationTable& t, std::span<const std::size_t> rows,
                         Column outcome, std::span<const Column> predictors, double ridge = 0.0);

struct GaussianConditionalFit {
  std::vector<Column> predictors;
  Eigen::VectorXd coefficients;
  double residual_sd = 0.0;
  std::size_t n = 0;

  bool degenerate() const noexcept { return !(residual_sd > 0.0); }
  double mean(const Covariates& v) const;
  double coefficient(Column col) const;
  /// Normal density floored at kDensityFloor. Throws DegenerateDensityError
  /// when residual_sd == 0.
  double density(double value, const Covariates& v) const;
};

GaussianConditionalFit fit_gaussian_conditional(const Design& design, const Eigen::VectorXd& y);
GaussianConditionalFit fit_gaussian_conditional(const ObservationTable& t,
                                                std::span<const std::size_t> rows, Column target,
                                                std::span<const Column> predictors);

inline constexpr double kDensityFloor = 1e-300;

enum class VariableType { continuous, binary };

std::string to_string(VariableType v);
VariableType parse_variable_type(const std::string& s);

/// Conditional model of a variable that is either Gaussian or Bernoulli.
struct ConditionalModel {
  VariableType type = VariableType::continuous;
  GaussianConditionalFit gaussian;
  LogisticFit logistic;
  bool fitted = false;

  /// Density (continuous) or probability mass (binary) of `value`.
  double density(double value, const Covariates& v) const;
};

/// Pluggable fitters; defaults are the parametric main-effects fitters above.
struct Fitters {
  std::function<LogisticFit(const Design&, const Eigen::VectorXd&, const LogisticOptions&)>
      logistic = [](const Design& d, const Eigen::VectorXd& y, const LogisticOptions& o) {
        return fit_logistic(d, y, o);
      };
  std::function<GaussianConditionalFit(const Design&, const Eigen::VectorXd&)> gaussian =
      [](const Design& d, const Eigen::VectorXd& y) { return fit_gaussian_conditional(d, y); };
};

struct NuisanceOptions {
  double ridge = 0.0;
  std::size_t n_mc = 1000;
  VariableType mediator_type = VariableType::continuous;
  VariableType intermediate_type = VariableType::continuous;
  std::uint64_t seed = 0;  ///< seeds the mediator-intervention draws
  Fitters fitters;
};

/// Every conditional model the estimator consumes.
///
/// The outcome model is logistic in (A, R, C, W) on complete source rows.
/// Mediator models regress C on (A, R) separately within each (S, W) stratum
/// using complete cases; intermediate models regress R on A within each S.
struct NuisanceFit {
  LogisticFit outcome_model;
  std::array<std::array<ConditionalModel, 2>, 2> mediator;  ///< [s][w]
  std::array<ConditionalModel, 2> intermediate;             ///< [s]
  double treatment_marginal = 0.5;                          ///< P(A = 1 | S = 1)
  double selection_marginal = 0.5;                          ///< P(S = 0)
  std::array<double, 2> group_share_source{};               ///< P(W = w | S = 1)
  std::array<double, 2> group_share_target{};               ///< P(W = w | S = 0)
  std::size_t n_rows = 0;
  NuisanceOptions options;

  double p_treatment_source(int a) const { return a ? treatment_marginal : 1.0 - treatment_marginal; }
};

NuisanceFit fit_nuisance(const ObservationTable& t, const NuisanceOptions& options = {});

/// The stochastic mediator intervention g*(c | a*, s, w) represented as a
/// discrete measure (support, mass) for marginalization plus an exact or
/// Monte-Carlo mixture density for evaluating g* at observed mediators.
struct MediatorIntervention {
  int a_star = 0, s = 0, w = 0;
  VariableType type = VariableType::continuous;
  std::vector<double> support;
  std::vector<double> mass;
  /// Continuous mediator: component means of C | a*, r_k and the shared sd.
  std::vector<double> component_means;
  /// Empty means equally weighted components.
  std::vector<double> component_weights;
  double component_sd = 0.0;
  /// Binary mediator: P(C = 1).
  double p_one = 0.0;

  double density(double c) const;
  /// Evaluates the density at many points (OpenMP kernel on the continuous path).
  std::vector<double> density(std::span<const double> c) const;
  double mean() const;
};

MediatorIntervention mediator_intervention_density(const NuisanceFit& fit, int a_star, int s, int w);

}  // namespace medtransport::nuisance
