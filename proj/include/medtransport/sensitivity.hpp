#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "medtransport/dgp.hpp"
#include "medtransport/nuisance.hpp"
#include "medtransport/table.hpp"
#include "medtransport/tmle.hpp"

namespace medtransport::sensitivity {

/// Extremal members of the variance-ratio sensitivity set around observed
/// weights: w(c) = mean + c * (observed - mean) for c in [1, c_max], clipped
/// at zero and rescaled back to the observed mean.
struct WeightFamily {
  std::vector<double> observed;
  double mean = 0.0;
  double c_max = 1.0;  ///< 1 / sqrt(1 - r2)

  std::vector<double> member(double c, std::size_t* clipped = nullptr) const;
  /// var(w(c)) / var(observed) before clipping, i.e. c^2.
  double unclipped_variance_ratio(double c) const { return c * c; }
};

WeightFamily sensitivity_bounds(std::span<const double> observed, double r2);

/// Admissible ratio interval [1/lambda, lambda] of the marginal-ratio bound.
std::pair<double, double> tan_admissible_interval(double lambda);

struct TanDiagnostic {
  double min_ratio = 1.0;
  double max_ratio = 1.0;
  bool within(double lambda) const;
};

/// Range of w(c_max)_i / observed_i over rows with positive observed weight.
TanDiagnostic tan_ratio_range(const WeightFamily& family);

inline constexpr std::size_t kScaleGridPoints = 21;

/// Mediator-intervention weights and targeted outcome predictions on the
/// complete target rows of one group, for each arm a* of the indirect effect.
struct Arm {
  std::vector<double> weights;  ///< g*_{a*}(C_i)
  std::vector<double> outcome;  ///< targeted Q*(R_i, C_i, A = 1)
};

struct SensitivityInputs {
  double sie_point = 0.0;
  std::array<Arm, 2> arm;  ///< indexed by a*
};

SensitivityInputs sensitivity_inputs(const nuisance::NuisanceFit& fit, const ObservationTable& t,
                                     const tmle::EffectEstimate& sie, int group);

struct Bounds {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t clipped = 0;  ///< clipped weights at the largest scale factor
};

/// Infimum and supremum of the indirect effect over the sensitivity set:
/// each arm's g*-weights are replaced by family members on a grid of
/// kScaleGridPoints scale factors, and the shift in the weighted outcome mean
/// is added to the point estimate.
Bounds bounded_sie(const SensitivityInputs& inputs, double r2);
Bounds bounded_sie(const nuisance::NuisanceFit& fit, const ObservationTable& t, int group,
                   double r2, const tmle::TmleOptions& options = {});

/// Bounds along an increasing grid, each taken over every scale factor
/// evaluated for the same or smaller r2 (the sets are nested).
std::vector<Bounds> bounded_sie_curve(const SensitivityInputs& inputs, std::span<const double> r2_grid);

struct SensitivityConfig {
  std::vector<double> r2_grid;
  std::optional<double> lambda;
  double alpha = 0.05;
  std::size_t n_bootstrap = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class FitRole { point, replicate };

/// Builds the nuisance fit for a table (the original or a bootstrap
/// resample); the seed drives the mediator-intervention draws.
using FitFactory =
    std::function<nuisance::NuisanceFit(const ObservationTable&, std::uint64_t seed, FitRole role)>;

/// Factory fitting the default parametric models; replicates use
/// `replicate_n_mc` mediator draws instead of options.n_mc when nonzero.
FitFactory default_factory(nuisance::NuisanceOptions options, std::size_t replicate_n_mc = 0);

struct CurvePoint {
  int group_w = 0;
  double r2 = 0.0;
  double sie_point = 0.0;
  double sie_se = 0.0;
  double sie_lower = 0.0;
  double sie_upper = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool contains_null = false;
  std::size_t clipped = 0;
  std::size_t failed_replicates = 0;
};

/// Bounds and percentile-bootstrap CI(alpha) for each group and each r2 of
/// `r2_grid`. Replicates resample within (S, W) strata.
std::vector<CurvePoint> sensitivity_curve(const FitFactory& factory, const ObservationTable& t,
                                          std::span<const int> groups, std::span<const double> r2_grid,
                                          const SensitivityConfig& config,
                                          const tmle::TmleOptions& options = {});

std::pair<double, double> ci_alpha(const FitFactory& factory, const ObservationTable& t, int group,
                                   double r2, const SensitivityConfig& config,
                                   const tmle::TmleOptions& options = {});

struct NullCrossing {
  int group_w = 0;
  std::optional<double> r2_star;
};

std::array<NullCrossing, 2> null_crossings(std::span<const CurvePoint> curve);

struct SweepPointDiagnostics {
  double grid_value = 0.0;
  double realized_missing_fraction = 0.0;
  double missingness_offset = 0.0;
  /// 1 - var(observed-data weights) / var(full-data weights) per arm a*;
  /// only available when the table carries the true mediator.
  std::optional<std::array<double, 2>> empirical_r2;
};

struct SweepResult {
  std::vector<CurvePoint> curve;  ///< ordered by grid point, then group
  std::array<NullCrossing, 2> crossing;
  std::vector<SweepPointDiagnostics> diagnostics;
};

/// Sensitivity parameter swept directly over `config.r2_grid` on fixed data.
SweepResult sweep_r2(const FitFactory& factory, const ObservationTable& t,
                     const SensitivityConfig& config, const tmle::TmleOptions& options = {});

/// Each grid value is applied as the missing-mediator proportion of
/// `base.target_group` (calibrated) and used as the sensitivity parameter
/// for both groups.
SweepResult sweep_missingness(const FitFactory& factory, const ObservationTable& t,
                              const dgp::MissingnessSpec& base, const SensitivityConfig& config,
                              const tmle::TmleOptions& options = {});

/// 1 - var(observed weights on complete cases) / var(full-data weights on all
/// cases) for the target rows of `group`, per arm a*.
std::array<double, 2> empirical_r2(const FitFactory& factory, const ObservationTable& with_missing,
                                   int group, std::uint64_t seed);

}  // namespace medtransport::sensitivity
