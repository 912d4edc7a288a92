#pragma once

#include <array>
#include <optional>
#include <vector>

#include "medtransport/nuisance.hpp"
#include "medtransport/table.hpp"

namespace medtransport::tmle {

struct TmleOptions {
  /// Quantile of the nonzero targeting weights at which they are truncated
  /// (1.0 disables truncation).
  double truncation_quantile = 0.999;
  double score_tolerance = 1e-12;  ///< on the mean weighted score
  int max_iterations = 100;
};

struct TargetingWeights {
  std::vector<double> h;  ///< one entry per table row; zero off the source stratum
  std::size_t nonzero = 0;
  std::size_t truncated = 0;
  double threshold = 0.0;
};

/// Clever-covariate weights for the (a, a*) parameter, optionally restricted
/// to W == group. Nonzero only on complete source rows with A == a.
TargetingWeights compute_targeting_weights(const nuisance::NuisanceFit& fit,
                                           const ObservationTable& t, int a, int a_star,
                                           std::optional<int> group, const TmleOptions& options = {});

struct TargetingResult {
  double epsilon = 0.0;
  double score = 0.0;  ///< mean over all rows of H * (Y - Q*)
  int iterations = 0;
  std::vector<double> q_star;  ///< targeted prediction on rows with H > 0, NaN elsewhere
};

/// Weighted logistic fluctuation of the initial outcome fit: offset
/// logit(Q0), free intercept epsilon, weights H.
TargetingResult target_outcome_model(const nuisance::LogisticFit& initial,
                                     const ObservationTable& t, std::span<const double> h,
                                     const TmleOptions& options = {});

/// Row-wise conditional mean of the targeted outcome model (treatment set to
/// `a`, fluctuation `epsilon`) under the mediator intervention `g_star`.
std::vector<double> marginalize(const nuisance::LogisticFit& outcome, double epsilon, int a,
                                const nuisance::MediatorIntervention& g_star,
                                const ObservationTable& t, std::span<const std::size_t> rows);

struct PsiEstimate {
  int a = 0;
  int a_star = 0;
  std::optional<int> group_w;
  double psi = 0.0;
  std::vector<double> eic;  ///< one value per table row
  double se = 0.0;
  double mean_eic = 0.0;
  double epsilon = 0.0;
  std::vector<double> weights;  ///< targeting weights H
  std::size_t truncated = 0;
  std::size_t n_target = 0;  ///< rows averaged for psi
};

/// Mean potential outcome under treatment a and the mediator intervention for
/// a*, averaged over target rows (S = 0) with A = a (and W = group when set).
PsiEstimate estimate_psi(const nuisance::NuisanceFit& fit, const ObservationTable& t, int a,
                         int a_star, std::optional<int> group, const TmleOptions& options = {});

enum class EffectKind { sde, sie };

const char* to_string(EffectKind k);

inline constexpr double kWaldZ = 1.959963984540054;

struct EffectEstimate {
  EffectKind kind = EffectKind::sie;
  std::optional<int> group_w;
  double point = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> eic;
  PsiEstimate minuend;
  PsiEstimate subtrahend;
};

/// Contrast minuend - subtrahend with the difference of their EICs.
EffectEstimate contrast(EffectKind kind, PsiEstimate minuend, PsiEstimate subtrahend);

EffectEstimate estimate_sde(const nuisance::NuisanceFit& fit, const ObservationTable& t,
                            std::optional<int> group, const TmleOptions& options = {});
EffectEstimate estimate_sie(const nuisance::NuisanceFit& fit, const ObservationTable& t,
                            std::optional<int> group, const TmleOptions& options = {});

struct Effects {
  EffectEstimate sde;
  EffectEstimate sie;
  /// psi(1, 1) - psi(0, 0), sharing psi(1, 0) with both contrasts.
  double total = 0.0;
};

Effects estimate_effects(const nuisance::NuisanceFit& fit, const ObservationTable& t,
                         std::optional<int> group, const TmleOptions& options = {});

}  // namespace medtransport::tmle
