#include "medtransport/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "medtransport/error.hpp"
#include "medtransport/kernels.hpp"
#include "medtransport/random.hpp"

namespace medtransport::sensitivity {

using nuisance::Covariates;
using nuisance::NuisanceFit;

namespace {

double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void check_r2(double r2) {
  if (!(r2 >= 0.0 && r2 < 1.0)) throw ConfigError("sensitivity", "r2 must lie in [0, 1)");
}

double weighted_mean(std::span<const double> w, std::span<const double> q) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    num += w[i] * q[i];
    den += w[i];
  }
  return num / den;
}

std::vector<double> scale_grid(double c_max) {
  std::vector<double> grid(kScaleGridPoints);
  for (std::size_t j = 0; j < kScaleGridPoints; ++j)
    grid[j] = 1.0 + (c_max - 1.0) * static_cast<double>(j) / static_cast<double>(kScaleGridPoints - 1);
  grid.back() = c_max;
  return grid;
}

// Shift in the weighted outcome mean of one arm when its weights move from
// the observed vector to w(c).
struct ArmShift {
  WeightFamily family;
  std::span<const double> outcome;
  double baseline = 0.0;

  ArmShift(const Arm& arm, double r2)
      : family(sensitivity_bounds(arm.weights, r2)), outcome(arm.outcome) {
    baseline = weighted_mean(family.observed, outcome);
  }
  double at(double c, std::size_t* clipped = nullptr) const {
    if (c == 1.0) return 0.0;
    const std::vector<double> w = family.member(c, clipped);
    return weighted_mean(w, outcome) - baseline;
  }
};

struct RunningBounds {
  double min_shift[2] = {0.0, 0.0};
  double max_shift[2] = {0.0, 0.0};
};

}  // namespace

FitFactory default_factory(nuisance::NuisanceOptions options, std::size_t replicate_n_mc) {
  return [options, replicate_n_mc](const ObservationTable& t, std::uint64_t seed, FitRole role) {
    nuisance::NuisanceOptions o = options;
    o.seed = seed;
    if (role == FitRole::replicate && replicate_n_mc > 0) o.n_mc = replicate_n_mc;
    return nuisance::fit_nuisance(t, o);
  };
}

std::vector<double> WeightFamily::member(double c, std::size_t* clipped) const {
  if (clipped) *clipped = 0;
  if (c == 1.0) return observed;
  std::vector<double> w(observed.size());
  double total = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    double v = mean + c * (observed[i] - mean);
    if (v < 0.0) {
      v = 0.0;
      if (clipped) ++*clipped;
    }
    w[i] = v;
    total += v;
  }
  const double rescale = mean * static_cast<double>(observed.size()) / total;
  for (double& v : w) v *= rescale;
  return w;
}

WeightFamily sensitivity_bounds(std::span<const double> observed, double r2) {
  check_r2(r2);
  for (double v : observed)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError("sensitivity", "observed weights must be finite and nonnegative");
  if (!(variance(observed) > 0.0))
    throw EstimationError("sensitivity", "degenerate weights: observed weights have zero variance");
  WeightFamily f;
  f.observed.assign(observed.begin(), observed.end());
  double sum = 0.0;
  for (double v : observed) sum += v;
  f.mean = sum / static_cast<double>(observed.size());
  f.c_max = 1.0 / std::sqrt(1.0 - r2);
  return f;
}

std::pair<double, double> tan_admissible_interval(double lambda) {
  if (!(lambda >= 1.0)) throw ConfigError("sensitivity", "lambda must be >= 1");
  return {1.0 / lambda, lambda};
}

bool TanDiagnostic::within(double lambda) const {
  const auto [lo, hi] = tan_admissible_interval(lambda);
  return min_ratio >= lo && max_ratio <= hi;
}

TanDiagnostic tan_ratio_range(const WeightFamily& family) {
  TanDiagnostic d;
  const std::vector<double> w = family.member(family.c_max);
  d.min_ratio = std::numeric_limits<double>::infinity();
  d.max_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(family.observed[i] > 0.0)) continue;
    const double ratio = w[i] / family.observed[i];
    d.min_ratio = std::min(d.min_ratio, ratio);
    d.max_ratio = std::max(d.max_ratio, ratio);
  }
  return d;
}

SensitivityInputs sensitivity_inputs(const NuisanceFit& fit, const ObservationTable& t,
                                     const tmle::EffectEstimate& sie, int group) {
  if (sie.kind != tmle::EffectKind::sie)
    throw ConfigError("sensitivity", "sensitivity inputs require an indirect-effect estimate");
  std::vector<std::size_t> rows;
  std::vector<double> c;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.s[i] == 0 && t.w[i] == group && t.m[i]) {
      rows.push_back(i);
      c.push_back(t.c_obs[i]);
    }
  }
  if (rows.size() < 2)
    throw StratumError("sensitivity", "fewer than two complete target rows in group W=" +
                                          std::to_string(group));
  SensitivityInputs in;
  in.sie_point = sie.point;
  for (int a_star = 0; a_star < 2; ++a_star) {
    const double eps = a_star == 1 ? sie.minuend.epsilon : sie.subtrahend.epsilon;
    const nuisance::MediatorIntervention g = nuisance::mediator_intervention_density(fit, a_star, 0, group);
    Arm& arm = in.arm[a_star];
    arm.weights = g.density(c);
    arm.outcome.resize(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      Covariates cov = nuisance::covariates_of(t, rows[k]);
      cov.a = 1;
      arm.outcome[k] = logistic(fit.outcome_model.linear_predictor(cov) + eps);
    }
  }
  return in;
}

Bounds bounded_sie(const SensitivityInputs& in, double r2) {
  check_r2(r2);
  const ArmShift arm1(in.arm[1], r2);
  const ArmShift arm0(in.arm[0], r2);
  const std::vector<double> grid = scale_grid(arm1.family.c_max);
  double min1 = 0.0, max1 = 0.0, min0 = 0.0, max0 = 0.0;
  Bounds b;
  for (double c : grid) {
    std::size_t k1 = 0, k0 = 0;
    const double s1 = arm1.at(c, &k1);
    const double s0 = arm0.at(c, &k0);
    min1 = std::min(min1, s1);
    max1 = std::max(max1, s1);
    min0 = std::min(min0, s0);
    max0 = std::max(max0, s0);
    b.clipped = k1 + k0;
  }
  b.lower = in.sie_point + min1 - max0;
  b.upper = in.sie_point + max1 - min0;
  return b;
}

Bounds bounded_sie(const NuisanceFit& fit, const ObservationTable& t, int group, double r2,
                   const tmle::TmleOptions& options) {
  const tmle::EffectEstimate sie = tmle::estimate_sie(fit, t, group, options);
  return bounded_sie(sensitivity_inputs(fit, t, sie, group), r2);
}

std::vector<Bounds> bounded_sie_curve(const SensitivityInputs& in, std::span<const double> r2_grid) {
  std::vector<Bounds> out;
  out.reserve(r2_grid.size());
  double min1 = 0.0, max1 = 0.0, min0 = 0.0, max0 = 0.0;
  for (std::size_t k = 0; k < r2_grid.size(); ++k) {
    if (k > 0 && !(r2_grid[k] > r2_grid[k - 1]))
      throw ConfigError("sensitivity", "r2 grid must be strictly increasing");
    const double r2 = r2_grid[k];
    check_r2(r2);
    const ArmShift arm1(in.arm[1], r2);
    const ArmShift arm0(in.arm[0], r2);
    Bounds b;
    for (double c : scale_grid(arm1.family.c_max)) {
      std::size_t k1 = 0, k0 = 0;
      const double s1 = arm1.at(c, &k1);
      const double s0 = arm0.at(c, &k0);
      min1 = std::min(min1, s1);
      max1 = std::max(max1, s1);
      min0 = std::min(min0, s0);
      max0 = std::max(max0, s0);
      b.clipped = k1 + k0;
    }
    b.lower = in.sie_point + min1 - max0;
    b.upper = in.sie_point + max1 - min0;
    out.push_back(b);
  }
  return out;
}

void SensitivityConfig::validate() const {
  if (r2_grid.empty()) throw ConfigError("sensitivity", "r2 grid is empty");
  for (std::size_t k = 0; k < r2_grid.size(); ++k) {
    if (!(r2_grid[k] >= 0.0 && r2_grid[k] < 1.0))
      throw ConfigError("sensitivity", "r2 grid values must lie in [0, 1)");
    if (k > 0 && !(r2_grid[k] > r2_grid[k - 1]))
      throw ConfigError("sensitivity", "r2 grid must be strictly increasing");
  }
  if (lambda && !(*lambda >= 1.0)) throw ConfigError("sensitivity", "lambda must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("sensitivity", "alpha must lie in (0, 1)");
  if (n_bootstrap < 100) throw ConfigError("sensitivity", "n_bootstrap must be >= 100");
}

namespace {

inline constexpr int kMaxReplicateRetries = 10;

ObservationTable stratified_resample(const ObservationTable& t,
                                     const std::array<std::vector<std::size_t>, 4>& strata,
                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> rows;
  rows.reserve(t.size());
  for (const auto& stratum : strata) {
    if (stratum.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, stratum.size() - 1);
    for (std::size_t k = 0; k < stratum.size(); ++k) rows.push_back(stratum[pick(rng)]);
  }
  return t.subset(rows);
}

// Bounds for each (group, r2) from one table.
std::vector<std::vector<Bounds>> bounds_for(const NuisanceFit& fit, const ObservationTable& t,
                                            std::span<const int> groups,
                                            std::span<const double> r2_grid,
                                            const tmle::TmleOptions& options,
                                            std::vector<tmle::EffectEstimate>* estimates = nullptr) {
  std::vector<std::vector<Bounds>> out;
  for (int g : groups) {
    tmle::EffectEstimate sie = tmle::estimate_sie(fit, t, g, options);
    out.push_back(bounded_sie_curve(sensitivity_inputs(fit, t, sie, g), r2_grid));
    if (estimates) estimates->push_back(std::move(sie));
  }
  return out;
}

}  // namespace

std::vector<CurvePoint> sensitivity_curve(const FitFactory& factory, const ObservationTable& t,
                                          std::span<const int> groups, std::span<const double> r2_grid,
                                          const SensitivityConfig& config,
                                          const tmle::TmleOptions& options) {
  config.validate();
  for (double r2 : r2_grid) check_r2(r2);

  std::vector<tmle::EffectEstimate> point_estimates;
  const NuisanceFit fit = factory(t, config.seed, FitRole::point);
  const auto point = bounds_for(fit, t, groups, r2_grid, options, &point_estimates);

  std::array<std::vector<std::size_t>, 4> strata;
  for (std::size_t i = 0; i < t.size(); ++i) strata[t.s[i] * 2 + t.w[i]].push_back(i);

  const std::size_t n_boot = config.n_bootstrap;
  const std::size_t n_cells = groups.size() * r2_grid.size();
  std::vector<double> lowers(n_boot * n_cells), uppers(n_boot * n_cells);
  std::vector<std::size_t> failures(n_boot, 0);
  std::vector<std::string> fatal(n_boot);

  kernels::configured_threads();
  const auto n_boot_signed = static_cast<std::ptrdiff_t>(n_boot);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t bi = 0; bi < n_boot_signed; ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    const std::uint64_t base_seed = derive_seed(config.seed, b + 1);
    for (int attempt = 0;; ++attempt) {
      const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(attempt));
      try {
        const ObservationTable rep = stratified_resample(t, strata, seed);
        const NuisanceFit rep_fit = factory(rep, derive_seed(seed, 0x5eed), FitRole::replicate);
        const auto rb = bounds_for(rep_fit, rep, groups, r2_grid, options);
        for (std::size_t g = 0; g < groups.size(); ++g) {
          for (std::size_t k = 0; k < r2_grid.size(); ++k) {
            lowers[b * n_cells + g * r2_grid.size() + k] = rb[g][k].lower;
            uppers[b * n_cells + g * r2_grid.size() + k] = rb[g][k].upper;
          }
        }
        break;
      } catch (const EstimationError& e) {
        ++failures[b];
        if (attempt + 1 >= kMaxReplicateRetries) {
          fatal[b] = e.what();
          break;
        }
      }
    }
  }
  for (const auto& msg : fatal)
    if (!msg.empty())
      throw EstimationError("sensitivity", "bootstrap replicate failed after " +
                                               std::to_string(kMaxReplicateRetries) +
                                               " attempts: " + msg);
  std::size_t total_failures = 0;
  for (std::size_t f : failures) total_failures += f;

  std::vector<CurvePoint> curve;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t k = 0; k < r2_grid.size(); ++k) {
      std::vector<double> lo(n_boot), hi(n_boot);
      for (std::size_t b = 0; b < n_boot; ++b) {
        lo[b] = lowers[b * n_cells + g * r2_grid.size() + k];
        hi[b] = uppers[b * n_cells + g * r2_grid.size() + k];
      }
      CurvePoint p;
      p.group_w = groups[g];
      p.r2 = r2_grid[k];
      p.sie_point = point_estimates[g].point;
      p.sie_se = point_estimates[g].se;
      p.sie_lower = point[g][k].lower;
      p.sie_upper = point[g][k].upper;
      p.ci_low = std::min(quantile(lo, config.alpha / 2.0), p.sie_lower);
      p.ci_high = std::max(quantile(hi, 1.0 - config.alpha / 2.0), p.sie_upper);
      p.contains_null = p.ci_low <= 0.0 && p.ci_high >= 0.0;
      p.clipped = point[g][k].clipped;
      p.failed_replicates = total_failures;
      curve.push_back(p);
    }
  }
  return curve;
}

std::pair<double, double> ci_alpha(const FitFactory& factory, const ObservationTable& t, int group,
                                   double r2, const SensitivityConfig& config,
                                   const tmle::TmleOptions& options) {
  const int groups[1] = {group};
  const double grid[1] = {r2};
  SensitivityConfig cfg = config;
  cfg.r2_grid = {r2};
  const auto curve = sensitivity_curve(factory, t, groups, grid, cfg, options);
  return {curve.front().ci_low, curve.front().ci_high};
}

std::array<NullCrossing, 2> null_crossings(std::span<const CurvePoint> curve) {
  std::array<NullCrossing, 2> out{NullCrossing{0, std::nullopt}, NullCrossing{1, std::nullopt}};
  for (const CurvePoint& p : curve) {
    NullCrossing& nc = out[static_cast<std::size_t>(p.group_w)];
    if (p.contains_null && (!nc.r2_star || p.r2 < *nc.r2_star)) nc.r2_star = p.r2;
  }
  return out;
}

SweepResult sweep_r2(const FitFactory& factory, const ObservationTable& t,
                     const SensitivityConfig& config, const tmle::TmleOptions& options) {
  config.validate();
  const int groups[2] = {0, 1};
  SweepResult res;
  const auto curve = sensitivity_curve(factory, t, groups, config.r2_grid, config, options);
  // Reorder to grid-major.
  for (std::size_t k = 0; k < config.r2_grid.size(); ++k) {
    for (std::size_t g = 0; g < 2; ++g) res.curve.push_back(curve[g * config.r2_grid.size() + k]);
    SweepPointDiagnostics d;
    d.grid_value = config.r2_grid[k];
    res.diagnostics.push_back(d);
  }
  res.crossing = null_crossings(res.curve);
  return res;
}

std::array<double, 2> empirical_r2(const FitFactory& factory, const ObservationTable& with_missing,
                                   int group, std::uint64_t seed) {
  if (!with_missing.has_truth)
    throw ConfigError("sensitivity", "empirical r2 requires the true mediator values");
  ObservationTable full = with_missing;
  for (std::size_t i = 0; i < full.size(); ++i) {
    full.m[i] = 1;
    full.c_obs[i] = full.c_true[i];
  }
  const NuisanceFit fit_full = factory(full, seed, FitRole::point);
  const NuisanceFit fit_obs = factory(with_missing, seed, FitRole::point);
  std::vector<double> c_all, c_cc;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (full.s[i] != 0 || full.w[i] != group) continue;
    c_all.push_back(full.c_true[i]);
    if (with_missing.m[i]) c_cc.push_back(with_missing.c_obs[i]);
  }
  std::array<double, 2> out{};
  for (int a_star = 0; a_star < 2; ++a_star) {
    const auto g_full = nuisance::mediator_intervention_density(fit_full, a_star, 0, group);
    const auto g_obs = nuisance::mediator_intervention_density(fit_obs, a_star, 0, group);
    const double v_true = variance(g_full.density(c_all));
    const double v_obs = variance(g_obs.density(c_cc));
    out[a_star] = 1.0 - v_obs / v_true;
  }
  return out;
}

SweepResult sweep_missingness(const FitFactory& factory, const ObservationTable& t,
                              const dgp::MissingnessSpec& base, const SensitivityConfig& config,
                              const tmle::TmleOptions& options) {
  config.validate();
  const int groups[2] = {0, 1};
  SweepResult res;
  for (std::size_t k = 0; k < config.r2_grid.size(); ++k) {
    const double value = config.r2_grid[k];
    dgp::MissingnessSpec spec = base;
    spec.target_proportion = value;
    const dgp::MissingnessResult mr = dgp::apply_missingness(t, spec, derive_seed(config.seed, 1000 + k));

    SensitivityConfig cfg = config;
    cfg.r2_grid = {value};
    cfg.seed = derive_seed(config.seed, 2000 + k);
    const double grid[1] = {value};
    const auto points = sensitivity_curve(factory, mr.table, groups, grid, cfg, options);
    res.curve.insert(res.curve.end(), points.begin(), points.end());

    SweepPointDiagnostics d;
    d.grid_value = value;
    d.realized_missing_fraction = mr.realized_fraction;
    d.missingness_offset = mr.offset;
    if (mr.table.has_truth) d.empirical_r2 = empirical_r2(factory, mr.table, base.target_group, cfg.seed);
    res.diagnostics.push_back(d);
  }
  res.crossing = null_crossings(res.curve);
  return res;
}

}  // namespace medtransport::sensitivity
