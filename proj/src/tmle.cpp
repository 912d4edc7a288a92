#include "medtransport/tmle.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "medtransport/error.hpp"
#include "medtransport/kernels.hpp"
#include "medtransport/random.hpp"

namespace medtransport::tmle {

using nuisance::Column;
using nuisance::ConditionalModel;
using nuisance::VariableType;
using nuisance::Covariates;
using nuisance::MediatorIntervention;
using nuisance::NuisanceFit;

namespace {

bool in_group(const ObservationTable& t, std::size_t i, std::optional<int> group) {
  return !group || t.w[i] == *group;
}

// Type-7 sample quantile.
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void check_positive(double v, const char* factor) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw PositivityError(std::string("positivity violated: ") + factor + " = " + std::to_string(v));
}

}  // namespace

TargetingWeights compute_targeting_weights(const NuisanceFit& fit, const ObservationTable& t,
                                           int a, int a_star, std::optional<int> group,
                                           const TmleOptions& options) {
  const double p_a = fit.p_treatment_source(a);
  check_positive(p_a, "P_A(a | S=1)");
  const double p_source = 1.0 - fit.selection_marginal;
  check_positive(p_source, "P_S(S=1)");
  // Normalizer P(A = a | S = 1) * P(S = 1 [, W = w]).
  double norm = p_a * p_source;
  if (group) {
    check_positive(fit.group_share_source[*group], "P(W=w | S=1)");
    norm *= fit.group_share_source[*group];
  }

  // Interventions in the target environment for each group that occurs.
  std::array<std::optional<MediatorIntervention>, 2> g_star;
  std::array<std::vector<std::size_t>, 2> rows_by_group;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.s[i] != 1 || t.a[i] != a || !t.m[i] || !in_group(t, i, group)) continue;
    rows_by_group[t.w[i]].push_back(i);
  }

  TargetingWeights out;
  out.h.assign(t.size(), 0.0);
  Covariates cov;
  cov.a = a;
  for (int w = 0; w < 2; ++w) {
    const auto& rows = rows_by_group[w];
    if (rows.empty()) continue;
    g_star[w] = nuisance::mediator_intervention_density(fit, a_star, 0, w);
    std::vector<double> c(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) c[k] = t.c_obs[rows[k]];
    const std::vector<double> g_num = g_star[w]->density(c);
    double w_odds = 1.0;
    if (!group) {
      check_positive(fit.group_share_source[w], "P(W=w | S=1)");
      w_odds = fit.group_share_target[w] / fit.group_share_source[w];
    }
    const auto& med_source = fit.mediator[1][w];
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const std::size_t i = rows[k];
      cov.w = w;
      cov.r = t.r[i];
      cov.s = 1;
      const double g_den = med_source.density(c[k], cov);
      const double r_den = fit.intermediate[1].density(t.r[i], cov);
      cov.s = 0;
      const double r_num = fit.intermediate[0].density(t.r[i], cov);
      const double h = g_num[k] * r_num * w_odds / (g_den * r_den * norm);
      if (!std::isfinite(h)) throw PositivityError("non-finite targeting weight on row " + std::to_string(i));
      out.h[i] = h;
    }
  }

  std::vector<double> nonzero;
  for (double h : out.h)
    if (h > 0.0) nonzero.push_back(h);
  out.nonzero = nonzero.size();
  if (nonzero.empty()) return out;
  out.threshold = std::numeric_limits<double>::infinity();
  if (options.truncation_quantile < 1.0) {
    out.threshold = quantile(nonzero, options.truncation_quantile);
    for (double& h : out.h) {
      if (h > out.threshold) {
        h = out.threshold;
        ++out.truncated;
      }
    }
  }
  return out;
}

TargetingResult target_outcome_model(const nuisance::LogisticFit& initial, const ObservationTable& t,
                                     std::span<const double> h, const TmleOptions& options) {
  if (h.size() != t.size()) throw ConfigError("tmle", "weight vector length does not match rows");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (h[i] < 0.0 || !std::isfinite(h[i])) throw ConfigError("tmle", "targeting weights must be finite and >= 0");
    if (h[i] > 0.0) rows.push_back(i);
  }
  if (rows.empty()) throw EstimationError("tmle", "targeting failed: all weights are zero");

  std::vector<double> offset(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k)
    offset[k] = initial.linear_predictor(nuisance::covariates_of(t, rows[k]));

  const double inv_n = 1.0 / static_cast<double>(t.size());
  auto score_and_info = [&](double eps, double& info) {
    double score = 0.0;
    info = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const std::size_t i = rows[k];
      const double q = logistic(offset[k] + eps);
      score += h[i] * (static_cast<double>(t.y[i]) - q);
      info += h[i] * q * (1.0 - q);
    }
    info *= inv_n;
    return score * inv_n;
  };

  // The score is strictly decreasing in epsilon: Newton steps kept inside a
  // shrinking bracket.
  TargetingResult res;
  double lo = -50.0, hi = 50.0;
  double eps = 0.0;
  double info = 0.0;
  double score = score_and_info(eps, info);
  int it = 0;
  for (; it < options.max_iterations && std::abs(score) >= options.score_tolerance; ++it) {
    if (score > 0) lo = eps;
    else hi = eps;
    double next = info > 0.0 ? eps + score / info : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == eps) break;
    eps = next;
    score = score_and_info(eps, info);
  }
  if (!(std::abs(score) < 1e-8))
    throw EstimationError("tmle", "targeting step did not solve the score equation (|score| = " +
                                      std::to_string(std::abs(score)) + ")");
  res.epsilon = eps;
  res.score = score;
  res.iterations = it;
  res.q_star.assign(t.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < rows.size(); ++k) res.q_star[rows[k]] = logistic(offset[k] + eps);
  return res;
}

std::vector<double> marginalize(const nuisance::LogisticFit& outcome, double epsilon, int a,
                                const MediatorIntervention& g_star, const ObservationTable& t,
                                std::span<const std::size_t> rows) {
  const double slope = outcome.coefficient(Column::c);
  std::vector<double> base(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    Covariates cov = nuisance::covariates_of(t, rows[k]);
    cov.a = a;
    cov.c = 0.0;
    base[k] = outcome.linear_predictor(cov) + epsilon;
  }
  std::vector<double> out(rows.size());
  kernels::omp::marginalize_logistic(base, slope, g_star.support, g_star.mass, out);
  return out;
}

namespace {

// Gauss-Hermite nodes and weights (weight function exp(-x^2)) by Golub-Welsch.
struct HermiteRule {
  std::vector<double> x, w;
};

const HermiteRule& hermite_rule() {
  static const HermiteRule rule = [] {
    constexpr int n = 40;
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    HermiteRule r;
    for (int k = 0; k < n; ++k) {
      r.x.push_back(es.eigenvalues()(k));
      const double v = es.eigenvectors()(0, k);
      r.w.push_back(std::sqrt(M_PI) * v * v);
    }
    return r;
  }();
  return rule;
}

// Targeted outcome averaged over the outer rows, as a function of the mediator:
// qbar(c) = mean_j logistic(base_j + slope * c).
class MediatorResponse {
 public:
  MediatorResponse(std::vector<double> base, double slope, double lo, double hi)
      : base_(std::move(base)), slope_(slope) {
    constexpr std::size_t kGrid = 1024;
    lo_ = lo;
    step_ = (hi - lo) / static_cast<double>(kGrid - 1);
    std::vector<double> nodes(kGrid);
    for (std::size_t k = 0; k < kGrid; ++k) nodes[k] = slope_ * (lo_ + step_ * static_cast<double>(k));
    const std::vector<double> mass(base_.size(), 1.0 / static_cast<double>(base_.size()));
    table_.resize(kGrid);
    kernels::omp::marginalize_logistic(nodes, 1.0, base_, mass, table_);
  }

  double operator()(double c) const {
    const double pos = (c - lo_) / step_;
    if (!(pos > 0.0)) return exact(c);
    const auto k = static_cast<std::size_t>(pos);
    if (k + 1 >= table_.size()) return exact(c);
    const double f = pos - static_cast<double>(k);
    return table_[k] + f * (table_[k + 1] - table_[k]);
  }

 private:
  double exact(double c) const {
    double s = 0.0;
    for (double b : base_) s += logistic(b + slope_ * c);
    return s / static_cast<double>(base_.size());
  }

  std::vector<double> base_;
  double slope_;
  double lo_ = 0.0, step_ = 1.0;
  std::vector<double> table_;
};

// Influence of estimating the mediator intervention g*(. | a*, W = w) from
// target data: one term for the mediator model (complete target rows with
// A = a*, W = w) and one for the intermediate model (target rows with
// A = a*). Each term is centred; `scale` weights the group in a pooled psi.
void add_intervention_eic(const NuisanceFit& fit, const ObservationTable& t, int a_star, int w,
                          const std::vector<double>& outer_base, double slope, double scale,
                          std::vector<double>& eic) {
  const ConditionalModel& med = fit.mediator[0][w];
  std::vector<std::size_t> r_rows, c_rows;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.s[i] != 0 || t.a[i] != a_star) continue;
    r_rows.push_back(i);
    if (t.w[i] == w && t.m[i]) c_rows.push_back(i);
  }
  if (r_rows.empty() || c_rows.empty()) return;

  auto conditional_mean = [&](std::size_t i) {
    Covariates cov = nuisance::covariates_of(t, i);
    cov.w = w;
    return cov;
  };

  std::vector<double> nu(t.size(), 0.0);
  std::vector<double> c_term(t.size(), 0.0);
  if (med.type == VariableType::binary) {
    const MediatorResponse q(outer_base, slope, 0.0, 1.0);
    const double q0 = q(0.0), q1 = q(1.0);
    for (std::size_t i : r_rows) {
      const double p1 = med.logistic.predict(conditional_mean(i));
      nu[i] = p1 * q1 + (1.0 - p1) * q0;
    }
    for (std::size_t i : c_rows) c_term[i] = (t.c_obs[i] > 0.5 ? q1 : q0) - nu[i];
  } else {
    const double sd = med.gaussian.residual_sd;
    const HermiteRule& gh = hermite_rule();
    const double reach = std::sqrt(2.0) * sd * gh.x.back();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::vector<double> mu(t.size(), 0.0);
    for (std::size_t i : r_rows) {
      mu[i] = med.gaussian.mean(conditional_mean(i));
      lo = std::min(lo, mu[i] - reach);
      hi = std::max(hi, mu[i] + reach);
    }
    for (std::size_t i : c_rows) {
      lo = std::min(lo, t.c_obs[i]);
      hi = std::max(hi, t.c_obs[i]);
    }
    const MediatorResponse q(outer_base, slope, lo, hi);
    for (std::size_t i : r_rows) {
      double v = 0.0;
      for (std::size_t k = 0; k < gh.x.size(); ++k) v += gh.w[k] * q(mu[i] + std::sqrt(2.0) * sd * gh.x[k]);
      nu[i] = v / std::sqrt(M_PI);
    }
    for (std::size_t i : c_rows) c_term[i] = q(t.c_obs[i]) - nu[i];
  }

  const double n = static_cast<double>(t.size());
  auto add_centred = [&](const std::vector<std::size_t>& rows, const std::vector<double>& v) {
    double mean = 0.0;
    for (std::size_t i : rows) mean += v[i];
    mean /= static_cast<double>(rows.size());
    const double factor = scale * n / static_cast<double>(rows.size());
    for (std::size_t i : rows) eic[i] += factor * (v[i] - mean);
  };
  add_centred(c_rows, c_term);
  add_centred(r_rows, nu);
}

}  // namespace

PsiEstimate estimate_psi(const NuisanceFit& fit, const ObservationTable& t, int a, int a_star,
                         std::optional<int> group, const TmleOptions& options) {
  PsiEstimate est;
  est.a = a;
  est.a_star = a_star;
  est.group_w = group;

  std::array<std::vector<std::size_t>, 2> target_rows;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.s[i] == 0 && t.a[i] == a && in_group(t, i, group)) target_rows[t.w[i]].push_back(i);
  est.n_target = target_rows[0].size() + target_rows[1].size();
  if (est.n_target == 0)
    throw StratumError("tmle", "no target rows with A=" + std::to_string(a) +
                                   (group ? ", W=" + std::to_string(*group) : std::string()));

  TargetingWeights weights = compute_targeting_weights(fit, t, a, a_star, group, options);
  const TargetingResult targeted = target_outcome_model(fit.outcome_model, t, weights.h, options);
  est.epsilon = targeted.epsilon;
  est.truncated = weights.truncated;

  std::vector<double> m_values(t.size(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  for (int w = 0; w < 2; ++w) {
    if (target_rows[w].empty()) continue;
    const MediatorIntervention g = nuisance::mediator_intervention_density(fit, a_star, 0, w);
    const std::vector<double> m = marginalize(fit.outcome_model, targeted.epsilon, a, g, t, target_rows[w]);
    for (std::size_t k = 0; k < m.size(); ++k) m_values[target_rows[w][k]] = m[k];
  }
  // Summed in row order so the result does not depend on grouping.
  for (double v : m_values)
    if (!std::isnan(v)) sum += v;
  const double n_q = static_cast<double>(est.n_target);
  est.psi = sum / n_q;

  const double n = static_cast<double>(t.size());
  const double target_share = n_q / n;
  est.eic.assign(t.size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (weights.h[i] > 0.0) est.eic[i] = weights.h[i] * (static_cast<double>(t.y[i]) - targeted.q_star[i]);
    if (!std::isnan(m_values[i])) est.eic[i] += (m_values[i] - est.psi) / target_share;
  }
  const double slope = fit.outcome_model.coefficient(Column::c);
  for (int w = 0; w < 2; ++w) {
    if (target_rows[w].empty()) continue;
    std::vector<double> base(target_rows[w].size());
    for (std::size_t k = 0; k < base.size(); ++k) {
      Covariates cov = nuisance::covariates_of(t, target_rows[w][k]);
      cov.a = a;
      cov.c = 0.0;
      base[k] = fit.outcome_model.linear_predictor(cov) + targeted.epsilon;
    }
    const double scale = static_cast<double>(target_rows[w].size()) / n_q;
    add_intervention_eic(fit, t, a_star, w, base, slope, scale, est.eic);
  }
  est.mean_eic = std::accumulate(est.eic.begin(), est.eic.end(), 0.0) / n;
  double ss = 0.0;
  for (double d : est.eic) ss += (d - est.mean_eic) * (d - est.mean_eic);
  est.se = std::sqrt(ss / (n - 1.0) / n);
  est.weights = std::move(weights.h);
  return est;
}

const char* to_string(EffectKind k) { return k == EffectKind::sde ? "SDE" : "SIE"; }

EffectEstimate contrast(EffectKind kind, PsiEstimate minuend, PsiEstimate subtrahend) {
  EffectEstimate e;
  e.kind = kind;
  e.group_w = minuend.group_w;
  e.point = minuend.psi - subtrahend.psi;
  const std::size_t n = minuend.eic.size();
  e.eic.resize(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e.eic[i] = minuend.eic[i] - subtrahend.eic[i];
    mean += e.eic[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double d : e.eic) ss += (d - mean) * (d - mean);
  e.se = std::sqrt(ss / (static_cast<double>(n) - 1.0) / static_cast<double>(n));
  e.ci_low = e.point - kWaldZ * e.se;
  e.ci_high = e.point + kWaldZ * e.se;
  e.minuend = std::move(minuend);
  e.subtrahend = std::move(subtrahend);
  return e;
}

EffectEstimate estimate_sde(const NuisanceFit& fit, const ObservationTable& t,
                            std::optional<int> group, const TmleOptions& options) {
  return contrast(EffectKind::sde, estimate_psi(fit, t, 1, 0, group, options),
                  estimate_psi(fit, t, 0, 0, group, options));
}

EffectEstimate estimate_sie(const NuisanceFit& fit, const ObservationTable& t,
                            std::optional<int> group, const TmleOptions& options) {
  return contrast(EffectKind::sie, estimate_psi(fit, t, 1, 1, group, options),
                  estimate_psi(fit, t, 1, 0, group, options));
}

Effects estimate_effects(const NuisanceFit& fit, const ObservationTable& t,
                         std::optional<int> group, const TmleOptions& options) {
  PsiEstimate p11 = estimate_psi(fit, t, 1, 1, group, options);
  PsiEstimate p10 = estimate_psi(fit, t, 1, 0, group, options);
  PsiEstimate p00 = estimate_psi(fit, t, 0, 0, group, options);
  Effects out;
  out.total = p11.psi - p00.psi;
  out.sie = contrast(EffectKind::sie, std::move(p11), p10);
  out.sde = contrast(EffectKind::sde, std::move(p10), std::move(p00));
  return out;
}

}  // namespace medtransport::tmle
