#include "medtransport/dgp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <vector>

#include "medtransport/error.hpp"
#include "medtransport/random.hpp"

namespace medtransport::dgp {

namespace {

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw ConfigError("dgp", std::string("non-finite parameter: ") + name);
}

}  // namespace

void StructuralParams::validate() const {
  const std::pair<double, const char*> all[] = {
      {p_treat, "p_treat"},           {w_source_shift, "w_source_shift"},
      {w_noise_sd, "w_noise_sd"},     {coef_r_given_a, "coef_r_given_a"},
      {noise_sd_r, "noise_sd_r"},     {coef_c_given_r, "coef_c_given_r"},
      {coef_c_given_w1, "coef_c_given_w1"}, {coef_c_given_w0, "coef_c_given_w0"},
      {noise_sd_c, "noise_sd_c"},     {outcome_a, "outcome_a"},
      {outcome_c, "outcome_c"},       {outcome_w, "outcome_w"}};
  for (auto [v, name] : all) require_finite(v, name);
  if (p_treat < 0.0 || p_treat > 1.0) throw ConfigError("dgp", "p_treat must lie in [0,1]");
  if (w_noise_sd < 0.0 || noise_sd_r < 0.0 || noise_sd_c < 0.0)
    throw ConfigError("dgp", "standard deviations must be nonnegative");
}

ObservationTable generate(const StructuralParams& p, std::size_t n_source, std::size_t n_target,
                          std::uint64_t seed) {
  p.validate();
  if (n_source < 1 || n_target < 1) throw ConfigError("dgp", "n_source and n_target must be >= 1");

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  ObservationTable t;
  t.has_truth = true;
  const std::size_t n = n_source + n_target;
  t.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int s = i < n_source ? 1 : 0;
    const int a = unif(rng) < p.p_treat ? 1 : 0;
    const double w_prob = std::clamp(p.w_source_shift * s + p.w_noise_sd * normal(rng), 0.0, 1.0);
    const int w = unif(rng) < w_prob ? 1 : 0;
    const double r = p.coef_r_given_a * a + p.noise_sd_r * normal(rng);
    const double c = p.coef_c_given_r * r + p.coef_c_given_w1 * w + p.coef_c_given_w0 * (1 - w) +
                     p.noise_sd_c * normal(rng);
    const double eta = p.outcome_a * a + p.outcome_c * c + p.outcome_w * w;
    const int y = unif(rng) < logistic(eta) ? 1 : 0;
    t.push_back(static_cast<std::int64_t>(i), s, a, w, r, c, true, y);
  }
  return t;
}

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::mcar: return "MCAR";
    case Mechanism::mar: return "MAR";
    case Mechanism::mnar: return "MNAR";
  }
  return "?";
}

Mechanism parse_mechanism(const std::string& s) {
  std::string u;
  for (char ch : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  if (u == "MCAR") return Mechanism::mcar;
  if (u == "MAR") return Mechanism::mar;
  if (u == "MNAR") return Mechanism::mnar;
  throw ConfigError("dgp", "unknown missingness mechanism: " + s);
}

void MissingnessSpec::validate() const {
  if (!std::isfinite(lambda)) throw ConfigError("dgp", "missingness lambda must be finite");
  if (target_group != 0 && target_group != 1)
    throw ConfigError("dgp", "target_group must be 0 or 1");
  if (target_proportion && !(*target_proportion >= 0.0 && *target_proportion <= 1.0))
    throw ConfigError("dgp", "target_proportion must lie in [0,1]");
  if (environment && *environment != 0 && *environment != 1)
    throw ConfigError("dgp", "environment must be 0 or 1");
}

namespace {

struct Affected {
  std::vector<std::size_t> rows;  // affected rows currently observed
  std::vector<double> score;      // x_i per affected observed row
  std::vector<double> u;          // uniform per affected observed row
  std::size_t already_missing = 0;
  std::size_t total = 0;
};

std::size_t count_missing(const Affected& af, double offset, double lambda) {
  std::size_t k = af.already_missing;
  for (std::size_t j = 0; j < af.rows.size(); ++j) {
    if (!(af.u[j] < logistic(offset + lambda * af.score[j]))) ++k;
  }
  return k;
}

}  // namespace

MissingnessResult apply_missingness(const ObservationTable& table, const MissingnessSpec& spec,
                                    std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Affected af;
  // One uniform per row regardless of eligibility keeps the stream aligned
  // with row position.
  std::vector<double> u_all(table.size());
  for (double& u : u_all) u = unif(rng);

  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.w[i] != spec.target_group) continue;
    if (spec.environment && table.s[i] != *spec.environment) continue;
    ++af.total;
    if (!table.m[i]) {
      ++af.already_missing;
      continue;
    }
    double x = 0.0;
    switch (spec.mechanism) {
      case Mechanism::mcar: x = 0.0; break;
      case Mechanism::mar: x = table.a[i] + table.r[i]; break;
      case Mechanism::mnar: x = table.has_truth ? table.c_true[i] : table.c_obs[i]; break;
    }
    af.rows.push_back(i);
    af.score.push_back(x);
    af.u.push_back(u_all[i]);
  }

  const double lambda = spec.mechanism == Mechanism::mcar ? 0.0 : spec.lambda;
  MissingnessResult res;
  res.affected_rows = af.total;

  if (spec.target_proportion) {
    const double target = *spec.target_proportion;
    if (af.total == 0)
      throw CalibrationError("cannot calibrate missingness: target group has no rows");
    if (target <= 0.0 || target >= 1.0) {
      // Closed-form extremes: nobody or everybody newly missing.
      res.offset = target <= 0.0 ? std::numeric_limits<double>::infinity()
                                 : -std::numeric_limits<double>::infinity();
      const double frac =
          static_cast<double>(count_missing(af, res.offset, lambda)) / static_cast<double>(af.total);
      if (std::abs(frac - target) > kCalibrationTolerance)
        throw CalibrationError("missingness proportion " + std::to_string(target) +
                               " unreachable: rows already missing");
    } else {
    double max_abs = 0.0;
    for (double x : af.score) max_abs = std::max(max_abs, std::abs(x));
    // Missing fraction is nonincreasing in the offset.
    double lo = -(std::abs(lambda) * max_abs + 40.0);
    double hi = -lo;
    const double n = static_cast<double>(af.total);
    double offset = 0.0;
    double frac = static_cast<double>(count_missing(af, offset, lambda)) / n;
    int it = 0;
    while (std::abs(frac - target) > kCalibrationTolerance && it < kCalibrationMaxIterations) {
      if (frac > target) lo = offset;
      else hi = offset;
      offset = 0.5 * (lo + hi);
      frac = static_cast<double>(count_missing(af, offset, lambda)) / n;
      ++it;
    }
    if (std::abs(frac - target) > kCalibrationTolerance)
      throw CalibrationError("missingness calibration did not reach target proportion " +
                             std::to_string(target) + " (realized " + std::to_string(frac) + ")");
    res.offset = offset;
    res.iterations = it;
    }
  }

  res.table = table;
  std::size_t missing = af.already_missing;
  for (std::size_t j = 0; j < af.rows.size(); ++j) {
    if (!(af.u[j] < logistic(res.offset + lambda * af.score[j]))) {
      const std::size_t i = af.rows[j];
      res.table.m[i] = 0;
      res.table.c_obs[i] = kMissing;
      ++missing;
    }
  }
  res.realized_fraction =
      af.total == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(af.total);
  return res;
}

OracleEffects oracle_effects(const StructuralParams& p, std::size_t n_mc, std::uint64_t seed) {
  p.validate();
  if (n_mc < kOracleMinDraws)
    throw ConfigError("dgp", "oracle requires n_mc >= " + std::to_string(kOracleMinDraws));

  OracleEffects out;
  out.n_mc = n_mc;
  for (int w = 0; w < 2; ++w) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(w)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double c_shift = p.coef_c_given_w1 * w + p.coef_c_given_w0 * (1 - w);
    double sum[2][2] = {{0, 0}, {0, 0}};
    double sum_sde = 0, sum_sde2 = 0, sum_sie = 0, sum_sie2 = 0;
    for (std::size_t k = 0; k < n_mc; ++k) {
      const double er = p.noise_sd_r * normal(rng);
      const double ec = p.noise_sd_c * normal(rng);
      double c_by_astar[2];
      for (int as = 0; as < 2; ++as) {
        const double r = p.coef_r_given_a * as + er;
        c_by_astar[as] = p.coef_c_given_r * r + c_shift + ec;
      }
      double q[2][2];
      for (int a = 0; a < 2; ++a) {
        for (int as = 0; as < 2; ++as) {
          q[a][as] = logistic(p.outcome_a * a + p.outcome_c * c_by_astar[as] + p.outcome_w * w);
          sum[a][as] += q[a][as];
        }
      }
      const double sde = q[1][0] - q[0][0];
      const double sie = q[1][1] - q[1][0];
      sum_sde += sde;
      sum_sde2 += sde * sde;
      sum_sie += sie;
      sum_sie2 += sie * sie;
    }
    const double n = static_cast<double>(n_mc);
    auto summarize = [n](double s1, double s2) {
      const double mean = s1 / n;
      const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
      return OracleValue{mean, std::sqrt(var / n)};
    };
    out.sde[w] = summarize(sum_sde, sum_sde2);
    out.sie[w] = summarize(sum_sie, sum_sie2);
    for (int a = 0; a < 2; ++a)
      for (int as = 0; as < 2; ++as) out.psi[w][a][as] = sum[a][as] / n;
  }
  return out;
}

}  // namespace medtransport::dgp
