#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "medtransport/table.hpp"

namespace medtransport::dgp {

/// Constants of the linear-Gaussian / logistic structural model.
///
///   A ~ Bern(p_treat)
///   W ~ Bern(clamp(w_source_shift * S + Normal(0, w_noise_sd), 0, 1))
///   R = coef_r_given_a * A + Normal(0, noise_sd_r)
///   C = coef_c_given_r * R + coef_c_given_w1 * W + coef_c_given_w0 * (1 - W) + Normal(0, noise_sd_c)
///   Y ~ Bern(logistic(outcome_a * A + outcome_c * C + outcome_w * W))
struct StructuralParams {
  double p_treat = 0.5;
  double w_source_shift = 0.5;
  double w_noise_sd = 0.1;
  double coef_r_given_a = 0.7;
  double noise_sd_r = 0.5;
  double coef_c_given_r = 1.5;
  double coef_c_given_w1 = 0.2;
  double coef_c_given_w0 = 0.8;
  double noise_sd_c = 0.5;
  double outcome_a = 0.2;
  double outcome_c = 2.5;
  double outcome_w = -0.7;

  /// Throws ConfigError on non-finite values, probabilities outside [0,1]
  /// or negative standard deviations.
  void validate() const;
};

ObservationTable generate(const StructuralParams& params, std::size_t n_source,
                          std::size_t n_target, std::uint64_t seed);

enum class Mechanism { mcar, mar, mnar };

std::string to_string(Mechanism m);
Mechanism parse_mechanism(const std::string& s);

/// Missingness on the mediator. Rows in `environment` with W == target_group
/// are observed with probability logistic(offset + lambda * x), where x is
/// 0 (MCAR), A + R (MAR) or the mediator itself (MNAR). All other rows keep
/// their current observation status.
struct MissingnessSpec {
  Mechanism mechanism = Mechanism::mnar;
  double lambda = 1.0;
  int target_group = 0;
  std::optional<double> target_proportion;
  /// Environment receiving missingness; nullopt means both.
  std::optional<int> environment = 0;

  void validate() const;
};

struct MissingnessResult {
  ObservationTable table;
  double offset = 0.0;             ///< calibrated (or zero) intercept
  double realized_fraction = 0.0;  ///< missing fraction among affected rows
  std::size_t affected_rows = 0;
  int iterations = 0;
};

inline constexpr double kCalibrationTolerance = 0.005;
inline constexpr int kCalibrationMaxIterations = 60;

MissingnessResult apply_missingness(const ObservationTable& table, const MissingnessSpec& spec,
                                    std::uint64_t seed);

struct OracleValue {
  double value = 0.0;
  double se = 0.0;
};

struct OracleEffects {
  std::array<OracleValue, 2> sde;  ///< indexed by W group
  std::array<OracleValue, 2> sie;
  /// Mean potential outcomes psi(a, a*) per group: [w][a][a*].
  std::array<std::array<std::array<double, 2>, 2>, 2> psi{};
  std::size_t n_mc = 0;
};

inline constexpr std::size_t kOracleMinDraws = 100000;

/// Brute-force Monte-Carlo truth for the group-conditional stochastic effects
/// in the target environment. The mediator draws for a* = 0 and a* = 1 share
/// noise (common random numbers).
OracleEffects oracle_effects(const StructuralParams& params, std::size_t n_mc, std::uint64_t seed);

}  // namespace medtransport::dgp
