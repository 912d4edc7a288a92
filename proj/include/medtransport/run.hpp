#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "medtransport/dgp.hpp"
#include "medtransport/nuisance.hpp"
#include "medtransport/sensitivity.hpp"
#include "medtransport/tmle.hpp"

namespace medtransport::run {

inline constexpr const char* kVersion = "0.1.0";

enum class Mode { simulate, analyze, sweep, oracle };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct RunConfig {
  Mode mode = Mode::analyze;
  std::uint64_t seed = 20240601;

  dgp::StructuralParams dgp;
  std::size_t n_source = 2500;
  std::size_t n_target = 2500;

  /// Applied to simulated data in simulate and analyze modes; the base
  /// mechanism of the missingness sweep.
  std::optional<dgp::MissingnessSpec> missingness;

  double r2 = 0.1;  ///< single sensitivity parameter of analyze mode
  sensitivity::SensitivityConfig sensitivity;

  double ridge = 0.0;
  double truncation_quantile = 0.999;
  std::size_t n_mc = 1000;
  std::size_t bootstrap_n_mc = 250;
  nuisance::VariableType mediator_type = nuisance::VariableType::continuous;
  nuisance::VariableType intermediate_type = nuisance::VariableType::continuous;

  /// Monte-Carlo draws of the truth; 0 skips it outside oracle mode.
  std::size_t oracle_n_mc = 1000000;

  std::optional<std::filesystem::path> input;
  std::filesystem::path out_dir = "out";
  bool keep_truth = false;

  RunConfig();

  /// Throws ConfigError on any violated constraint.
  void validate() const;

  nuisance::NuisanceOptions nuisance_options() const;
  tmle::TmleOptions tmle_options() const;

  /// Everything that determines the numeric outputs (the output directory is
  /// not echoed).
  nlohmann::ordered_json to_json() const;
  /// Keys absent from `j` keep their defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::filesystem::path& path);
};

std::vector<double> default_r2_grid();

/// Parses "0.1,0.2,0.3".
std::vector<double> parse_grid(const std::string& s);

/// Parses "none", "<mechanism>" or "<mechanism>:<proportion>".
std::optional<dgp::MissingnessSpec> parse_missingness(const std::string& s,
                                                      std::optional<dgp::MissingnessSpec> base);

struct RunOutput {
  nlohmann::ordered_json document;
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

/// Executes the configured mode and writes its files into config.out_dir.
RunOutput run(const RunConfig& config);

/// Long-format curve file: group_w,r2,sie_lower,sie_upper,ci_low,ci_high,contains_null.
std::string curve_csv(const std::vector<sensitivity::CurvePoint>& curve);

}  // namespace medtransport::run
