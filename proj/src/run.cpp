#include "medtransport/run.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Core>

#include "medtransport/csv.hpp"
#include "medtransport/error.hpp"
#include "medtransport/random.hpp"

namespace medtransport::run {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Sub-seeds of the master seed.
enum : std::uint64_t { kSeedData = 1, kSeedMissing = 2, kSeedOracle = 3, kSeedEstimation = 4 };

template <class T>
void read(const json& section, const char* key, T& out) {
  if (!section.contains(key)) return;
  try {
    out = section.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("cli", std::string("invalid value for '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& section, const std::string& name,
                    std::initializer_list<const char*> known) {
  if (!section.is_object()) throw ConfigError("cli", "section '" + name + "' must be an object");
  for (const auto& item : section.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError("cli", "unknown key '" + item.key() + "' in section '" + name + "'");
  }
}

ordered_json number_or_null(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

ordered_json effect_json(const tmle::EffectEstimate& e) {
  return {{"point", e.point},
          {"se", e.se},
          {"ci_low", e.ci_low},
          {"ci_high", e.ci_high},
          {"mean_eic", [&] {
             double s = 0.0;
             for (double v : e.eic) s += v;
             return e.eic.empty() ? 0.0 : s / static_cast<double>(e.eic.size());
           }()}};
}

ordered_json psi_json(const tmle::PsiEstimate& p) {
  return {{"a", p.a},
          {"a_star", p.a_star},
          {"psi", p.psi},
          {"se", p.se},
          {"epsilon", p.epsilon},
          {"mean_eic", p.mean_eic},
          {"truncated_weights", p.truncated},
          {"n_target", p.n_target}};
}

ordered_json curve_json(const std::vector<sensitivity::CurvePoint>& curve) {
  ordered_json rows = ordered_json::array();
  for (const auto& p : curve)
    rows.push_back({{"group_w", p.group_w},
                    {"r2", p.r2},
                    {"sie_point", p.sie_point},
                    {"sie_se", p.sie_se},
                    {"sie_lower", p.sie_lower},
                    {"sie_upper", p.sie_upper},
                    {"ci_low", p.ci_low},
                    {"ci_high", p.ci_high},
                    {"contains_null", p.contains_null},
                    {"clipped_weights", p.clipped},
                    {"failed_replicates", p.failed_replicates}});
  return rows;
}

ordered_json crossing_json(const std::array<sensitivity::NullCrossing, 2>& c) {
  ordered_json out = ordered_json::array();
  for (const auto& nc : c)
    out.push_back({{"group_w", nc.group_w},
                   {"r2_star", nc.r2_star ? ordered_json(*nc.r2_star) : ordered_json(nullptr)}});
  return out;
}

ordered_json oracle_json(const dgp::OracleEffects& o) {
  ordered_json groups = ordered_json::array();
  for (int w = 0; w < 2; ++w) {
    ordered_json psi = ordered_json::array();
    for (int a = 0; a < 2; ++a)
      for (int as = 0; as < 2; ++as)
        psi.push_back({{"a", a}, {"a_star", as}, {"psi", o.psi[w][a][as]}});
    groups.push_back({{"group_w", w},
                      {"sde", o.sde[w].value},
                      {"sde_mc_se", o.sde[w].se},
                      {"sie", o.sie[w].value},
                      {"sie_mc_se", o.sie[w].se},
                      {"psi", psi}});
  }
  return {{"n_mc", o.n_mc}, {"groups", groups}};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cli", "cannot write output file: " + path.string());
  out << content;
  if (!out) throw ConfigError("cli", "failed writing output file: " + path.string());
}

struct Data {
  ObservationTable table;
  bool simulated = false;
  std::optional<dgp::MissingnessResult> missing;
  std::vector<std::string> warnings;
};

Data simulate(const RunConfig& cfg, bool apply_missing) {
  Data d;
  d.simulated = true;
  d.table = dgp::generate(cfg.dgp, cfg.n_source, cfg.n_target, derive_seed(cfg.seed, kSeedData));
  if (apply_missing && cfg.missingness) {
    d.missing = dgp::apply_missingness(d.table, *cfg.missingness, derive_seed(cfg.seed, kSeedMissing));
    d.table = d.missing->table;
  }
  return d;
}

Data acquire(const RunConfig& cfg, bool apply_missing) {
  if (!cfg.input) return simulate(cfg, apply_missing);
  csv::LoadResult lr = csv::load_csv(*cfg.input);
  Data d;
  d.table = std::move(lr.table);
  d.warnings = std::move(lr.warnings);
  return d;
}

ordered_json missing_fractions(const ObservationTable& t) {
  ordered_json out = ordered_json::array();
  for (int s = 0; s < 2; ++s) {
    for (int w = 0; w < 2; ++w) {
      std::size_t n = 0, missing = 0;
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (t.s[i] != s || t.w[i] != w) continue;
        ++n;
        missing += t.m[i] ? 0 : 1;
      }
      out.push_back({{"s", s}, {"group_w", w}, {"rows", n},
                     {"missing_fraction", n ? double(missing) / double(n) : 0.0}});
    }
  }
  return out;
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::simulate: return "simulate";
    case Mode::analyze: return "analyze";
    case Mode::sweep: return "sweep";
    case Mode::oracle: return "oracle";
  }
  return "analyze";
}

Mode parse_mode(const std::string& s) {
  if (s == "simulate") return Mode::simulate;
  if (s == "analyze") return Mode::analyze;
  if (s == "sweep") return Mode::sweep;
  if (s == "oracle") return Mode::oracle;
  throw ConfigError("cli", "unknown mode '" + s + "' (expected simulate, analyze, sweep or oracle)");
}

std::vector<double> default_r2_grid() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

RunConfig::RunConfig() {
  sensitivity.r2_grid = default_r2_grid();
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cli", "invalid r2 grid value '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("cli", "r2 grid is empty");
  return out;
}

std::optional<dgp::MissingnessSpec> parse_missingness(const std::string& s,
                                                      std::optional<dgp::MissingnessSpec> base) {
  if (s == "none") return std::nullopt;
  dgp::MissingnessSpec spec = base.value_or(dgp::MissingnessSpec{});
  const auto colon = s.find(':');
  spec.mechanism = dgp::parse_mechanism(s.substr(0, colon));
  if (colon != std::string::npos) {
    try {
      spec.target_proportion = std::stod(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("cli", "invalid missing proportion in '" + s + "'");
    }
  }
  return spec;
}

void RunConfig::validate() const {
  dgp.validate();
  if (n_source < 40 || n_target < 40) throw ConfigError("cli", "sample sizes must be at least 40");
  if (missingness) missingness->validate();
  if (!(r2 >= 0.0 && r2 < 1.0)) throw ConfigError("cli", "r2 must lie in [0, 1)");
  sensitivity.validate();
  if (!(ridge >= 0.0)) throw ConfigError("cli", "ridge must be >= 0");
  if (!(truncation_quantile > 0.0 && truncation_quantile <= 1.0))
    throw ConfigError("cli", "truncation_quantile must lie in (0, 1]");
  if (n_mc < 1) throw ConfigError("cli", "n_mc must be positive");
  if (oracle_n_mc != 0 && oracle_n_mc < dgp::kOracleMinDraws)
    throw ConfigError("cli", "oracle n_mc must be 0 or at least " + std::to_string(dgp::kOracleMinDraws));
  if (mode == Mode::oracle && oracle_n_mc == 0) throw ConfigError("cli", "oracle mode needs oracle n_mc > 0");
  if (input) {
    if (mode == Mode::simulate || mode == Mode::oracle)
      throw ConfigError("cli", "--input is only used by analyze and sweep modes");
    if (!std::filesystem::exists(*input))
      throw ConfigError("cli", "input file does not exist: " + input->string());
  }
}

nuisance::NuisanceOptions RunConfig::nuisance_options() const {
  nuisance::NuisanceOptions o;
  o.ridge = ridge;
  o.n_mc = n_mc;
  o.mediator_type = mediator_type;
  o.intermediate_type = intermediate_type;
  return o;
}

tmle::TmleOptions RunConfig::tmle_options() const {
  tmle::TmleOptions o;
  o.truncation_quantile = truncation_quantile;
  return o;
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["mode"] = to_string(mode);
  j["seed"] = seed;
  j["dgp"] = {{"p_treat", dgp.p_treat},
              {"w_source_shift", dgp.w_source_shift},
              {"w_noise_sd", dgp.w_noise_sd},
              {"coef_r_given_a", dgp.coef_r_given_a},
              {"noise_sd_r", dgp.noise_sd_r},
              {"coef_c_given_r", dgp.coef_c_given_r},
              {"coef_c_given_w1", dgp.coef_c_given_w1},
              {"coef_c_given_w0", dgp.coef_c_given_w0},
              {"noise_sd_c", dgp.noise_sd_c},
              {"outcome_a", dgp.outcome_a},
              {"outcome_c", dgp.outcome_c},
              {"outcome_w", dgp.outcome_w}};
  j["sample"] = {{"n_source", n_source}, {"n_target", n_target}};
  if (missingness) {
    const auto& m = *missingness;
    j["missingness"] = {{"mechanism", dgp::to_string(m.mechanism)},
                        {"lambda", m.lambda},
                        {"target_group", m.target_group},
                        {"proportion", m.target_proportion ? ordered_json(*m.target_proportion)
                                                           : ordered_json(nullptr)},
                        {"environment", m.environment ? ordered_json(*m.environment)
                                                      : ordered_json(nullptr)}};
  } else {
    j["missingness"] = nullptr;
  }
  j["sensitivity"] = {{"r2", r2},
                      {"r2_grid", sensitivity.r2_grid},
                      {"lambda", sensitivity.lambda ? ordered_json(*sensitivity.lambda)
                                                    : ordered_json(nullptr)},
                      {"alpha", sensitivity.alpha},
                      {"n_bootstrap", sensitivity.n_bootstrap}};
  j["nuisance"] = {{"ridge", ridge},
                   {"truncation_quantile", truncation_quantile},
                   {"n_mc", n_mc},
                   {"bootstrap_n_mc", bootstrap_n_mc},
                   {"mediator_type", nuisance::to_string(mediator_type)},
                   {"intermediate_type", nuisance::to_string(intermediate_type)}};
  j["oracle"] = {{"n_mc", oracle_n_mc}};
  j["io"] = {{"input", input ? ordered_json(input->generic_string()) : ordered_json(nullptr)},
             {"keep_truth", keep_truth}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, "<root>",
                 {"mode", "seed", "dgp", "sample", "missingness", "sensitivity", "nuisance", "oracle", "io"});
  if (j.contains("mode")) {
    std::string mode;
    read(j, "mode", mode);
    c.mode = parse_mode(mode);
  }
  read(j, "seed", c.seed);
  if (j.contains("dgp")) {
    const json& d = j["dgp"];
    reject_unknown(d, "dgp",
                   {"p_treat", "w_source_shift", "w_noise_sd", "coef_r_given_a", "noise_sd_r",
                    "coef_c_given_r", "coef_c_given_w1", "coef_c_given_w0", "noise_sd_c", "outcome_a",
                    "outcome_c", "outcome_w"});
    read(d, "p_treat", c.dgp.p_treat);
    read(d, "w_source_shift", c.dgp.w_source_shift);
    read(d, "w_noise_sd", c.dgp.w_noise_sd);
    read(d, "coef_r_given_a", c.dgp.coef_r_given_a);
    read(d, "noise_sd_r", c.dgp.noise_sd_r);
    read(d, "coef_c_given_r", c.dgp.coef_c_given_r);
    read(d, "coef_c_given_w1", c.dgp.coef_c_given_w1);
    read(d, "coef_c_given_w0", c.dgp.coef_c_given_w0);
    read(d, "noise_sd_c", c.dgp.noise_sd_c);
    read(d, "outcome_a", c.dgp.outcome_a);
    read(d, "outcome_c", c.dgp.outcome_c);
    read(d, "outcome_w", c.dgp.outcome_w);
  }
  if (j.contains("sample")) {
    const json& s = j["sample"];
    reject_unknown(s, "sample", {"n_source", "n_target"});
    read(s, "n_source", c.n_source);
    read(s, "n_target", c.n_target);
  }
  if (j.contains("missingness") && !j["missingness"].is_null()) {
    const json& m = j["missingness"];
    reject_unknown(m, "missingness", {"mechanism", "lambda", "target_group", "proportion", "environment"});
    dgp::MissingnessSpec spec;
    if (m.contains("mechanism")) {
      std::string mech;
      read(m, "mechanism", mech);
      spec.mechanism = dgp::parse_mechanism(mech);
    }
    read(m, "lambda", spec.lambda);
    read(m, "target_group", spec.target_group);
    if (m.contains("proportion") && !m["proportion"].is_null()) {
      double p = 0.0;
      read(m, "proportion", p);
      spec.target_proportion = p;
    }
    if (m.contains("environment")) {
      if (m["environment"].is_null()) {
        spec.environment.reset();
      } else {
        int e = 0;
        read(m, "environment", e);
        spec.environment = e;
      }
    }
    c.missingness = spec;
  }
  if (j.contains("sensitivity")) {
    const json& s = j["sensitivity"];
    reject_unknown(s, "sensitivity", {"r2", "r2_grid", "lambda", "alpha", "n_bootstrap"});
    read(s, "r2", c.r2);
    read(s, "r2_grid", c.sensitivity.r2_grid);
    if (s.contains("lambda") && !s["lambda"].is_null()) {
      double l = 0.0;
      read(s, "lambda", l);
      c.sensitivity.lambda = l;
    }
    read(s, "alpha", c.sensitivity.alpha);
    read(s, "n_bootstrap", c.sensitivity.n_bootstrap);
  }
  if (j.contains("nuisance")) {
    const json& n = j["nuisance"];
    reject_unknown(n, "nuisance",
                   {"ridge", "truncation_quantile", "n_mc", "bootstrap_n_mc", "mediator_type",
                    "intermediate_type"});
    read(n, "ridge", c.ridge);
    read(n, "truncation_quantile", c.truncation_quantile);
    read(n, "n_mc", c.n_mc);
    read(n, "bootstrap_n_mc", c.bootstrap_n_mc);
    std::string type;
    if (n.contains("mediator_type")) {
      read(n, "mediator_type", type);
      c.mediator_type = nuisance::parse_variable_type(type);
    }
    if (n.contains("intermediate_type")) {
      read(n, "intermediate_type", type);
      c.intermediate_type = nuisance::parse_variable_type(type);
    }
  }
  if (j.contains("oracle")) {
    reject_unknown(j["oracle"], "oracle", {"n_mc"});
    read(j["oracle"], "n_mc", c.oracle_n_mc);
  }
  if (j.contains("io")) {
    const json& io = j["io"];
    reject_unknown(io, "io", {"input", "out_dir", "keep_truth"});
    if (io.contains("input") && !io["input"].is_null()) {
      std::string p;
      read(io, "input", p);
      c.input = p;
    }
    if (io.contains("out_dir")) {
      std::string p;
      read(io, "out_dir", p);
      c.out_dir = p;
    }
    read(io, "keep_truth", c.keep_truth);
  }
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cli", "cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cli", "config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string curve_csv(const std::vector<sensitivity::CurvePoint>& curve) {
  std::string out = "group_w,r2,sie_lower,sie_upper,ci_low,ci_high,contains_null\n";
  for (const auto& p : curve) {
    out += std::to_string(p.group_w) + ',' + csv::format_double(p.r2) + ',' +
           csv::format_double(p.sie_lower) + ',' + csv::format_double(p.sie_upper) + ',' +
           csv::format_double(p.ci_low) + ',' + csv::format_double(p.ci_high) + ',' +
           (p.contains_null ? "true" : "false") + '\n';
  }
  return out;
}

RunOutput run(const RunConfig& cfg) {
  cfg.validate();
  RunOutput out;
  ordered_json& doc = out.document;
  doc["tool"] = "medtransport";
  doc["versions"] = {{"medtransport", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                   std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  doc["config"] = cfg.to_json();
  ordered_json diagnostics = ordered_json::object();

  std::filesystem::create_directories(cfg.out_dir);
  const std::uint64_t est_seed = derive_seed(cfg.seed, kSeedEstimation);
  const auto factory = sensitivity::default_factory(
      [&] {
        auto o = cfg.nuisance_options();
        o.seed = est_seed;
        return o;
      }(),
      cfg.bootstrap_n_mc);
  const tmle::TmleOptions topts = cfg.tmle_options();
  sensitivity::SensitivityConfig scfg = cfg.sensitivity;
  scfg.seed = est_seed;

  auto oracle_if_requested = [&](bool simulated) {
    if (simulated && cfg.oracle_n_mc > 0)
      doc["oracle"] = oracle_json(dgp::oracle_effects(cfg.dgp, cfg.oracle_n_mc, derive_seed(cfg.seed, kSeedOracle)));
  };

  switch (cfg.mode) {
    case Mode::oracle: {
      const auto o = dgp::oracle_effects(cfg.dgp, cfg.oracle_n_mc, derive_seed(cfg.seed, kSeedOracle));
      doc["oracle"] = oracle_json(o);
      const auto path = cfg.out_dir / "oracle.json";
      write_file(path, doc["oracle"].dump(2) + "\n");
      out.files.push_back(path);
      break;
    }
    case Mode::simulate: {
      Data d = simulate(cfg, true);
      std::ostringstream ss;
      csv::write_csv(ss, d.table, cfg.keep_truth);
      const auto path = cfg.out_dir / "dataset.csv";
      write_file(path, ss.str());
      out.files.push_back(path);
      diagnostics["rows"] = d.table.size();
      diagnostics["missing_fractions"] = missing_fractions(d.table);
      if (d.missing) {
        diagnostics["realized_missing_fraction"] = d.missing->realized_fraction;
        diagnostics["missingness_offset"] = number_or_null(d.missing->offset);
      }
      break;
    }
    case Mode::analyze: {
      Data d = acquire(cfg, true);
      out.warnings = d.warnings;
      const nuisance::NuisanceFit fit = factory(d.table, est_seed, sensitivity::FitRole::point);
      ordered_json effects = ordered_json::array();
      for (int w = 0; w < 2; ++w) {
        const tmle::Effects e = tmle::estimate_effects(fit, d.table, w, topts);
        effects.push_back({{"group_w", w},
                           {"sde", effect_json(e.sde)},
                           {"sie", effect_json(e.sie)},
                           {"total", e.total},
                           {"psi", {psi_json(e.sde.minuend), psi_json(e.sde.subtrahend),
                                    psi_json(e.sie.minuend)}}});
      }
      doc["effects"] = effects;
      const int groups[2] = {0, 1};
      const double grid[1] = {cfg.r2};
      scfg.r2_grid = {cfg.r2};
      const auto curve = sensitivity::sensitivity_curve(factory, d.table, groups, grid, scfg, topts);
      doc["sensitivity"] = curve_json(curve);
      diagnostics["missing_fractions"] = missing_fractions(d.table);
      if (d.missing) {
        diagnostics["realized_missing_fraction"] = d.missing->realized_fraction;
        diagnostics["missingness_offset"] = number_or_null(d.missing->offset);
      }
      oracle_if_requested(d.simulated);
      break;
    }
    case Mode::sweep: {
      Data d = acquire(cfg, false);
      out.warnings = d.warnings;
      sensitivity::SweepResult sweep;
      if (d.simulated) {
        const dgp::MissingnessSpec base = cfg.missingness.value_or(dgp::MissingnessSpec{});
        sweep = sensitivity::sweep_missingness(factory, d.table, base, scfg, topts);
        doc["sweep_axis"] = "missing_proportion_and_r2";
      } else {
        sweep = sensitivity::sweep_r2(factory, d.table, scfg, topts);
        doc["sweep_axis"] = "r2";
      }
      doc["sensitivity"] = curve_json(sweep.curve);
      doc["null_crossing"] = crossing_json(sweep.crossing);
      ordered_json points = ordered_json::array();
      for (const auto& p : sweep.diagnostics) {
        ordered_json row = {{"grid_value", p.grid_value}};
        if (d.simulated) {
          row["realized_missing_fraction"] = p.realized_missing_fraction;
          row["missingness_offset"] = number_or_null(p.missingness_offset);
        }
        if (p.empirical_r2)
          row["empirical_r2"] = {number_or_null((*p.empirical_r2)[0]), number_or_null((*p.empirical_r2)[1])};
        points.push_back(row);
      }
      diagnostics["sweep_points"] = points;
      const auto path = cfg.out_dir / "curve.csv";
      write_file(path, curve_csv(sweep.curve));
      out.files.push_back(path);
      oracle_if_requested(d.simulated);
      break;
    }
  }

  doc["diagnostics"] = diagnostics;
  doc["warnings"] = out.warnings;
  const auto path = cfg.out_dir / "results.json";
  write_file(path, doc.dump(2) + "\n");
  out.files.push_back(path);
  return out;
}

}  // namespace medtransport::run
