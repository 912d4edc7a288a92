#include <iostream>

#include <CLI11.hpp>

#include "medtransport/error.hpp"
#include "medtransport/run.hpp"

using namespace medtransport;

int main(int argc, char** argv) {
  CLI::App app{"Transported stochastic mediation effects with missing-mediator sensitivity analysis"};
  std::string mode, config_path, input, out_dir, r2_grid, missingness;
  std::optional<std::uint64_t> seed;
  std::optional<int> target_group;
  std::optional<double> alpha;
  std::optional<std::size_t> bootstrap, n_mc;
  bool keep_truth = false;

  app.add_option("--mode", mode, "simulate | analyze | sweep | oracle");
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--input", input, "Input CSV (analyze, sweep)");
  app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--r2-grid", r2_grid, "Comma-separated increasing sensitivity grid");
  app.add_option("--missingness", missingness, "none | mcar | mar | mnar[:proportion]");
  app.add_option("--target-group", target_group, "W group receiving missingness");
  app.add_option("--alpha", alpha, "CI level is 1 - alpha");
  app.add_option("--bootstrap", bootstrap, "Bootstrap replicates");
  app.add_option("--n-mc", n_mc, "Mediator-intervention draws");
  app.add_flag("--keep-truth", keep_truth, "Write the true mediator as C_true");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorCategory::config);
  }

  try {
    run::RunConfig cfg = config_path.empty() ? run::RunConfig{} : run::RunConfig::from_file(config_path);
    if (!mode.empty()) cfg.mode = run::parse_mode(mode);
    if (seed) cfg.seed = *seed;
    if (!input.empty()) cfg.input = input;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!r2_grid.empty()) cfg.sensitivity.r2_grid = run::parse_grid(r2_grid);
    if (!missingness.empty()) cfg.missingness = run::parse_missingness(missingness, cfg.missingness);
    if (target_group) {
      if (!cfg.missingness) cfg.missingness = dgp::MissingnessSpec{};
      cfg.missingness->target_group = *target_group;
    }
    if (alpha) cfg.sensitivity.alpha = *alpha;
    if (bootstrap) cfg.sensitivity.n_bootstrap = *bootstrap;
    if (n_mc) cfg.n_mc = *n_mc;
    if (keep_truth) cfg.keep_truth = true;

    const run::RunOutput result = run::run(cfg);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& f : result.files) std::cout << f.string() << '\n';
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
