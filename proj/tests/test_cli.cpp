#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "medtransport/error.hpp"
#include "medtransport/run.hpp"

using namespace medtransport;
using namespace medtransport::run;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("medtransport_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(MEDTRANSPORT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config echo round-trips") {
  RunConfig c;
  c.mode = Mode::sweep;
  c.seed = 99;
  c.dgp.outcome_c = 1.25;
  c.n_target = 1234;
  c.missingness = dgp::MissingnessSpec{};
  c.missingness->mechanism = dgp::Mechanism::mar;
  c.missingness->target_proportion = 0.35;
  c.missingness->environment.reset();
  c.sensitivity.r2_grid = {0.05, 0.5};
  c.sensitivity.lambda = 3.0;
  c.n_mc = 77;
  c.mediator_type = nuisance::VariableType::binary;
  const auto j = c.to_json();
  const auto back = RunConfig::from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.to_json() == j);
  CHECK(back.dgp.outcome_c == 1.25);
  CHECK_FALSE(back.missingness->environment.has_value());
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"dgp":{"bogus":1}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"seed":"x"})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"mode":"plot"})")), ConfigError);
  RunConfig c;
  c.sensitivity.n_bootstrap = 10;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.mode = Mode::analyze;
  c.input = "/nonexistent/file.csv";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("flag value parsers") {
  CHECK(parse_grid("0.1,0.25, 0.5") == std::vector<double>{0.1, 0.25, 0.5});
  CHECK_THROWS_AS(parse_grid("0.1,x"), ConfigError);
  CHECK_FALSE(parse_missingness("none", dgp::MissingnessSpec{}).has_value());
  const auto m = parse_missingness("mar:0.4", std::nullopt);
  REQUIRE(m.has_value());
  CHECK(m->mechanism == dgp::Mechanism::mar);
  CHECK(*m->target_proportion == 0.4);
  CHECK_THROWS_AS(parse_missingness("mnar:lots", std::nullopt), ConfigError);
}

TEST_CASE("simulate is byte-reproducible") {
  RunConfig c;
  c.mode = Mode::simulate;
  c.n_source = 400;
  c.n_target = 800;
  c.missingness = dgp::MissingnessSpec{};
  c.missingness->target_proportion = 0.2;
  const auto a = scratch("sim_a");
  const auto b = scratch("sim_b");
  c.out_dir = a;
  run::run(c);
  c.out_dir = b;
  run::run(c);
  CHECK(slurp(a / "dataset.csv").size() > 1000);
  CHECK(slurp(a / "dataset.csv") == slurp(b / "dataset.csv"));
  CHECK(slurp(a / "results.json") == slurp(b / "results.json"));
}

TEST_CASE("curve file layout") {
  sensitivity::CurvePoint p;
  p.group_w = 1;
  p.r2 = 0.5;
  p.sie_lower = 0.1;
  p.sie_upper = 0.3;
  p.ci_low = -0.05;
  p.ci_high = 0.4;
  p.contains_null = true;
  CHECK(curve_csv({p}) ==
        "group_w,r2,sie_lower,sie_upper,ci_low,ci_high,contains_null\n1,0.5,0.1,0.3,-0.05,0.4,true\n");
}

TEST_CASE("analyze reads a CSV and reports every interval around its point") {
  const auto dir = scratch("analyze");
  RunConfig c;
  c.mode = Mode::analyze;
  c.input = std::filesystem::path(MEDTRANSPORT_TEST_DATA) / "fixture.csv";
  c.sensitivity.n_bootstrap = 100;
  c.bootstrap_n_mc = 100;
  c.out_dir = dir;
  const auto out = run::run(c);
  REQUIRE(out.document["effects"].size() == 2);
  for (const auto& g : out.document["effects"]) {
    for (const char* k : {"sde", "sie"}) {
      CHECK(g[k]["ci_low"].get<double>() <= g[k]["point"].get<double>());
      CHECK(g[k]["point"].get<double>() <= g[k]["ci_high"].get<double>());
      CHECK(std::abs(g[k]["mean_eic"].get<double>()) < 1e-6);
    }
  }
  for (const auto& p : out.document["sensitivity"]) {
    CHECK(p["ci_low"].get<double>() <= p["sie_lower"].get<double>());
    CHECK(p["sie_upper"].get<double>() <= p["ci_high"].get<double>());
  }
  CHECK_FALSE(out.document.contains("oracle"));
  CHECK(out.warnings.size() == 1);  // 17 target rows in W=1
  CHECK(std::filesystem::exists(dir / "results.json"));
}

TEST_CASE("exit codes") {
  const auto dir = scratch("exit");
  std::filesystem::create_directories(dir);
  CHECK(cli("--mode plot") == 2);
  CHECK(cli("--not-a-flag") == 2);
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "S,A,W,R,C\n1,0,0,0.1,0.2\n";
  }
  CHECK(cli("--mode analyze --input " + (dir / "bad.csv").string() + " --out-dir " + dir.string()) == 3);
  {
    // Constant outcome: the outcome regression cannot be fitted.
    std::ofstream flat(dir / "flat.csv");
    flat << "S,A,W,R,C,Y\n";
    for (int i = 0; i < 200; ++i)
      flat << (i / 100) << ',' << (i % 2) << ',' << ((i / 50) % 2) << ',' << 0.01 * i << ','
           << 0.02 * (i % 17) << ",1\n";
  }
  CHECK(cli("--mode analyze --input " + (dir / "flat.csv").string() + " --out-dir " + dir.string()) == 4);
  CHECK(cli("--mode simulate --out-dir " + dir.string()) == 0);
}

}
