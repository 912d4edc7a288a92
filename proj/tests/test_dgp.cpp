#include <doctest.h>

#include <cmath>

#include "medtransport/dgp.hpp"
#include "medtransport/error.hpp"

using namespace medtransport;

namespace {

// Closed-form psi(a, a*) per group by adaptive quadrature over the mediator
// marginal N(1.5 * 0.7 * a* + b_w, sqrt(1.5^2 * 0.25 + 0.25)).
constexpr double kQuadPsi[2][2][2] = {
    {{0.7588641501294403, 0.9457786163897324}, {0.7800847810215908, 0.9527727230466982}},
    {{0.47191696204851113, 0.8025823467931501}, {0.5000000000000001, 0.8213239665569726}}};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_SUITE("dgp") {

TEST_CASE("generate is deterministic and orders source rows first") {
  const dgp::StructuralParams p;
  const auto a = dgp::generate(p, 300, 200, 11);
  const auto b = dgp::generate(p, 300, 200, 11);
  REQUIRE(a.size() == 500);
  CHECK(a.r == b.r);
  CHECK(a.c_true == b.c_true);
  CHECK(a.y == b.y);
  for (std::size_t i = 0; i < 300; ++i) CHECK(a.s[i] == 1);
  for (std::size_t i = 300; i < 500; ++i) CHECK(a.s[i] == 0);
  CHECK(a.has_truth);
  const auto c = dgp::generate(p, 300, 200, 12);
  CHECK(a.r != c.r);
}

TEST_CASE("structural equations are recovered in a large sample") {
  const dgp::StructuralParams p;
  const auto t = dgp::generate(p, 100000, 100000, 3);
  std::size_t w1_target = 0, w1_source = 0;
  // Moments of C - 1.5 R within source W=0.
  std::vector<double> resid;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.s[i] == 0) w1_target += t.w[i];
    if (t.s[i] == 1) w1_source += t.w[i];
    if (t.s[i] == 1 && t.w[i] == 0) resid.push_back(t.c_true[i] - 1.5 * t.r[i]);
  }
  // E[clamp(N(0, 0.1), 0, 1)] = 0.1 * phi(0); E[clamp(0.5 + N(0, 0.1))] = 0.5.
  CHECK(static_cast<double>(w1_target) / 1e5 == doctest::Approx(0.1 / std::sqrt(2.0 * M_PI)).epsilon(0.06));
  CHECK(static_cast<double>(w1_source) / 1e5 == doctest::Approx(0.5).epsilon(0.01));
  CHECK(mean_of(resid) == doctest::Approx(0.8).epsilon(0.01));
}

TEST_CASE("degenerate noise is allowed and negative sd rejected") {
  dgp::StructuralParams p;
  p.noise_sd_c = 0.0;
  CHECK_NOTHROW(p.validate());
  const auto t = dgp::generate(p, 50, 50, 1);
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(t.c_true[i] == doctest::Approx(1.5 * t.r[i] + (t.w[i] ? 0.2 : 0.8)));
  p.noise_sd_r = -0.1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.p_treat = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("mechanism names round-trip") {
  for (auto m : {dgp::Mechanism::mcar, dgp::Mechanism::mar, dgp::Mechanism::mnar})
    CHECK(dgp::parse_mechanism(dgp::to_string(m)) == m);
  CHECK(dgp::parse_mechanism("MNAR") == dgp::Mechanism::mnar);
  CHECK_THROWS_AS(dgp::parse_mechanism("sometimes"), ConfigError);
}

TEST_CASE("calibrated missingness hits the requested proportion in the target group only") {
  const auto t = dgp::generate({}, 2000, 4000, 5);
  for (auto mech : {dgp::Mechanism::mcar, dgp::Mechanism::mar, dgp::Mechanism::mnar}) {
    for (double prop : {0.1, 0.5, 0.9}) {
      dgp::MissingnessSpec spec;
      spec.mechanism = mech;
      spec.target_proportion = prop;
      const auto res = dgp::apply_missingness(t, spec, 9);
      CHECK(std::abs(res.realized_fraction - prop) <= dgp::kCalibrationTolerance);
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(t.s[i] == 0 && t.w[i] == 0)) CHECK(res.table.m[i] == 1);
        CHECK(std::isnan(res.table.c_obs[i]) == (res.table.m[i] == 0));
        CHECK(res.table.c_true[i] == t.c_true[i]);
      }
    }
  }
}

TEST_CASE("MNAR removes low mediator values") {
  const auto t = dgp::generate({}, 1000, 20000, 5);
  dgp::MissingnessSpec spec;
  spec.target_proportion = 0.5;
  const auto res = dgp::apply_missingness(t, spec, 2);
  std::vector<double> kept, dropped;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.s[i] != 0 || t.w[i] != 0) continue;
    (res.table.m[i] ? kept : dropped).push_back(t.c_true[i]);
  }
  CHECK(mean_of(kept) > mean_of(dropped) + 0.3);
}

TEST_CASE("missingness extremes and errors") {
  const auto t = dgp::generate({}, 200, 400, 5);
  dgp::MissingnessSpec spec;
  spec.target_proportion = 0.0;
  CHECK(dgp::apply_missingness(t, spec, 1).realized_fraction == 0.0);
  spec.target_proportion = 1.0;
  CHECK(dgp::apply_missingness(t, spec, 1).realized_fraction == 1.0);
  spec.target_proportion = 1.2;
  CHECK_THROWS_AS(dgp::apply_missingness(t, spec, 1), ConfigError);
  spec.target_proportion.reset();
  spec.target_group = 2;
  CHECK_THROWS_AS(dgp::apply_missingness(t, spec, 1), ConfigError);
}

TEST_CASE("missingness is deterministic in the seed") {
  const auto t = dgp::generate({}, 200, 400, 5);
  dgp::MissingnessSpec spec;
  spec.target_proportion = 0.3;
  CHECK(dgp::apply_missingness(t, spec, 4).table.m == dgp::apply_missingness(t, spec, 4).table.m);
}

TEST_CASE("oracle agrees with quadrature") {
  const auto o = dgp::oracle_effects({}, 1000000, 17);
  for (int w = 0; w < 2; ++w) {
    for (int a = 0; a < 2; ++a)
      for (int as = 0; as < 2; ++as) CHECK(o.psi[w][a][as] == doctest::Approx(kQuadPsi[w][a][as]).epsilon(2e-3));
    const double sie = kQuadPsi[w][1][1] - kQuadPsi[w][1][0];
    const double sde = kQuadPsi[w][1][0] - kQuadPsi[w][0][0];
    CHECK(std::abs(o.sie[w].value - sie) < 4.0 * o.sie[w].se + 1e-6);
    CHECK(std::abs(o.sde[w].value - sde) < 4.0 * o.sde[w].se + 1e-6);
  }
  CHECK_THROWS_AS(dgp::oracle_effects({}, 1000, 1), ConfigError);
}

TEST_CASE("oracle is zero without mediation") {
  dgp::StructuralParams p;
  p.coef_r_given_a = 0.0;
  const auto o = dgp::oracle_effects(p, 100000, 1);
  CHECK(o.sie[0].value == 0.0);
  CHECK(o.sie[1].value == 0.0);
}

}
