#include <doctest.h>

#include <cmath>
#include <numeric>

#include "medtransport/csv.hpp"
#include "medtransport/dgp.hpp"
#include "medtransport/error.hpp"
#include "medtransport/nuisance.hpp"

using namespace medtransport;
using namespace medtransport::nuisance;

namespace {

ObservationTable fixture() { return csv::load_csv(MEDTRANSPORT_TEST_DATA "/fixture.csv").table; }

std::vector<std::size_t> rows_where(const ObservationTable& t, int s, int w) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.s[i] == s && (w < 0 || t.w[i] == w) && t.m[i]) rows.push_back(i);
  return rows;
}

}  // namespace

TEST_SUITE("nuisance") {

TEST_CASE("logistic fit matches a reference implementation") {
  // statsmodels Logit on complete source rows of the fixture.
  const double expected[] = {-0.06569451565533291, 0.5077616429941343, 0.5641284517253408,
                             2.4053357052094104, -0.8010005960403105};
  const auto t = fixture();
  const auto rows = rows_where(t, 1, -1);
  const Column preds[] = {Column::a, Column::r, Column::c, Column::w};
  const auto fit = fit_logistic(t, rows, Column::y, preds);
  CHECK(fit.converged);
  for (int j = 0; j < 5; ++j) CHECK(fit.coefficients[j] == doctest::Approx(expected[j]).epsilon(1e-6));
  CHECK(fit.deviance == doctest::Approx(168.8734856892072).epsilon(1e-9));
  CHECK(fit.coefficient(Column::c) == fit.coefficients[3]);
  CHECK(fit.coefficient(Column::s) == 0.0);
}

TEST_CASE("linear fits per stratum match a reference implementation") {
  // statsmodels OLS of C on (A, R): {intercept, A, R, residual sd}.
  const double expected[2][2][4] = {
      {{0.8190498547184167, 0.035804175625828376, 1.4710884099194126, 0.4995585350299871},
       {0.02604969648700888, 0.1375412907841392, 1.447268477889942, 0.3852982837852679}},
      {{0.7409609111070674, -0.13172751734480023, 1.623675701803462, 0.48810813453976987},
       {0.16117284595199746, 0.09074206872616135, 1.3908330170351275, 0.42036814450513266}}};
  const auto t = fixture();
  const auto fit = fit_nuisance(t);
  for (int s = 0; s < 2; ++s) {
    for (int w = 0; w < 2; ++w) {
      const auto& g = fit.mediator[s][w].gaussian;
      for (int j = 0; j < 3; ++j) CHECK(g.coefficients[j] == doctest::Approx(expected[s][w][j]).epsilon(1e-10));
      CHECK(g.residual_sd == doctest::Approx(expected[s][w][3]).epsilon(1e-10));
    }
  }
  // R on A within each environment, all rows.
  CHECK(fit.intermediate[0].gaussian.coefficients[1] == doctest::Approx(0.6485157960616403).epsilon(1e-10));
  CHECK(fit.intermediate[0].gaussian.residual_sd == doctest::Approx(0.5042880247892693).epsilon(1e-10));
  CHECK(fit.intermediate[1].gaussian.coefficients[0] == doctest::Approx(-0.0838089095521952).epsilon(1e-10));
  CHECK(fit.intermediate[1].gaussian.residual_sd == doctest::Approx(0.5093050207358966).epsilon(1e-10));
}

TEST_CASE("separated and constant outcomes are rejected") {
  Design d;
  d.predictors = {Column::r};
  d.x.resize(6, 2);
  d.x << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  CHECK_THROWS_AS(fit_logistic(d, y), SeparationError);
  y.setOnes();
  CHECK_THROWS_AS(fit_logistic(d, y), SeparationError);
  // A ridge penalty makes the separated problem well-posed.
  y << 0, 0, 0, 1, 1, 1;
  LogisticOptions o;
  o.ridge = 1.0;
  CHECK(fit_logistic(d, y, o).converged);
}

TEST_CASE("collinear design is singular") {
  Design d;
  d.predictors = {Column::r, Column::c};
  d.x.resize(6, 3);
  d.x << 1, 0, 0, 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10;
  Eigen::VectorXd y(6);
  y << 0, 1, 0, 1, 1, 0;
  CHECK_THROWS_AS(fit_logistic(d, y), SingularDesignError);
  CHECK_THROWS_AS(fit_gaussian_conditional(d, y), SingularDesignError);
}

TEST_CASE("zero residual variance is a degenerate density") {
  dgp::StructuralParams p;
  p.noise_sd_c = 0.0;
  const auto t = dgp::generate(p, 200, 200, 1);
  // C is an exact linear function of R and W, so the outcome design is singular.
  CHECK_THROWS_AS(fit_nuisance(t), SingularDesignError);
  const auto rows = rows_where(t, 1, 0);
  const Column preds[] = {Column::a, Column::r};
  const auto g = fit_gaussian_conditional(t, rows, Column::c, preds);
  CHECK(g.degenerate());
  CHECK_THROWS_AS(g.density(0.0, covariates_of(t, rows[0])), DegenerateDensityError);
}

TEST_CASE("binary mediator intervention is a normalized two-point measure") {
  auto t = dgp::generate({}, 1000, 1000, 2);
  for (std::size_t i = 0; i < t.size(); ++i) t.c_obs[i] = t.c_true[i] > 1.0 ? 1.0 : 0.0;
  NuisanceOptions o;
  o.mediator_type = VariableType::binary;
  const auto fit = fit_nuisance(t, o);
  for (int as = 0; as < 2; ++as) {
    for (int w = 0; w < 2; ++w) {
      const auto g = mediator_intervention_density(fit, as, 0, w);
      REQUIRE(g.support.size() == 2);
      CHECK(std::abs(g.mass[0] + g.mass[1] - 1.0) <= 1e-12);
      CHECK(std::abs(g.density(0.0) + g.density(1.0) - 1.0) <= 1e-12);
      CHECK(g.mean() == doctest::Approx(g.p_one));
    }
  }
  // Non-binary values under a binary declaration are data errors.
  t.c_obs[0] = 0.5;
  CHECK_THROWS_AS(fit_nuisance(t, o), DataError);
}

TEST_CASE("continuous mediator intervention density integrates to one") {
  const auto t = dgp::generate({}, 2000, 2000, 4);
  const auto fit = fit_nuisance(t);
  for (int as = 0; as < 2; ++as) {
    const auto g = mediator_intervention_density(fit, as, 0, 0);
    CHECK(std::accumulate(g.mass.begin(), g.mass.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    double integral = 0.0;
    const double h = 1e-3;
    for (double c = -8.0; c < 10.0; c += h) integral += g.density(c) * h;
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
    // Mean of C under g*: intercept + A coef * a* + R coef * E[R | a*].
    CHECK(g.mean() == doctest::Approx(0.8 + 1.5 * 0.7 * as).epsilon(0.05));
  }
}

TEST_CASE("mediator intervention draws are seeded") {
  const auto t = dgp::generate({}, 500, 500, 4);
  NuisanceOptions o;
  o.seed = 1;
  const auto a = mediator_intervention_density(fit_nuisance(t, o), 1, 0, 0);
  const auto b = mediator_intervention_density(fit_nuisance(t, o), 1, 0, 0);
  CHECK(a.support == b.support);
  o.seed = 2;
  const auto c = mediator_intervention_density(fit_nuisance(t, o), 1, 0, 0);
  CHECK(a.support != c.support);
}

TEST_CASE("missing strata are reported") {
  auto t = dgp::generate({}, 300, 300, 4);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.s[i] == 1) keep.push_back(i);
  CHECK_THROWS_AS(fit_nuisance(t.subset(keep)), StratumError);
}

TEST_CASE("variable type names") {
  CHECK(parse_variable_type("binary") == VariableType::binary);
  CHECK(to_string(VariableType::continuous) == "continuous");
  CHECK_THROWS_AS(parse_variable_type("ordinal"), ConfigError);
}

}
