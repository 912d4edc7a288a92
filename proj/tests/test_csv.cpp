#include <doctest.h>

#include <cmath>
#include <sstream>

#include "medtransport/csv.hpp"
#include "medtransport/dgp.hpp"
#include "medtransport/error.hpp"

using namespace medtransport;

namespace {

// 100 rows, 25 per (S, W) stratum; C blank on the first `blank` rows.
std::string six_column(int blank) {
  std::ostringstream ss;
  ss << "s,a,w,r,c,y\n";
  for (int i = 0; i < 100; ++i) {
    ss << (i / 50) << ',' << (i % 2) << ',' << ((i / 25) % 2) << ',' << 0.01 * i << ',';
    if (i >= blank) ss << 0.5 + 0.02 * i;
    ss << ',' << ((i / 3) % 2) << '\n';
  }
  return ss.str();
}

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

TEST_SUITE("csv") {

TEST_CASE("well-formed six-column file") {
  std::istringstream in(six_column(0));
  const auto res = csv::parse_csv(in);
  REQUIRE(res.table.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(res.table.m[i] == 1);
    CHECK(res.table.id[i] == static_cast<std::int64_t>(i));
  }
  CHECK(res.warnings.size() == 4);
}

TEST_CASE("blank mediator cells are missing") {
  std::istringstream in(six_column(30));
  const auto res = csv::parse_csv(in);
  std::size_t missing = 0;
  for (std::size_t i = 0; i < res.table.size(); ++i) {
    missing += res.table.m[i] == 0;
    CHECK(std::isnan(res.table.c_obs[i]) == (res.table.m[i] == 0));
  }
  CHECK(missing == 30);
}

TEST_CASE("missing column names the column") {
  std::istringstream in("S,A,W,R,C\n1,0,0,0.1,0.2\n");
  try {
    csv::parse_csv(in);
    FAIL("expected a schema error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("missing required column: Y") != std::string::npos);
  }
}

TEST_CASE("non-binary values report the line") {
  std::string text = six_column(0);
  const auto pos = text.find('\n', text.find('\n') + 1);  // end of line 2
  text.insert(pos + 1, "1,2,0,0.1,0.2,1\n");
  std::istringstream in(text);
  try {
    csv::parse_csv(in, "data.csv");
    FAIL("expected a validation error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("column A") != std::string::npos);
  }
}

TEST_CASE("tiny strata are rejected") {
  std::istringstream in("S,A,W,R,C,Y\n1,0,0,0.1,0.2,1\n0,1,1,0.3,,0\n");
  CHECK_THROWS_AS(csv::parse_csv(in), DataError);
}

TEST_CASE("malformed numbers and short rows") {
  std::string text = six_column(0) + "1,0,0,abc,0.2,1\n";
  std::istringstream bad_number(text);
  CHECK_THROWS_AS(csv::parse_csv(bad_number), DataError);
  std::istringstream short_row(six_column(0) + "1,0,0\n");
  CHECK_THROWS_AS(csv::parse_csv(short_row), DataError);
}

TEST_CASE("M overrides the mediator cell") {
  std::string text = "S,A,W,R,C,Y,M\n";
  for (int i = 0; i < 100; ++i)
    text += std::to_string(i / 50) + ",0," + std::to_string((i / 25) % 2) + ",0.1,0.5,1," + (i < 10 ? "0" : "1") + "\n";
  std::istringstream in(text);
  const auto res = csv::parse_csv(in);
  std::size_t missing = 0;
  for (std::size_t i = 0; i < res.table.size(); ++i) missing += res.table.m[i] == 0;
  CHECK(missing == 10);
}

TEST_CASE("simulate, write and load round-trip exactly") {
  auto t = dgp::generate({}, 300, 1500, 9);
  dgp::MissingnessSpec spec;
  spec.target_proportion = 0.4;
  t = dgp::apply_missingness(t, spec, 3).table;
  for (bool keep : {false, true}) {
    std::stringstream ss;
    csv::write_csv(ss, t, keep);
    const auto back = csv::parse_csv(ss).table;
    REQUIRE(back.size() == t.size());
    CHECK(back.id == t.id);
    CHECK(back.s == t.s);
    CHECK(back.a == t.a);
    CHECK(back.w == t.w);
    CHECK(back.r == t.r);
    CHECK(back.m == t.m);
    CHECK(back.y == t.y);
    CHECK(back.has_truth == keep);
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(same_double(back.c_obs[i], t.c_obs[i]));
      if (keep) CHECK(back.c_true[i] == t.c_true[i]);
    }
  }
}

TEST_CASE("shortest round-trip formatting") {
  CHECK(csv::format_double(0.1) == "0.1");
  CHECK(csv::format_double(-2.5e-7) == "-2.5e-07");
  const double x = 0.1 + 0.2;
  CHECK(std::stod(csv::format_double(x)) == x);
}

}
