#include <sstream>

#include "doctest.h"
#include "glyco/datamodel.hpp"
#include "glyco/error.hpp"
#include "test_support.hpp"

using namespace glyco;
using glyco::testing::flat_record;

namespace {

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

ErrorKind kind_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

std::string rows(const std::string& id, int n, int blank_glucose_at = -1) {
  std::string out;
  for (int t = 0; t < n; ++t) {
    out += "p1," + id + "," + std::to_string(t) + ",";
    if (t != blank_glucose_at) out += "101.5";
    out += t == kMealIndex ? ",210,12,5,1,8,15" : ",0,0,0,0,0,0";
    out += ",54,81.2,M,t2d\n";
  }
  return out;
}

}  // namespace

TEST_CASE("minimal well-formed file loads one complete record") {
  const auto d = parse(std::string(kCsvHeader) + "\n" + rows("r1", 60));
  REQUIRE(d.records.size() == 1);
  const auto& r = d.records[0];
  CHECK(r.observed_glucose() == 60);
  CHECK(r.meals[kMealIndex][kCarbs] == 12.0);
  CHECK(r.demographics.sex == Sex::M);
  CHECK(r.diagnosis == Diagnosis::T2D);
  CHECK(validate(r).empty());
}

TEST_CASE("blank glucose cell becomes a missing value") {
  const auto d = parse(std::string(kCsvHeader) + "\n" + rows("r1", 60, 3));
  REQUIRE(d.records.size() == 1);
  CHECK_FALSE(d.records[0].glucose[3].has_value());
  CHECK(d.records[0].observed_glucose() == 59);
}

TEST_CASE("load errors") {
  const std::string h = std::string(kCsvHeader) + "\n";
  CHECK(kind_of(h + rows("r1", 59)) == ErrorKind::BadRowCount);
  CHECK(kind_of("person_id,ppgr_id,t,glucose\n") == ErrorKind::MissingColumn);
  std::string bad = rows("r1", 60);
  bad.replace(bad.find("101.5"), 5, "abc");
  CHECK(kind_of(h + bad) == ErrorKind::NonNumericCell);
  std::string neg = rows("r1", 60);
  neg.replace(neg.find(",210,12,"), 8, ",210,-1,");
  CHECK(kind_of(h + neg) == ErrorKind::NegativeCovariate);
  CHECK(kind_of(h + rows("r1", 60) + rows("r1", 1)) == ErrorKind::BadRowCount);
}

TEST_CASE("validate reports each broken invariant") {
  auto r = flat_record("p", "a");
  CHECK(validate(r).empty());

  auto high = r;
  high.glucose[0] = 700.0;
  auto v = validate(high);
  REQUIRE(v.size() == 1);
  CHECK(v[0].field == "glucose");
  CHECK(v[0].index == 0);
  CHECK(v[0].rule == "glucose out of [20,500]");

  auto no_meal = r;
  no_meal.meals[kMealIndex][kCarbs].reset();
  v = validate(no_meal);
  REQUIRE(v.size() == 1);
  CHECK(v[0].rule == "no meal at t=12");

  auto missing_g12 = r;
  missing_g12.glucose[kMealIndex].reset();
  CHECK(validate(missing_g12).empty());
}

TEST_CASE("records are sorted by person then ppgr id and round-trip bit-exactly") {
  Dataset d;
  auto a = flat_record("p2", "z");
  auto b = flat_record("p1", "y");
  auto c = flat_record("p1", "b");
  a.glucose[5] = 0.1 + 0.2;  // not exactly representable in short decimal
  b.glucose[7].reset();
  c.meals[30][kFat].reset();
  c.meals[30][kProtein] = 1.0 / 3.0;
  c.diagnosis.reset();
  d.records = {a, b, c};
  d.normalize();
  CHECK(d.records[0].ppgr_id == "b");
  CHECK(d.records[1].ppgr_id == "y");
  CHECK(d.records[2].ppgr_id == "z");

  const auto text = glyco::testing::to_csv(d);
  CHECK(text.rfind("# glyco config_hash=", 0) == 0);
  const auto back = parse(text);
  REQUIRE(back.records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& x = d.records[i];
    const auto& y = back.records[i];
    CHECK(x.glucose == y.glucose);
    CHECK(x.meals == y.meals);
    CHECK(x.demographics == y.demographics);
    CHECK(x.diagnosis == y.diagnosis);
  }
  CHECK(glyco::testing::to_csv(back) == text);
}

TEST_CASE("duplicate ppgr ids across persons are rejected") {
  Dataset d;
  d.records = {flat_record("p1", "x"), flat_record("p2", "x")};
  CHECK_THROWS_AS(d.normalize(), Error);
}

TEST_CASE("interpolation fills gaps and extends ends") {
  auto r = flat_record("p", "a");
  for (auto& g : r.glucose) g.reset();
  r.glucose[10] = 100.0;
  r.glucose[14] = 120.0;
  const auto g = r.interpolated_glucose();
  CHECK(g[0] == 100.0);
  CHECK(g[12] == doctest::Approx(110.0));
  CHECK(g[59] == 120.0);
  for (auto& x : r.glucose) x.reset();
  CHECK_THROWS_AS(r.interpolated_glucose(), Error);
}
