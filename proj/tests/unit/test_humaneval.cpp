#include <doctest.h>

#include "dialprobe/errors.hpp"
#include "dialprobe/humaneval.hpp"

#include <cmath>

using namespace dialprobe;
using namespace dialprobe::humaneval;

namespace {

std::vector<AnnotationRecord> records(std::size_t n, std::size_t ties, int pass = 1) {
  std::vector<AnnotationRecord> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({"p" + std::to_string(i), pass, i < ties ? Choice::Tie : (i % 2 ? Choice::A : Choice::B)});
  return out;
}

} // namespace

TEST_CASE("ingest") {
  auto rs = ingest_annotations("pair_id,pass_id,choice\nx,1,A\nx,2,Tie\ny,1,B\n");
  REQUIRE(rs.size() == 3);
  CHECK(rs[1].pass_id == 2);
  CHECK(rs[1].choice == Choice::Tie);
  CHECK_THROWS_AS(ingest_annotations("pair_id,pass_id,choice\nx,1,A\nx,1,B\n"), DuplicateRecord);
  CHECK_THROWS_AS(ingest_annotations("pair_id,pass_id,choice\nx,1,tie\n"), BadChoice);
  CHECK_THROWS_AS(ingest_annotations("pair_id,pass_id,choice\nx,1,C\n"), BadChoice);
  CHECK_THROWS_AS(ingest_annotations("pair,choice\n"), SchemaError);
  CHECK_THROWS_AS(ingest_annotations("pair_id,pass_id,choice\nx,one,A\n"), SchemaError);
}

TEST_CASE("summaries by hand") {
  auto s = summarize(std::vector<double>{0.3, 0.4});
  CHECK(std::abs(s.mean - 0.35) < 1e-12);
  CHECK(std::abs(s.std - 0.05) < 1e-12);
  CHECK(s.mass_at_most_half == 1.0);
  CHECK(s.histogram[30] == 1);
  CHECK(s.histogram[40] == 1);
  CHECK_THROWS_AS(summarize(std::vector<double>{}), InsufficientRecords);
}

TEST_CASE("all ties gives a point mass at one") {
  BootstrapOptions o;
  o.n_sets = 500;
  o.set_size = 50;
  auto d = bootstrap_tie_fraction(records(60, 60), o);
  REQUIRE(d.size() == 1);
  auto s = summarize(d[0]);
  CHECK(s.mean == 1.0);
  CHECK(s.std == 0.0);
  CHECK(s.histogram[100] == 500);
  CHECK(s.mass_at_most_half == 0.0);
}

TEST_CASE("a 35 percent tie rate") {
  BootstrapOptions o;
  o.seed = 7;
  o.n_sets = 20000;
  auto d = bootstrap_tie_fraction(records(2000, 700), o);
  auto s = summarize(d[0]);
  CHECK(d[0].tie_rate == doctest::Approx(0.35));
  CHECK(std::abs(s.mean - 0.35) < 0.005);
  // Binomial std: sqrt(0.35 * 0.65 / 200).
  CHECK(std::abs(s.std - std::sqrt(0.35 * 0.65 / 200.0)) < 0.005);
  long long total = 0;
  for (auto c : s.histogram) total += c;
  CHECK(total == 20000);
}

TEST_CASE("passes, determinism and workers") {
  auto rs = records(300, 90, 1);
  for (auto& r : records(250, 200, 2)) rs.push_back(r);
  BootstrapOptions o;
  o.n_sets = 3000;
  o.seed = 11;
  auto a = bootstrap_tie_fraction(rs, o);
  o.workers = 3;
  auto b = bootstrap_tie_fraction(rs, o);
  REQUIRE(a.size() == 2);
  CHECK(a[0].pass_id == 1);
  CHECK(a[1].pass_id == 2);
  CHECK(a[0].ties == b[0].ties);
  CHECK(a[1].ties == b[1].ties);
  std::vector<Summary> ss = {summarize(a[0]), summarize(a[1])};
  const std::string csv = histogram_csv(ss);
  CHECK(csv.rfind("pass_id,bin_low,count\n1,0.00,0\n", 0) == 0);
  CHECK(csv.find("\n2,1.00,") != std::string::npos);
  CHECK(summary_json(a, ss, o).find("\"with_replacement\"") != std::string::npos);
  o.seed = 12;
  CHECK(bootstrap_tie_fraction(rs, o)[0].ties != a[0].ties);
  o.set_size = 260;
  CHECK_THROWS_AS(bootstrap_tie_fraction(rs, o), InsufficientRecords);
}
