#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pasm/fem.hpp"
#include "pasm/sampling.hpp"
#include "pasm/verify.hpp"

using namespace pasm;

namespace {

SampleSpec spec_for(double p, int count, std::uint64_t seed = 1, int m = 8) {
  SampleSpec spec;
  spec.mesh = build_uniform_mesh(m);
  spec.p = p;
  spec.count = count;
  spec.seed = seed;
  return spec;
}

} // namespace

TEST_CASE("sample spec validation") {
  SampleSpec spec = spec_for(4.0, 10);
  CHECK_NOTHROW(spec.validate());
  spec.count = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = spec_for(1.0, 10);
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = spec_for(4.0, 10);
  spec.mesh.reset();
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  CHECK_THROWS_AS(check_bl_inequalities(4.0, 0, 1), std::invalid_argument);
}

TEST_CASE("p = 2 quantities are exact") {
  const SampleSpec spec = spec_for(2.0, 200);
  const ConstantReport scaling = check_scaling(spec);
  CHECK(scaling.violations == 0);
  CHECK(scaling.sample_min == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(scaling.sample_max == doctest::Approx(2.0).epsilon(1e-9));

  const ConstantReport symmetry = check_symmetry(spec);
  CHECK(symmetry.sample_min == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(symmetry.sample_max == doctest::Approx(1.0).epsilon(1e-12));

  const ConstantReport equiv = check_bregman_equiv(spec);
  CHECK(equiv.sample_min == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(equiv.sample_max == doctest::Approx(0.5).epsilon(1e-12));

  const BarrettLiuReport bl = check_bl_inequalities(2.0, 2000, 3);
  CHECK(bl.upper.sample_max == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bl.lower.sample_min == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bl.upper.violations + bl.lower.violations == 0);

  const DistanceReport df = check_df_as_distance(spec_for(2.0, 50));
  CHECK(df.scaling_lower.sample_min == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(df.scaling_upper.sample_max == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(df.symmetry.sample_max == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(df.equivalence.sample_min == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("Phi scaling bounds hold at the interval ends") {
  auto mesh = build_uniform_mesh(8);
  for (double p : {1.5, 3.0, 4.0}) {
    const auto data = ProblemData::constant_source(mesh, p, 0.0);
    const SamplePair s = draw_pair(mesh, 1.0, 4, 1);
    const FeFunction w = s.u - s.v;
    CHECK(phi(s.v + 1.0 * w, s.v, data) == doctest::Approx(phi(s.u, s.v, data)).epsilon(1e-14));
    CHECK(phi(s.v + 0.0 * w, s.v, data) == 0.0);
  }
}

TEST_CASE("lemma checks report no violations on the default sample model") {
  for (double p : {1.5, 3.0, 4.0}) {
    const SampleSpec spec = spec_for(p, 200, 2);
    const auto reports = run_verification(spec, 5000);
    REQUIRE(reports.size() == 9);
    CHECK(total_violations(reports) == 0);
    for (const auto& r : reports) {
      CHECK(std::isfinite(r.sample_min));
      CHECK(std::isfinite(r.sample_max));
      CHECK(r.samples_used > 0);
    }
    // Effective scaling exponents sit between min(p,2) and max(p,2).
    CHECK(reports[0].sample_min >= std::min(p, 2.0) - 1e-9);
    CHECK(reports[0].sample_max <= std::max(p, 2.0) + 1e-9);
    CHECK(reports[1].sample_max <= std::pow(2.0, std::abs(p - 2.0)) * (1 + 1e-10));
    CHECK(reports[2].sample_min > 0.0);
  }
}

TEST_CASE("a scaled Phi is caught") {
  const SampleSpec spec = spec_for(4.0, 100);
  CHECK(check_scaling(spec, VerifyOptions{0.9}).violations > 0);
  CHECK(check_scaling(spec, VerifyOptions{1.1}).violations > 0);
  CHECK(check_scaling(spec).violations == 0);
}

TEST_CASE("sample extrema widen monotonically with more samples") {
  const auto few = check_bregman_equiv(spec_for(4.0, 100, 9));
  const auto many = check_bregman_equiv(spec_for(4.0, 1000, 9));
  CHECK(many.sample_min <= few.sample_min);
  CHECK(many.sample_max >= few.sample_max);
  const auto bl_few = check_bl_inequalities(4.0, 100, 9);
  const auto bl_many = check_bl_inequalities(4.0, 1000, 9);
  CHECK(bl_many.upper.sample_max >= bl_few.upper.sample_max);
  CHECK(bl_many.lower.sample_min <= bl_few.lower.sample_min);
}

TEST_CASE("reports are reproducible from the seed") {
  const auto a = check_symmetry(spec_for(3.0, 100, 5));
  const auto b = check_symmetry(spec_for(3.0, 100, 5));
  CHECK(a.sample_min == b.sample_min);
  CHECK(a.sample_max == b.sample_max);
  CHECK(a.seed == 5);
}

TEST_CASE("report CSV round trip") {
  const auto reports = run_verification(spec_for(3.0, 30), 200);
  std::ostringstream out;
  write_reports_csv(reports, out);
  std::istringstream in(out.str());
  const auto back = read_reports_csv(in);
  REQUIRE(back.size() == reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    CHECK(back[i].check == reports[i].check);
    CHECK(back[i].name == reports[i].name);
    CHECK(back[i].sample_min == reports[i].sample_min);
    CHECK(back[i].sample_max == reports[i].sample_max);
    CHECK(back[i].violations == reports[i].violations);
    CHECK(back[i].samples_used == reports[i].samples_used);
    CHECK(back[i].seed == reports[i].seed);
  }
  std::istringstream bad("nope\n");
  CHECK_THROWS(read_reports_csv(bad));
}
