#include <doctest.h>

#include <cmath>

#include "../common/oracles.hpp"
#include "support.hpp"
#include "synloc/error.hpp"
#include "synloc/localizer.hpp"
#include "synloc/store.hpp"

using namespace synloc;
using namespace synloc::testing;

namespace {

std::vector<double> normal_sample(Rng& rng, std::size_t n, double mean, double sd) {
  std::vector<double> out(n);
  for (auto& v : out) {
    // Box-Muller on the toolkit generator, rounded to float like a capture.
    const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    v = static_cast<double>(static_cast<float>(mean + sd * z));
  }
  return out;
}

Matrix matrix_from(const std::vector<std::vector<float>>& rows) {
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace

TEST_CASE("Welch t by hand") {
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  // Means 2 and 5, both variances 1: t = -3 / sqrt(2/3).
  CHECK(*welch_t(a, b) == doctest::Approx(-3.0 / std::sqrt(2.0 / 3.0)).epsilon(1e-15));

  const std::vector<double> c{0, 10}, d{1, 1, 1, 2};
  // var(c) = 50, var(d) = 0.25: se^2 = 25 + 0.0625.
  CHECK(*welch_t(c, d) == doctest::Approx((5.0 - 1.25) / std::sqrt(25.0625)).epsilon(1e-15));
}

TEST_CASE("Welch t matches the extended-precision oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t na = 2 + rng.below(499), nb = 2 + rng.below(499);
    const double mean = (rng.uniform() - 0.5) * 10.0;
    const double sd = std::pow(10.0, rng.uniform() * 3.0 - 2.0);
    const auto a = normal_sample(rng, na, mean, sd);
    const auto b = normal_sample(rng, nb, mean + (rng.uniform() - 0.5) * sd, sd * (0.5 + rng.uniform()));
    const auto got = welch_t(a, b);
    const auto want = oracle::welch_t(a, b);
    REQUIRE(got.has_value() == want.has_value());
    CHECK(oracle::relative_error(*got, *want) <= 1e-10);
  }
}

TEST_CASE("Welch t invariants") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = normal_sample(rng, 2 + rng.below(60), rng.uniform(), 1.0);
    const auto b = normal_sample(rng, 2 + rng.below(60), rng.uniform(), 2.0);
    CHECK(*welch_t(a, b) == -*welch_t(b, a));
    CHECK(*welch_t(a, a) == 0.0);
  }
}

TEST_CASE("Welch t degenerate inputs") {
  const std::vector<double> ones{1, 1, 1}, twos{2, 2};
  CHECK(*welch_t(ones, ones) == 0.0);
  CHECK_FALSE(welch_t(ones, twos).has_value());
  const std::vector<double> one{1};
  CHECK_THROWS_AS(welch_t(one, ones), DataError);
  const std::vector<double> with_nan{1, NAN, 2};
  CHECK_FALSE(welch_t(with_nan, ones).has_value());
}

TEST_CASE("target count is floor(fraction * U)") {
  CHECK(target_count(9216, 0.005) == 46);
  CHECK(target_count(9216, 0.01) == 92);
  CHECK(target_count(9216, 0.05) == 460);
  CHECK(target_count(36864, 0.005) == 184);
  CHECK(target_count(36864, 0.01) == 368);
  CHECK(target_count(36864, 0.05) == 1843);
  CHECK(target_count(100, 0.29) == 29);
  CHECK(target_count(10, 1.0) == 10);
  CHECK(target_count(99, 0.01) == 0);
  for (std::size_t u = 1; u < 5000; u += 37) {
    for (double f : {0.005, 0.01, 0.05, 0.1, 0.5}) {
      const std::size_t k = target_count(u, f);
      // Exact rational check: k/U <= f < (k+1)/U with f = p/1000.
      const auto p = static_cast<std::size_t>(std::llround(f * 1000));
      CHECK(k * 1000 <= p * u);
      CHECK((k + 1) * 1000 > p * u);
    }
  }
}

TEST_CASE("contrast compares activation magnitudes per column") {
  const UnitLayout layout{SiteSet{Site::residual}, 2, 2};
  const Matrix good = matrix_from({{1, -3, 0, 2}, {2, -4, 0, 2}, {3, -5, 0, 2}});
  const Matrix bad = matrix_from({{-1, 3, 0, 1}, {-2, 4, 0, 3}, {-3, 5, 0, 2}});
  const ContrastResult c = contrast(good, bad, layout);
  CHECK(c.t[0] == 0.0);  // |good| and |bad| identical
  CHECK(c.t[1] == 0.0);
  CHECK(c.defined[2]);  // constant and equal on both sides
  CHECK(c.t[2] == 0.0);
  const std::vector<double> g{2, 2, 2}, b{1, 3, 2};
  CHECK(c.t[3] == *welch_t(g, b));
  CHECK(c.undefined_count == 0);
}

TEST_CASE("selection ranks by t and breaks ties by unit order") {
  const UnitLayout layout{SiteSet{Site::attn_out, Site::mlp_out}, 1, 3};
  ContrastResult c;
  c.t = {1.0, 5.0, 5.0, NAN, 5.0, -2.0};
  c.defined = {true, true, true, false, true, true};
  c.undefined_count = 1;
  c.provenance.sites = layout.sites;
  c.provenance.n_layers = 1;
  c.provenance.hidden = 3;
  const UnitSet s = select_top(c, 0.5);
  REQUIRE(s.k == 3);
  CHECK(s.units[0].unit == UnitId{Site::attn_out, 0, 1});
  CHECK(s.units[1].unit == UnitId{Site::attn_out, 0, 2});
  CHECK(s.units[2].unit == UnitId{Site::mlp_out, 0, 1});
  CHECK(s.defined_units == 5);

  // More units requested than defined: k shrinks.
  const UnitSet all = select_top(c, 1.0);
  CHECK(all.k == 5);
  CHECK(all.units.back().t == -2.0);

  CHECK_THROWS_AS(select_top(c, 0.0), ConfigError);
  CHECK_THROWS_AS(select_top(c, 1.5), ConfigError);
  c.defined.assign(6, false);
  c.undefined_count = 6;
  CHECK_THROWS_AS(select_top(c, 0.5), NumericError);
}

TEST_CASE("planted units are recovered") {
  const UnitLayout layout{SiteSet{Site::residual}, 4, 25};
  Rng rng(3);
  Matrix good(120, layout.total()), bad(120, layout.total());
  for (std::size_t i = 0; i < 120; ++i) {
    for (std::size_t u = 0; u < layout.total(); ++u) {
      good.at(i, u) = static_cast<float>(rng.uniform());
      bad.at(i, u) = static_cast<float>(rng.uniform());
    }
    good.at(i, 17) += 3.0f;
    good.at(i, 60) += 2.0f;
  }
  const UnitSet s = localize(good, bad, layout, 0.02);
  REQUIRE(s.k == 2);
  CHECK(s.units[0].unit == layout.unit_at(17));
  CHECK(s.units[1].unit == layout.unit_at(60));
  CHECK(localize(good, bad, layout, 0.02, 4) == s);
}

TEST_CASE("localizer on the fixture model, with and without the cache") {
  const LanguageModel& model = gpt2_fixture();
  Benchmark b = load_benchmark(fixtures() / "blimp_toy");
  Phenomenon p = b.phenomenon("transitive");
  p.pairs.resize(40);
  const SiteSet sites = SiteSet::parse("residual,mlp_out");

  const Localizer plain(model, sites, 2);
  const UnitSet fresh = plain.localize(b.content_hash, p, 0.01);
  CHECK(fresh.total_units == 2u * model.config().n_layers * model.config().hidden);
  CHECK(fresh.k == target_count(fresh.total_units, 0.01));
  CHECK(fresh.provenance.fold == "all");
  CHECK(fresh.provenance.model_hash == model.hash());

  ActivationCache cache(scratch_dir("localizer-cache"));
  const Localizer cached(model, sites, 1, &cache);
  CHECK(cached.localize(b.content_hash, p, 0.01) == fresh);
  CHECK(cache.misses() == 1);
  const auto before = model.transformer().forward_count();
  const ActivationPair hit = cached.activations(b.content_hash, p, "all");
  CHECK(model.transformer().forward_count() == before);
  CHECK(cache.hits() == 1);
  const ActivationPair direct = model.capture_activations(p.pairs, sites, 1);
  CHECK(hit.good == direct.good);
  CHECK(hit.bad == direct.bad);

  // A different fold label is a different key.
  cached.activations(b.content_hash, p, "0/2");
  CHECK(cache.misses() == 2);
}
