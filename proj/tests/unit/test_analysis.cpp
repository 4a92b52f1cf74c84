#include <doctest.h>

#include <cmath>

#include "../common/oracles.hpp"
#include "support.hpp"
#include "synloc/analysis.hpp"
#include "synloc/error.hpp"

using namespace synloc;
using namespace synloc::testing;

namespace {

UnitSet set_of(const std::string& uid, const std::vector<int>& channels, const std::string& model = "m") {
  UnitSet s;
  s.provenance.model_hash = model;
  s.provenance.phenomenon_uid = uid;
  s.provenance.fold = "all";
  s.provenance.sites = SiteSet{Site::residual};
  s.provenance.n_layers = 2;
  s.provenance.hidden = 50;
  for (int c : channels) s.units.push_back({{Site::residual, c / 50, c % 50}, 1.0});
  s.k = s.units.size();
  s.total_units = 100;
  s.defined_units = 100;
  return s;
}

OverlapMatrix matrix_of(const std::vector<std::string>& labels, const std::vector<double>& upper) {
  OverlapMatrix m;
  m.labels = labels;
  const std::size_t n = labels.size();
  m.values.assign(n * n, 100.0);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      m.at(i, j) = m.at(j, i) = upper[idx++];
    }
  }
  return m;
}

}  // namespace

TEST_CASE("overlap by hand and its invariants") {
  const UnitSet a = set_of("a", {1, 2, 3, 4});
  const UnitSet b = set_of("b", {3, 4, 5, 6});
  const OverlapReport r = overlap_pct(a, b);
  CHECK(r.value_pct == 50.0);
  CHECK(r.numerator == 2);
  CHECK(r.denominator == 4);
  CHECK_FALSE(r.unequal_k);
  CHECK(overlap_pct(b, a).value_pct == r.value_pct);
  CHECK(overlap_pct(a, a).value_pct == 100.0);
  CHECK(overlap_pct(a, set_of("c", {7, 8, 9, 10})).value_pct == 0.0);

  const OverlapReport uneven = overlap_pct(a, set_of("d", {1, 2}));
  CHECK(uneven.unequal_k);
  CHECK(uneven.denominator == 2);
  CHECK(uneven.value_pct == 100.0);

  CHECK(overlap_all({a, b, set_of("e", {4, 40, 41, 42})}).value_pct == 25.0);
  CHECK_THROWS_AS(overlap_pct(a, set_of("x", {1, 2, 3, 4}, "other-model")), ConfigError);
  UnitSet other_sites = set_of("y", {1, 2, 3, 4});
  other_sites.provenance.sites = SiteSet{Site::mlp_out};
  CHECK_THROWS_AS(overlap_pct(a, other_sites), ConfigError);
  CHECK_THROWS_AS(overlap_pct(a, set_of("z", {})), ConfigError);
}

TEST_CASE("overlap bounds on random sets") {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    auto draw = [&](const char* uid) {
      std::vector<int> ch;
      for (auto i : rng.sample(100, 1 + rng.below(20))) ch.push_back(static_cast<int>(i));
      return set_of(uid, ch);
    };
    const UnitSet a = draw("a"), b = draw("b");
    const double v = overlap_pct(a, b).value_pct;
    CHECK(v >= 0.0);
    CHECK(v <= 100.0);
    CHECK(v == overlap_pct(b, a).value_pct);
  }
}

TEST_CASE("expected random overlap") {
  CHECK(expected_random_overlap(10000, 100, 2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(expected_random_overlap(1000, 10, 2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(expected_random_overlap(10000, 100, 5) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(expected_random_overlap(7, 7, 3) == 100.0);
  // Strictly decreasing in folds, strictly increasing in fraction.
  for (std::size_t f = 2; f < 8; ++f) {
    CHECK(expected_random_overlap(10000, 100, f + 1) < expected_random_overlap(10000, 100, f));
  }
  for (std::size_t u : {9216u, 36864u}) {
    double prev = 0.0;
    for (double fr : {0.005, 0.01, 0.05}) {
      const double e = expected_random_overlap(u, target_count(u, fr), 2);
      CHECK(e > prev);
      prev = e;
    }
  }
  CHECK_THROWS_AS(expected_random_overlap(100, 0, 2), ConfigError);
  CHECK_THROWS_AS(expected_random_overlap(100, 10, 1), ConfigError);
}

TEST_CASE("random overlap spread equals the hypergeometric law for two folds") {
  for (auto [u, k] : {std::pair<std::size_t, std::size_t>{10000, 100}, {1000, 10}, {50, 20}}) {
    const double sd_pct = 100.0 * std::sqrt(oracle::hypergeometric_variance(u, k)) / static_cast<double>(k);
    CHECK(random_overlap_stddev(u, k, 2) == doctest::Approx(sd_pct).epsilon(1e-9));
  }
}

TEST_CASE("Monte Carlo overlap agrees with the analytic mean and spread") {
  const MonteCarloResult mc = monte_carlo_overlap(200, 20, 3, 20000, 1);
  const double expected = expected_random_overlap(200, 20, 3);
  const double se = random_overlap_stddev(200, 20, 3) / std::sqrt(20000.0);
  CHECK(std::abs(mc.mean_pct - expected) <= 4 * se);
  CHECK(mc.standard_error == doctest::Approx(se).epsilon(0.05));
  CHECK(monte_carlo_overlap(200, 20, 3, 100, 9).mean_pct == monte_carlo_overlap(200, 20, 3, 100, 9).mean_pct);
}

TEST_CASE("pairwise matrix and category summaries against enumeration") {
  const std::vector<UnitSet> sets{set_of("p1", {1, 2, 3, 4}), set_of("p2", {1, 2, 5, 6}),
                                  set_of("p3", {1, 7, 8, 9})};
  const OverlapMatrix m = pairwise_overlap_matrix(sets);
  CHECK(m.at(0, 1) == 50.0);
  CHECK(m.at(1, 2) == 25.0);
  CHECK(m.at(2, 0) == 25.0);
  CHECK(m.at(1, 1) == 100.0);

  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(9);
    std::vector<std::string> labels;
    std::map<std::string, std::string> cats;
    for (std::size_t i = 0; i < n; ++i) {
      labels.push_back("p" + std::to_string(i));
      cats[labels.back()] = "c" + std::to_string(rng.below(3));
    }
    std::vector<double> upper(n * (n - 1) / 2);
    for (auto& v : upper) v = std::floor(rng.uniform() * 100.0);
    const OverlapMatrix mm = matrix_of(labels, upper);
    for (const auto& s : category_summary(mm, cats)) {
      double ws = 0, cs = 0;
      std::size_t wn = 0, cn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i >= j) continue;
          const bool a = cats[labels[i]] == s.category, b = cats[labels[j]] == s.category;
          if (a && b) {
            ws += mm.at(i, j);
            ++wn;
          } else if (a || b) {
            cs += mm.at(i, j);
            ++cn;
          }
        }
      }
      CHECK(s.within_pairs == wn);
      CHECK(s.cross_pairs == cn);
      if (wn > 0) CHECK(*s.within_mean_pct == doctest::Approx(ws / wn).epsilon(1e-12));
      else CHECK_FALSE(s.within_mean_pct.has_value());
      if (cn > 0) CHECK(*s.cross_mean_pct == doctest::Approx(cs / cn).epsilon(1e-12));
    }
  }
}

TEST_CASE("constant matrix gives equal within and cross means") {
  const OverlapMatrix m = matrix_of({"a", "b", "c", "d"}, {7, 7, 7, 7, 7, 7});
  for (const auto& s : category_summary(m, {{"a", "x"}, {"b", "x"}, {"c", "y"}, {"d", "y"}})) {
    CHECK(*s.within_mean_pct == *s.cross_mean_pct);
  }
}

TEST_CASE("agreement analysis on a three-category toy") {
  // a1 a2 | b1 b2 | n1 n2
  const OverlapMatrix m = matrix_of({"a1", "a2", "b1", "b2", "n1", "n2"},
                                    {/*a1*/ 60, 20, 22, 5, 7,
                                     /*a2*/ 18, 24, 3, 9,
                                     /*b1*/ 40, 2, 4,
                                     /*b2*/ 6, 8,
                                     /*n1*/ 30});
  const std::map<std::string, std::string> cats{{"a1", "A"}, {"a2", "A"}, {"b1", "B"},
                                                {"b2", "B"}, {"n1", "N"}, {"n2", "N"}};
  const auto r = agreement_analysis(m, cats, {"A", "B"});
  REQUIRE(r.size() == 2);
  CHECK(r[0].category == "A");
  CHECK(*r[0].within_pct == 60.0);
  CHECK(*r[0].cross_agreement_pct == doctest::Approx((20 + 22 + 18 + 24) / 4.0));
  CHECK(*r[0].non_agreement_pct == doctest::Approx((5 + 7 + 3 + 9) / 4.0));
  CHECK(*r[1].within_pct == 40.0);
  CHECK(*r[1].cross_agreement_pct == doctest::Approx((20 + 18 + 22 + 24) / 4.0));
  CHECK(*r[1].non_agreement_pct == doctest::Approx((2 + 4 + 6 + 8) / 4.0));

  const auto single = agreement_analysis(m, cats, {"A"});
  CHECK_FALSE(single[0].cross_agreement_pct.has_value());
  CHECK_THROWS_AS(agreement_analysis(m, cats, {}), ConfigError);
  CHECK_THROWS_AS(agreement_analysis(m, cats, {"Z"}), ConfigError);
}

TEST_CASE("site breakdown") {
  UnitSet s = set_of("p", {});
  s.provenance.sites = SiteSet::parse("attn_out,mlp_out");
  s.provenance.n_layers = 4;
  s.units = {{{Site::attn_out, 0, 1}, 1}, {{Site::attn_out, 3, 1}, 1}, {{Site::attn_out, 3, 2}, 1},
             {{Site::mlp_out, 1, 1}, 1}};
  s.k = 4;
  const SiteBreakdown b = site_breakdown(s);
  REQUIRE(b.sites.size() == 2);
  CHECK(b.sites[0].fraction == 0.75);
  CHECK(b.sites[1].fraction == 0.25);
  REQUIRE(b.layers.size() == 8);
  CHECK(b.layers[3].relative_depth == 0.75);
  CHECK(b.layers[3].fraction == 0.5);

  UnitSet last = set_of("q", {50, 51, 99});
  const SiteBreakdown lb = site_breakdown(last);
  CHECK(lb.layers[1].relative_depth == 0.5);
  CHECK(lb.layers[1].fraction == 1.0);
  CHECK_THROWS_AS(site_breakdown(set_of("e", {})), ConfigError);
}

TEST_CASE("cross-set overlap by hand") {
  const std::vector<UnitSet> a{set_of("a1", {1, 2}), set_of("a2", {3, 4})};
  const std::vector<UnitSet> b{set_of("b1", {1, 3}), set_of("b2", {1, 2}), set_of("b3", {9, 10})};
  const CrossBenchmarkResult r = cross_set_overlap(a, b);
  CHECK(r.cross_pairs == 6);
  CHECK(r.cross_mean_pct == doctest::Approx((50 + 100 + 0 + 50 + 0 + 0) / 6.0));
  CHECK(cross_set_overlap({a[0]}, {a[0]}).cross_mean_pct == 100.0);
  CHECK_THROWS_AS(cross_set_overlap({}, b), ConfigError);
}

TEST_CASE("k-fold consistency and cross-benchmark comparison on the fixture model") {
  const LanguageModel& model = gpt2_fixture();
  Benchmark b = load_benchmark(fixtures() / "blimp_toy");
  b.phenomena.resize(2);
  for (auto& p : b.phenomena) p.pairs.resize(31);
  const Localizer loc(model, SiteSet{Site::residual}, 2);
  const ConsistencyResult c = kfold_consistency(loc, b.content_hash, b.phenomena[0], 0.02, 3);
  CHECK(c.fold_sets.size() == 3);
  CHECK(c.dropped == 1);
  CHECK(c.fold_sets[2].provenance.fold == "2/3");
  CHECK(c.overlap.value_pct == overlap_all(c.fold_sets).value_pct);
  const ConsistencyResult seeded = kfold_consistency(loc, b.content_hash, b.phenomena[0], 0.02, 2, 5);
  CHECK(seeded.fold_sets[0].provenance.fold == "0/2:5");

  Benchmark single = b;
  single.phenomena.resize(1);
  const CrossBenchmarkResult self = cross_benchmark_overlap(loc, single, single, 0.02);
  CHECK(self.cross_mean_pct == 100.0);
  CHECK(self.within_a_pct.has_value());
  const CrossBenchmarkResult r = cross_benchmark_overlap(loc, b, single, 0.02);
  CHECK(r.cross_pairs == 2);
  const OverlapMatrix m = pairwise_overlap_matrix(loc, b, 0.02);
  CHECK(*r.within_a_pct == m.at(0, 1));
}
