#include <doctest.h>

#include <cmath>
#include <fstream>

#include "../common/oracles.hpp"
#include "support.hpp"
#include "synloc/crosslingual.hpp"
#include "synloc/error.hpp"

using namespace synloc;
using namespace synloc::testing;
namespace fs = std::filesystem;

namespace {

LanguageFeatures vec(const std::string& lang, std::vector<double> f) {
  LanguageFeatures l;
  l.language = lang;
  l.missing.assign(f.size(), false);
  l.features = std::move(f);
  return l;
}

UnitSet lang_set(const std::string& lang, const std::vector<int>& channels) {
  UnitSet s;
  s.provenance.model_hash = "m";
  s.provenance.phenomenon_uid = lang + "_sva";
  s.provenance.language = lang;
  s.provenance.sites = SiteSet{Site::residual};
  s.provenance.n_layers = 1;
  s.provenance.hidden = 100;
  for (int c : channels) s.units.push_back({{Site::residual, 0, c}, 1.0});
  s.k = s.units.size();
  s.total_units = 100;
  return s;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = scratch_dir("crossling-" + name) / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("cosine similarity") {
  CHECK(syntactic_similarity(vec("a", {1, 0, 1}), vec("b", {1, 1, 0})) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(syntactic_similarity(vec("a", {0.3, 2, 7}), vec("b", {0.3, 2, 7})) == 1.0);
  CHECK(syntactic_similarity(vec("a", {1, 0}), vec("b", {0, 1})) == 0.0);
  CHECK_THROWS_AS(syntactic_similarity(vec("a", {0, 0}), vec("b", {0, 1})), NumericError);
  CHECK_THROWS_AS(syntactic_similarity(vec("a", {1}), vec("b", {0, 1})), DataError);
}

TEST_CASE("least squares matches the normal equations") {
  Rng rng(99);
  std::vector<double> x(100), y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    x[i] = rng.uniform();
    y[i] = 3.0 - 2.0 * x[i] + 0.5 * (rng.uniform() - 0.5);
  }
  const LinearFit f = least_squares(x, y);
  const oracle::Line o = oracle::least_squares(x, y);
  CHECK(std::abs(f.slope - o.slope) <= 1e-10);
  CHECK(std::abs(f.intercept - o.intercept) <= 1e-10);
  CHECK(std::abs(f.r - o.r) <= 1e-10);
  CHECK(f.n == 100);
  CHECK_THROWS_AS(least_squares({1, 1, 1}, {1, 2, 3}), NumericError);
  CHECK_THROWS_AS(least_squares({1, 2, 3}, {4, 4, 4}), NumericError);
}

TEST_CASE("feature file parsing") {
  const FeatureTable t = load_feature_vectors(fixtures() / "features.csv", true);
  CHECK(t.feature_names.size() == 8);
  CHECK(t.dropped == std::vector<std::string>{"qad"});
  REQUIRE(t.find("qaa") != nullptr);
  CHECK(t.find("qad") == nullptr);
  const FeatureTable all = load_feature_vectors(fixtures() / "features.csv", false);
  REQUIRE(all.find("qad") != nullptr);
  CHECK_FALSE(all.find("qad")->complete);
  CHECK(all.find("qad")->missing[2]);

  const fs::path tsv = write_file("f.tsv", "lang\tf1\tf2\nxx\t1\t0\nyy\t0\t1\n");
  CHECK(load_feature_vectors(tsv, true).languages.size() == 2);
  CHECK_THROWS_AS(load_feature_vectors(write_file("dup.csv", "lang,f\nxx,1\nxx,2\n"), true), DataError);
  CHECK_THROWS_AS(load_feature_vectors(write_file("cols.csv", "lang,f,g\nxx,1\n"), true), DataError);
  CHECK_THROWS_AS(load_feature_vectors(write_file("num.csv", "lang,f\nxx,abc\n"), true), DataError);
}

TEST_CASE("spurious-pair filter excludes exactly the injected artifacts") {
  const FeatureTable features = load_feature_vectors(fixtures() / "features.csv", true);
  const DistanceTable distances = DistanceTable::load(fixtures() / "distances.csv");
  std::map<std::string, UnitSet> sets{{"en", lang_set("en", {1, 2, 3, 4})},
                                      {"qaa", lang_set("qaa", {1, 2, 3, 5})},
                                      {"qab", lang_set("qab", {1, 6, 7, 8})},
                                      {"qac", lang_set("qac", {1, 2, 7, 9})},
                                      {"qae", lang_set("qae", {1, 2, 3, 5})}};
  const CrossLingualResult r = overlap_vs_similarity(sets, features, &distances);
  CHECK(r.points.size() == 10);
  CHECK(r.excluded == 1);
  for (const auto& p : r.points) {
    const bool injected = p.lang_a == "qab" && p.lang_b == "qac";
    CHECK(p.excluded == injected);
  }
  // qaa and qae share a vector: similarity one, genuinely, so kept.
  const auto twin = std::find_if(r.points.begin(), r.points.end(),
                                 [](const auto& p) { return p.lang_a == "qaa" && p.lang_b == "qae"; });
  CHECK(twin->similarity == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.fit.has_value());

  // Cosine route: the same features give the same similarities where the file is honest.
  const CrossLingualResult cos = overlap_vs_similarity(sets, features);
  CHECK(cos.excluded == 0);
  for (std::size_t i = 0; i < cos.points.size(); ++i) {
    if (r.points[i].excluded) continue;
    CHECK(cos.points[i].similarity == doctest::Approx(r.points[i].similarity).epsilon(1e-12));
  }

  std::map<std::string, UnitSet> two{{"en", sets["en"]}, {"qaa", sets["qaa"]}};
  CHECK_THROWS_AS(overlap_vs_similarity(two, features), ConfigError);
}

TEST_CASE("distance table lookups are symmetric") {
  DistanceTable t;
  t.set("b", "a", 0.25);
  CHECK(*t.distance("a", "b") == 0.25);
  CHECK(*t.distance("b", "a") == 0.25);
  CHECK_FALSE(t.distance("a", "c").has_value());
  CHECK_THROWS_AS(DistanceTable::load(write_file("d.csv", "lang_a,lang_b,distance\na,b,0.1\nb,a,0.2\n")), DataError);
}

TEST_CASE("cross-language agreement bars") {
  auto make = [](const std::string& bench, std::vector<std::pair<std::string, std::vector<int>>> sets,
                 std::map<std::string, std::string> cats) {
    LabeledSets ls;
    for (auto& [uid, ch] : sets) {
      UnitSet s = lang_set("xx", ch);
      s.provenance.phenomenon_uid = uid;
      s.provenance.benchmark_hash = bench;
      ls.sets.push_back(s);
    }
    ls.categories = std::move(cats);
    for (const auto& [uid, c] : ls.categories) {
      if (c != "other") ls.agreement.insert(c);
    }
    return ls;
  };
  const LabeledSets native = make("nat", {{"n_a1", {1, 2}}, {"n_a2", {1, 3}}, {"n_b", {1, 4}}, {"n_o", {9, 8}}},
                                  {{"n_a1", "A"}, {"n_a2", "A"}, {"n_b", "B"}, {"n_o", "other"}});
  const LabeledSets ref = make("ref", {{"r_a", {1, 2}}, {"r_b", {2, 3}}, {"r_o", {8, 7}}},
                               {{"r_a", "A"}, {"r_b", "B"}, {"r_o", "other"}});
  const auto bars = cross_language_agreement_report(native, ref);
  REQUIRE(bars.size() == 2);
  CHECK(bars[0].category == "A");
  CHECK(*bars[0].within == 50.0);
  CHECK(*bars[0].cross_agreement == 50.0);
  CHECK(*bars[0].non_agreement == 0.0);
  // Native A against reference agreement phenomena r_a and r_b.
  CHECK(*bars[0].reference_agreement == doctest::Approx((100 + 50 + 50 + 50) / 4.0));
  CHECK(*bars[0].reference_non_agreement == 0.0);
  CHECK_FALSE(bars[1].within.has_value());
}
