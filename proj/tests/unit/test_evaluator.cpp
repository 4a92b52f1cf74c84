#include <doctest.h>

#include <algorithm>
#include <set>

#include "../common/oracles.hpp"
#include "support.hpp"
#include "synloc/error.hpp"
#include "synloc/evaluator.hpp"

using namespace synloc;
using namespace synloc::testing;

namespace {

Phenomenon small_phenomenon(const std::string& uid, std::size_t n) {
  Benchmark b = load_benchmark(fixtures() / "blimp_toy");
  Phenomenon p = b.phenomenon(uid);
  p.pairs.resize(n);
  return p;
}

}  // namespace

TEST_CASE("accuracy counts ties as losses") {
  PairScores s{{-1.0, -2.0, -3.0, -4.0}, {-2.0, -2.0, -1.0, -9.0}};
  const AccuracyReport r = accuracy_from(s, AblationSpec::none());
  CHECK(r.wins == 2);
  CHECK(r.ties == 1);
  CHECK(r.accuracy == 0.5);
  CHECK(r.ablation == "none x0 @all-positions");
  CHECK_THROWS_AS(accuracy_from(PairScores{}, AblationSpec::none()), DataError);
}

TEST_CASE("accuracy on the fixture model is order invariant and untouched by an empty ablation") {
  const LanguageModel& model = gpt2_fixture();
  Phenomenon p = small_phenomenon("determiner_noun_agreement_1", 24);
  const PairScores base = score_pairs(model, p.pairs, AblationSpec::none(), 2);
  const PairScores empty = score_pairs(model, p.pairs, AblationSpec::zero({}), 2);
  CHECK(base.good == empty.good);
  CHECK(base.bad == empty.bad);
  const double acc = accuracy_from(base, AblationSpec::none()).accuracy;
  std::reverse(p.pairs.begin(), p.pairs.end());
  CHECK(accuracy(model, p.pairs, AblationSpec::none(), 1).accuracy == acc);
}

TEST_CASE("random units are distinct, sorted, inside the layout and seed-stable") {
  const UnitLayout layout{SiteSet::parse("attn_out,mlp_out"), 3, 16};
  const auto a = random_units(layout, 20, 7, "transitive");
  CHECK(a.size() == 20);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::set<UnitId>(a.begin(), a.end()).size() == 20);
  for (const auto& u : a) CHECK(layout.valid(u));
  CHECK(random_units(layout, 20, 7, "transitive") == a);
  CHECK(random_units(layout, 20, 8, "transitive") != a);
  CHECK(random_units(layout, 20, 7, "intransitive") != a);
  CHECK(random_units(layout, 0, 7, "x").empty());
}

TEST_CASE("mean ablation value is the mean residual activation") {
  const LanguageModel& model = gpt2_fixture();
  const std::vector<std::string> s{"The cat sleeps.", "Some dogs run."};
  const Matrix act = model.capture_sentences(s, SiteSet{Site::residual}, 1);
  long double total = 0;
  for (float v : act.values) total += v;
  CHECK(mean_ablation_value(model, s, 2) ==
        doctest::Approx(static_cast<double>(total / act.values.size())).epsilon(1e-12));
}

TEST_CASE("ablation experiment plumbing") {
  const LanguageModel& model = gpt2_fixture();
  const Phenomenon p = small_phenomenon("transitive", 40);
  const Localizer loc(model, SiteSet{Site::residual}, 2);

  AblationOptions none;
  none.fraction = 0.0;
  const AblationOutcome zero_k = ablation_experiment(loc, "bh", p, none);
  CHECK(zero_k.k == 0);
  CHECK(zero_k.top_drop == 0.0);
  CHECK(zero_k.random_drops == std::vector<double>(4, 0.0));
  CHECK_FALSE(zero_k.top_units.has_value());

  AblationOptions opt;
  opt.fraction = 0.02;
  opt.seeds = {0, 1};
  const AblationOutcome o = ablation_experiment(loc, "bh", p, opt);
  CHECK(o.heldout_pairs == 20);
  CHECK(o.k == 20);
  REQUIRE(o.top_units.has_value());
  CHECK(o.top_units->provenance.fold == "0/2");
  CHECK(o.top_drop == doctest::Approx(o.baseline_accuracy - o.top_accuracy));
  CHECK(o.random_drops.size() == 2);
  // Random arms reproduce per seed.
  const AblationOutcome again = ablation_experiment(loc, "bh", p, opt);
  CHECK(again.random_accuracies == o.random_accuracies);
  CHECK(again.top_accuracy == o.top_accuracy);

  opt.mode = AblationMode::mean;
  const AblationOutcome m = ablation_experiment(loc, "bh", p, opt);
  std::vector<std::string> train;
  for (std::size_t i = 0; i < 20; ++i) train.push_back(p.pairs[i].sentence_good);
  CHECK(m.mean_value == mean_ablation_value(model, train, 1));

  opt.seeds.clear();
  CHECK_THROWS_AS(ablation_experiment(loc, "bh", p, opt), ConfigError);
}

TEST_CASE("Pearson correlation") {
  CHECK(pearson_r({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson_r({1, 2, 3}, {-1, -2, -3}) == doctest::Approx(-1.0));
  // By hand: x = (0, 1, 2), y = (1, 0, 2): sxy = 1, sxx = 2, syy = 2.
  CHECK(pearson_r({0, 1, 2}, {1, 0, 2}) == doctest::Approx(0.5));
  Rng rng(4);
  std::vector<double> x(50), y(50);
  for (std::size_t i = 0; i < 50; ++i) {
    x[i] = rng.uniform();
    y[i] = 0.3 * x[i] + rng.uniform();
  }
  CHECK(pearson_r(x, y) == doctest::Approx(oracle::pearson_r(x, y)).epsilon(1e-12));
  CHECK_THROWS_AS(pearson_r({1, 2, 3}, {5, 5, 5}), NumericError);
  CHECK_THROWS_AS(pearson_r({1, 2}, {1, 2}), ConfigError);
  CHECK_THROWS_AS(pearson_r({1, 2, 3}, {1, 2}), ConfigError);

  const CorrelationReport r = consistency_vs_ablation({{"a", 10, 0.1}, {"b", 20, 0.0}, {"c", 30, 0.2}});
  CHECK(r.n == 3);
  CHECK(r.r == doctest::Approx(0.5));
  CHECK_THROWS_AS(consistency_vs_ablation({{"a", 10, 0.1}, {"b", 20, 0.1}, {"c", 30, 0.1}}), NumericError);
  CHECK(ablation_correlation({0.1, 0.2, 0.3}, {0.2, 0.4, 0.7}) > 0.9);
}
