#include "synloc/evaluator.hpp"

#include <algorithm>
#include <cmath>

#include "synloc/error.hpp"
#include "synloc/random.hpp"

namespace synloc {

PairScores score_pairs(const LanguageModel& model, const std::vector<MinimalPair>& pairs,
                       const AblationSpec& ablation, std::size_t threads) {
  std::vector<std::string> texts;
  texts.reserve(2 * pairs.size());
  for (const auto& p : pairs) texts.push_back(p.sentence_good);
  for (const auto& p : pairs) texts.push_back(p.sentence_bad);
  const auto lp = model.sentence_logprobs(texts, ablation, threads);
  PairScores s;
  s.good.assign(lp.begin(), lp.begin() + static_cast<std::ptrdiff_t>(pairs.size()));
  s.bad.assign(lp.begin() + static_cast<std::ptrdiff_t>(pairs.size()), lp.end());
  return s;
}

AccuracyReport accuracy_from(const PairScores& scores, const AblationSpec& ablation) {
  if (scores.good.empty()) throw DataError("accuracy needs at least one pair");
  AccuracyReport r;
  r.n_pairs = scores.good.size();
  for (std::size_t i = 0; i < r.n_pairs; ++i) {
    if (scores.good[i] > scores.bad[i]) {
      ++r.wins;
    } else if (scores.good[i] == scores.bad[i]) {
      ++r.ties;
    }
  }
  r.accuracy = static_cast<double>(r.wins) / static_cast<double>(r.n_pairs);
  r.ablation = ablation.summary();
  return r;
}

AccuracyReport accuracy(const LanguageModel& model, const std::vector<MinimalPair>& pairs,
                        const AblationSpec& ablation, std::size_t threads) {
  return accuracy_from(score_pairs(model, pairs, ablation, threads), ablation);
}

double mean_ablation_value(const LanguageModel& model, const std::vector<std::string>& sentences,
                           std::size_t threads) {
  if (sentences.empty()) throw DataError("mean ablation value needs at least one sentence");
  const Matrix act = model.capture_sentences(sentences, SiteSet{Site::residual}, threads);
  // Row sums first, then rows in order: fixed summation order.
  double total = 0.0;
  for (std::size_t i = 0; i < act.rows; ++i) {
    double row = 0.0;
    for (float v : act.row(i)) row += v;
    total += row;
  }
  const double m = total / static_cast<double>(act.values.size());
  if (!std::isfinite(m)) throw NumericError("mean ablation value is not finite");
  return m;
}

std::vector<UnitId> random_units(const UnitLayout& layout, std::size_t k, std::uint64_t seed,
                                 const std::string& salt) {
  Rng rng(derive_seed(seed, salt));
  std::vector<UnitId> out;
  for (std::size_t idx : rng.sample(layout.total(), k)) out.push_back(layout.unit_at(idx));
  std::sort(out.begin(), out.end());
  return out;
}

double AblationOutcome::mean_random_drop() const {
  if (random_drops.empty()) return 0.0;
  double s = 0.0;
  for (double d : random_drops) s += d;
  return s / static_cast<double>(random_drops.size());
}

AblationOutcome ablation_experiment(const Localizer& localizer, const std::string& benchmark_hash,
                                    const Phenomenon& p, const AblationOptions& opt) {
  if (p.pairs.size() < 4) throw DataError("phenomenon '" + p.uid + "' needs at least 4 pairs for ablation");
  if (opt.seeds.empty()) throw ConfigError("ablation needs at least one random seed");
  if (opt.mode == AblationMode::none) throw ConfigError("ablation mode must be zero or mean");
  const auto& model = localizer.model();
  const std::size_t threads = localizer.threads();
  const FoldSplit split = split_folds(p, 2);
  const Phenomenon& train = split.folds[0];
  const Phenomenon& heldout = split.folds[1];

  AblationOutcome out;
  out.phenomenon = p.uid;
  out.mode = opt.mode;
  out.seeds = opt.seeds;
  out.heldout_pairs = heldout.pairs.size();
  const UnitLayout layout = localizer.layout();
  out.k = target_count(layout.total(), opt.fraction);

  if (opt.mode == AblationMode::mean) {
    std::vector<std::string> grammatical;
    for (const auto& pair : train.pairs) grammatical.push_back(pair.sentence_good);
    out.mean_value = mean_ablation_value(model, grammatical, threads);
  }
  auto make_spec = [&](std::vector<UnitId> units) {
    return opt.mode == AblationMode::zero
               ? AblationSpec::zero(std::move(units), opt.application)
               : AblationSpec::mean(static_cast<float>(out.mean_value), std::move(units), opt.application);
  };

  const AccuracyReport base = accuracy(model, heldout.pairs, AblationSpec::none(), threads);
  out.baseline_accuracy = base.accuracy;

  if (out.k == 0) {
    // Nothing to ablate: every arm equals the baseline.
    out.top_accuracy = base.accuracy;
    out.random_accuracies.assign(opt.seeds.size(), base.accuracy);
    out.random_drops.assign(opt.seeds.size(), 0.0);
    return out;
  }
  UnitSet top = localizer.localize_on_fold(benchmark_hash, train, "0/2", opt.fraction);
  out.k = top.k;
  const AccuracyReport ablated = accuracy(model, heldout.pairs, make_spec(top.ids()), threads);
  out.top_accuracy = ablated.accuracy;
  out.top_ties = ablated.ties;
  out.top_drop = base.accuracy - ablated.accuracy;
  out.top_units = std::move(top);
  for (std::uint64_t seed : opt.seeds) {
    const auto units = random_units(layout, out.k, seed, p.uid);
    const double acc = accuracy(model, heldout.pairs, make_spec(units), threads).accuracy;
    out.random_accuracies.push_back(acc);
    out.random_drops.push_back(base.accuracy - acc);
  }
  return out;
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ConfigError("correlation inputs differ in length");
  if (x.size() < 3) throw ConfigError("correlation needs at least three points");
  // Exact test: a rounded mean can leave a constant vector with tiny spread.
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y)) throw NumericError("correlation is undefined for constant input");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("correlation is undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationReport consistency_vs_ablation(const std::vector<ScatterPoint>& points) {
  std::vector<double> x, y;
  for (const auto& p : points) {
    x.push_back(p.consistency_pct);
    y.push_back(p.drop);
  }
  CorrelationReport r;
  r.points = points;
  r.n = points.size();
  r.r = pearson_r(x, y);
  return r;
}

double ablation_correlation(const std::vector<double>& zero_drops, const std::vector<double>& mean_drops) {
  return pearson_r(zero_drops, mean_drops);
}

}  // namespace synloc
