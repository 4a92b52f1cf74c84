#include "synloc/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "synloc/error.hpp"
#include "synloc/random.hpp"

namespace synloc {

namespace {

std::string operand_label(const UnitSet& s) {
  return s.provenance.phenomenon_uid + "@" + (s.provenance.fold.empty() ? "all" : s.provenance.fold);
}

void check_compatible(const UnitSet& a, const UnitSet& b) {
  if (a.provenance.model_hash != b.provenance.model_hash) {
    throw ConfigError("cannot compare unit sets from different models (" + operand_label(a) + " vs " +
                      operand_label(b) + ")");
  }
  if (!(a.provenance.sites == b.provenance.sites) || a.provenance.n_layers != b.provenance.n_layers ||
      a.provenance.hidden != b.provenance.hidden) {
    throw ConfigError("cannot compare unit sets over different site sets (" + operand_label(a) + " vs " +
                      operand_label(b) + ")");
  }
}

}  // namespace

std::optional<double> mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

OverlapReport overlap_all(const std::vector<UnitSet>& sets) {
  if (sets.empty()) throw ConfigError("overlap needs at least one unit set");
  OverlapReport r;
  std::size_t k_min = sets[0].k;
  for (const auto& s : sets) {
    check_compatible(sets[0], s);
    r.operands.push_back(operand_label(s));
    if (s.k != sets[0].k) r.unequal_k = true;
    k_min = std::min(k_min, s.k);
  }
  if (k_min == 0) throw ConfigError("overlap of an empty unit set is undefined");
  std::vector<UnitId> common = sets[0].ids();
  std::sort(common.begin(), common.end());
  for (std::size_t i = 1; i < sets.size(); ++i) {
    std::vector<UnitId> other = sets[i].ids();
    std::sort(other.begin(), other.end());
    std::vector<UnitId> next;
    std::set_intersection(common.begin(), common.end(), other.begin(), other.end(), std::back_inserter(next));
    common = std::move(next);
  }
  r.numerator = common.size();
  r.denominator = k_min;
  r.value_pct = 100.0 * static_cast<double>(r.numerator) / static_cast<double>(r.denominator);
  return r;
}

OverlapReport overlap_pct(const UnitSet& a, const UnitSet& b) { return overlap_all({a, b}); }

ConsistencyResult kfold_consistency(const Localizer& localizer, const std::string& benchmark_hash,
                                    const Phenomenon& p, double fraction, std::size_t folds,
                                    std::optional<std::uint64_t> seed) {
  if (folds < 2) throw ConfigError("consistency needs at least two folds");
  const FoldSplit split = split_folds(p, folds, seed);
  ConsistencyResult out;
  out.dropped = split.dropped;
  for (std::size_t i = 0; i < split.folds.size(); ++i) {
    std::string label = std::to_string(i) + "/" + std::to_string(folds);
    if (seed) label += ":" + std::to_string(*seed);
    out.fold_sets.push_back(localizer.localize_on_fold(benchmark_hash, split.folds[i], label, fraction));
  }
  out.overlap = overlap_all(out.fold_sets);
  return out;
}

double expected_random_overlap(std::size_t total, std::size_t k, std::size_t folds) {
  if (total < 1 || k < 1 || k > total) throw ConfigError("expected overlap needs 1 <= k <= U");
  if (folds < 2) throw ConfigError("expected overlap needs at least two folds");
  const double p = static_cast<double>(k) / static_cast<double>(total);
  return 100.0 * std::pow(p, static_cast<double>(folds - 1));
}

double random_overlap_stddev(std::size_t total, std::size_t k, std::size_t folds) {
  expected_random_overlap(total, k, folds);  // domain checks
  const double U = static_cast<double>(total);
  const double K = static_cast<double>(k);
  const double f = static_cast<double>(folds);
  const double single = std::pow(K / U, f);
  const double joint = total > 1 ? std::pow(K * (K - 1.0) / (U * (U - 1.0)), f) : 0.0;
  const double var = U * single + U * (U - 1.0) * joint - U * U * single * single;
  return 100.0 * std::sqrt(std::max(0.0, var)) / K;
}

MonteCarloResult monte_carlo_overlap(std::size_t total, std::size_t k, std::size_t folds, std::size_t trials,
                                     std::uint64_t seed) {
  expected_random_overlap(total, k, folds);
  if (trials < 1) throw ConfigError("Monte Carlo needs at least one trial");
  Rng rng(seed);
  std::vector<std::uint32_t> pool(total);
  for (std::size_t i = 0; i < total; ++i) pool[i] = static_cast<std::uint32_t>(i);
  std::vector<std::uint32_t> count(total, 0);
  std::vector<std::uint32_t> touched;
  touched.reserve(k * folds);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::size_t hits = 0;
    for (std::size_t f = 0; f < folds; ++f) {
      // Partial Fisher-Yates on a persistent permutation: the first k slots
      // form a uniform k-subset regardless of the pool's current order.
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
        std::swap(pool[i], pool[j]);
        const std::uint32_t u = pool[i];
        if (++count[u] == folds) ++hits;
        touched.push_back(u);
      }
    }
    for (std::uint32_t u : touched) count[u] = 0;
    touched.clear();
    const double pct = 100.0 * static_cast<double>(hits) / static_cast<double>(k);
    sum += pct;
    sum_sq += pct * pct;
  }
  MonteCarloResult r;
  r.trials = trials;
  const double n = static_cast<double>(trials);
  r.mean_pct = sum / n;
  if (trials > 1) {
    const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
    r.standard_error = std::sqrt(var / n);
  }
  return r;
}

OverlapMatrix pairwise_overlap_matrix(const std::vector<UnitSet>& sets) {
  if (sets.size() < 2) throw ConfigError("pairwise overlap needs at least two phenomena");
  OverlapMatrix m;
  for (const auto& s : sets) m.labels.push_back(s.provenance.phenomenon_uid);
  const std::size_t n = sets.size();
  m.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    m.at(i, i) = 100.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = overlap_pct(sets[i], sets[j]).value_pct;
      m.at(i, j) = v;
      m.at(j, i) = v;
    }
  }
  return m;
}

OverlapMatrix pairwise_overlap_matrix(const Localizer& localizer, const Benchmark& b, double fraction,
                                      std::vector<UnitSet>* sets_out) {
  std::vector<UnitSet> sets;
  for (const auto& p : b.phenomena) sets.push_back(localizer.localize(b.content_hash, p, fraction));
  OverlapMatrix m = pairwise_overlap_matrix(sets);
  if (sets_out != nullptr) *sets_out = std::move(sets);
  return m;
}

namespace {

const std::string& category_of(const std::map<std::string, std::string>& categories, const std::string& label) {
  auto it = categories.find(label);
  if (it == categories.end()) throw ConfigError("phenomenon '" + label + "' has no category");
  return it->second;
}

}  // namespace

std::vector<CategorySummary> category_summary(const OverlapMatrix& m,
                                              const std::map<std::string, std::string>& categories) {
  const std::size_t n = m.size();
  std::vector<std::string> cat(n);
  std::map<std::string, CategorySummary> out;
  for (std::size_t i = 0; i < n; ++i) {
    cat[i] = category_of(categories, m.labels[i]);
    auto& s = out[cat[i]];
    s.category = cat[i];
    ++s.members;
  }
  std::map<std::string, std::vector<double>> within, cross;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (cat[i] == cat[j]) {
        within[cat[i]].push_back(m.at(i, j));
      } else {
        cross[cat[i]].push_back(m.at(i, j));
        cross[cat[j]].push_back(m.at(i, j));
      }
    }
  }
  std::vector<CategorySummary> result;
  for (auto& [name, s] : out) {
    s.within_pairs = within[name].size();
    s.cross_pairs = cross[name].size();
    s.within_mean_pct = mean_of(within[name]);
    s.cross_mean_pct = mean_of(cross[name]);
    result.push_back(s);
  }
  return result;
}

std::vector<AgreementSummary> agreement_analysis(const OverlapMatrix& m,
                                                 const std::map<std::string, std::string>& categories,
                                                 const std::set<std::string>& agreement) {
  if (agreement.empty()) throw ConfigError("agreement analysis needs at least one agreement category");
  const std::size_t n = m.size();
  std::vector<std::string> cat(n);
  std::set<std::string> present;
  for (std::size_t i = 0; i < n; ++i) {
    cat[i] = category_of(categories, m.labels[i]);
    present.insert(cat[i]);
  }
  for (const auto& a : agreement) {
    if (!present.contains(a)) throw ConfigError("agreement category '" + a + "' has no phenomena");
  }
  std::vector<AgreementSummary> out;
  for (const auto& a : agreement) {
    std::vector<double> within, cross, non;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const bool ia = cat[i] == a;
        const bool ja = cat[j] == a;
        if (ia && ja) {
          within.push_back(m.at(i, j));
        } else if (ia || ja) {
          const std::string& other = ia ? cat[j] : cat[i];
          (agreement.contains(other) ? cross : non).push_back(m.at(i, j));
        }
      }
    }
    AgreementSummary s;
    s.category = a;
    s.within_pairs = within.size();
    s.cross_agreement_pairs = cross.size();
    s.non_agreement_pairs = non.size();
    s.within_pct = mean_of(within);
    s.cross_agreement_pct = mean_of(cross);
    s.non_agreement_pct = mean_of(non);
    out.push_back(s);
  }
  return out;
}

SiteBreakdown site_breakdown(const UnitSet& set) {
  if (set.units.empty()) throw ConfigError("site breakdown of an empty unit set");
  const auto& prov = set.provenance;
  SiteBreakdown b;
  b.k = set.units.size();
  const double k = static_cast<double>(b.k);
  for (Site s : prov.sites.sites()) {
    SiteBreakdown::SiteShare share{s, 0, 0.0};
    for (const auto& u : set.units) share.count += u.unit.site == s ? 1 : 0;
    share.fraction = static_cast<double>(share.count) / k;
    b.sites.push_back(share);
    for (int l = 0; l < prov.n_layers; ++l) {
      SiteBreakdown::LayerBin bin{s, l, static_cast<double>(l) / prov.n_layers, 0, 0.0};
      for (const auto& u : set.units) bin.count += (u.unit.site == s && u.unit.layer == l) ? 1 : 0;
      bin.fraction = static_cast<double>(bin.count) / k;
      b.layers.push_back(bin);
    }
  }
  return b;
}

CrossBenchmarkResult cross_set_overlap(const std::vector<UnitSet>& a, const std::vector<UnitSet>& b) {
  if (a.empty() || b.empty()) throw ConfigError("cross-benchmark overlap needs non-empty phenomenon subsets");
  std::vector<double> values;
  for (const auto& x : a) {
    for (const auto& y : b) values.push_back(overlap_pct(x, y).value_pct);
  }
  CrossBenchmarkResult r;
  r.cross_pairs = values.size();
  r.cross_mean_pct = *mean_of(values);
  return r;
}

namespace {

std::optional<double> within_comparator(const Localizer& localizer, const Benchmark& b,
                                        const std::vector<UnitSet>& sets, double fraction) {
  if (sets.size() >= 2) {
    const OverlapMatrix m = pairwise_overlap_matrix(sets);
    std::vector<double> v;
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = i + 1; j < m.size(); ++j) v.push_back(m.at(i, j));
    }
    return mean_of(v);
  }
  const Phenomenon& p = b.phenomena.front();
  if (p.pairs.size() < 4) return std::nullopt;
  return kfold_consistency(localizer, b.content_hash, p, fraction, 2).overlap.value_pct;
}

}  // namespace

CrossBenchmarkResult cross_benchmark_overlap(const Localizer& localizer, const Benchmark& a, const Benchmark& b,
                                             double fraction) {
  if (a.phenomena.empty() || b.phenomena.empty()) {
    throw ConfigError("cross-benchmark overlap needs non-empty phenomenon subsets");
  }
  std::vector<UnitSet> sa, sb;
  for (const auto& p : a.phenomena) sa.push_back(localizer.localize(a.content_hash, p, fraction));
  for (const auto& p : b.phenomena) sb.push_back(localizer.localize(b.content_hash, p, fraction));
  CrossBenchmarkResult r = cross_set_overlap(sa, sb);
  r.within_a_pct = within_comparator(localizer, a, sa, fraction);
  r.within_b_pct = within_comparator(localizer, b, sb, fraction);
  return r;
}

}  // namespace synloc
