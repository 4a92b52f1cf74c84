#include "synloc/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "synloc/error.hpp"
#include "synloc/parallel.hpp"
#include "synloc/store.hpp"

namespace synloc {

namespace {

// Double-double value hi + lo. Sums and the difference of means are carried
// in this form so a t near zero keeps its relative accuracy.
struct Wide {
  double hi = 0.0;
  double lo = 0.0;
};

// Error-free transforms; rely on -ffp-contract=off.
Wide two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

Wide add(Wide x, Wide y) {
  const Wide s = two_sum(x.hi, y.hi);
  const Wide r = two_sum(s.hi, s.lo + x.lo + y.lo);
  return r;
}

Wide add(Wide x, double y) { return add(x, Wide{y, 0.0}); }

Wide negate(Wide x) { return {-x.hi, -x.lo}; }

Wide two_prod(double a, double b) {
  const double p = a * b;
  return {p, std::fma(a, b, -p)};
}

Wide divide(Wide x, double d) {
  const double q1 = x.hi / d;
  const Wide r = add(x, negate(two_prod(q1, d)));
  const double q2 = r.hi / d;
  return two_sum(q1, q2);
}

struct Moments {
  Wide mean;
  double var = 0.0;  // sample variance, divisor n-1
};

Moments moments(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  Wide sum;
  for (double v : x) sum = add(sum, v);
  const Wide mean = divide(sum, n);
  // Two-pass around the mean keeps the variance accurate when the mean is
  // large relative to the spread.
  double ss = 0.0;
  double comp = 0.0;
  for (double v : x) {
    const double d = (v - mean.hi) - mean.lo;
    ss += d * d;
    comp += d;
  }
  return {mean, (ss - comp * comp / n) / (n - 1.0)};
}

std::optional<double> welch_from(const Moments& a, std::size_t na, const Moments& b, std::size_t nb) {
  const double se2 = a.var / static_cast<double>(na) + b.var / static_cast<double>(nb);
  const Wide diff = add(a.mean, negate(b.mean));
  const double delta = diff.hi + diff.lo;
  if (!(se2 > 0.0)) {
    if (delta == 0.0) return 0.0;
    return std::nullopt;
  }
  const double t = delta / std::sqrt(se2);
  if (!std::isfinite(t)) return std::nullopt;
  return t;
}

}  // namespace

std::optional<double> welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw DataError("welch_t needs at least two samples per group (got " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()) + ")");
  }
  for (double v : a) {
    if (!std::isfinite(v)) return std::nullopt;
  }
  for (double v : b) {
    if (!std::isfinite(v)) return std::nullopt;
  }
  return welch_from(moments(a), a.size(), moments(b), b.size());
}

std::vector<UnitId> UnitSet::ids() const {
  std::vector<UnitId> out;
  out.reserve(units.size());
  for (const auto& u : units) out.push_back(u.unit);
  return out;
}

std::size_t target_count(std::size_t total, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in [0, 1]");
  const double exact = fraction * static_cast<double>(total);
  // 1e-9 absorbs representation error such as 0.29 * 100 = 28.999999999999996.
  return std::min(total, static_cast<std::size_t>(std::floor(exact + 1e-9)));
}

ContrastResult contrast(const Matrix& good, const Matrix& bad, const UnitLayout& layout, std::size_t threads) {
  const std::size_t U = layout.total();
  if (good.cols != U || bad.cols != U) throw DataError("activation width does not match the unit layout");
  if (good.rows < 2 || bad.rows < 2) {
    throw DataError("localization needs at least two sentences per condition");
  }
  ContrastResult out;
  out.n_good = good.rows;
  out.n_bad = bad.rows;
  out.t.assign(U, std::numeric_limits<double>::quiet_NaN());
  out.defined.assign(U, false);

  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (U + kBlock - 1) / kBlock;
  std::vector<std::uint8_t> defined(U, 0);
  parallel_for(blocks, threads, [&](std::size_t bi) {
    std::vector<double> a(good.rows), b(bad.rows);
    const std::size_t end = std::min(U, (bi + 1) * kBlock);
    for (std::size_t u = bi * kBlock; u < end; ++u) {
      for (std::size_t i = 0; i < good.rows; ++i) a[i] = std::fabs(static_cast<double>(good.at(i, u)));
      for (std::size_t i = 0; i < bad.rows; ++i) b[i] = std::fabs(static_cast<double>(bad.at(i, u)));
      const auto t = welch_t(a, b);
      if (t) {
        out.t[u] = *t;
        defined[u] = 1;
      }
    }
  });
  for (std::size_t u = 0; u < U; ++u) {
    out.defined[u] = defined[u] != 0;
    if (!defined[u]) ++out.undefined_count;
  }
  out.provenance.sites = layout.sites;
  out.provenance.n_layers = layout.n_layers;
  out.provenance.hidden = layout.hidden;
  return out;
}

UnitSet select_top(const ContrastResult& c, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  const UnitLayout layout = c.provenance.layout();
  const std::size_t U = c.t.size();
  std::vector<std::size_t> order;
  order.reserve(U);
  for (std::size_t u = 0; u < U; ++u) {
    if (c.defined[u]) order.push_back(u);
  }
  if (order.empty()) throw NumericError("every unit has an undefined t statistic");
  const std::size_t k = std::min(target_count(U, fraction), order.size());
  // Layout index order equals UnitId order, so ties break on the index.
  auto better = [&](std::size_t x, std::size_t y) {
    if (c.t[x] != c.t[y]) return c.t[x] > c.t[y];
    return x < y;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);

  UnitSet out;
  out.k = k;
  out.fraction = fraction;
  out.total_units = U;
  out.defined_units = U - c.undefined_count;
  out.provenance = c.provenance;
  out.units.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.units.push_back({layout.unit_at(order[i]), c.t[order[i]]});
  return out;
}

UnitSet localize(const Matrix& good, const Matrix& bad, const UnitLayout& layout, double fraction,
                 std::size_t threads) {
  return select_top(contrast(good, bad, layout, threads), fraction);
}

Localizer::Localizer(const LanguageModel& model, SiteSet sites, std::size_t threads, ActivationCache* cache)
    : model_(model), sites_(sites), threads_(std::max<std::size_t>(1, threads)), cache_(cache) {
  if (sites_.empty()) throw ConfigError("no capture sites selected");
}

ActivationPair Localizer::activations(const std::string& benchmark_hash, const Phenomenon& p,
                                      const std::string& fold) const {
  if (cache_ == nullptr) return model_.capture_activations(p.pairs, sites_, threads_);
  const CacheKey key{model_.hash(), benchmark_hash, p.uid, fold, sites_};
  if (auto hit = cache_->load(key, p.pairs)) return std::move(*hit);
  ActivationPair fresh = model_.capture_activations(p.pairs, sites_, threads_);
  cache_->store(key, p.pairs, fresh);
  return fresh;
}

UnitSet Localizer::localize(const std::string& benchmark_hash, const Phenomenon& p, double fraction) const {
  return localize_on_fold(benchmark_hash, p, "all", fraction);
}

UnitSet Localizer::localize_on_fold(const std::string& benchmark_hash, const Phenomenon& fold_pairs,
                                    const std::string& fold, double fraction) const {
  const ActivationPair act = activations(benchmark_hash, fold_pairs, fold);
  ContrastResult c = contrast(act.good, act.bad, act.layout, threads_);
  c.provenance.model_hash = model_.hash();
  c.provenance.benchmark_hash = benchmark_hash;
  c.provenance.phenomenon_uid = fold_pairs.uid;
  c.provenance.language = fold_pairs.language;
  c.provenance.fold = fold;
  return select_top(c, fraction);
}

}  // namespace synloc
