#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synloc/corpus.hpp"
#include "synloc/engine.hpp"

namespace synloc {

class ActivationCache;

/// Welch's t for mean(a) - mean(b) with n-1 sample variances, in double.
/// Returns nullopt when both variances are zero and the means differ (the
/// statistic is undefined); returns 0 when both are constant and equal.
/// Throws DataError when either sample has fewer than two values.
std::optional<double> welch_t(std::span<const double> a, std::span<const double> b);

/// Where a contrast or unit set came from.
struct Provenance {
  std::string model_hash;
  std::string benchmark_hash;
  std::string phenomenon_uid;
  std::string language;
  std::string fold;  // "all", or "<index>/<count>" with an optional ":seed"
  SiteSet sites;
  int n_layers = 0;
  int hidden = 0;
  std::string zero_variance_policy = "exclude";

  UnitLayout layout() const { return {sites, n_layers, hidden}; }
  bool operator==(const Provenance&) const = default;
};

struct ContrastResult {
  std::vector<double> t;        // one per unit in layout order; NaN when undefined
  std::vector<bool> defined;
  std::size_t n_good = 0;
  std::size_t n_bad = 0;
  std::size_t undefined_count = 0;
  Provenance provenance;
};

struct ScoredUnit {
  UnitId unit;
  double t = 0.0;
  bool operator==(const ScoredUnit&) const = default;
};

/// Top-k units ordered by (t descending, UnitId ascending).
struct UnitSet {
  std::vector<ScoredUnit> units;
  std::size_t k = 0;
  double fraction = 0.0;
  std::size_t total_units = 0;    // U, the size of the site universe
  std::size_t defined_units = 0;  // units with a defined statistic
  Provenance provenance;

  std::vector<UnitId> ids() const;
  bool operator==(const UnitSet&) const = default;
};

/// floor(fraction * total), robust to binary rounding of `fraction`.
std::size_t target_count(std::size_t total, double fraction);

/// Welch t of |good| vs |bad| per column.
ContrastResult contrast(const Matrix& good, const Matrix& bad, const UnitLayout& layout,
                        std::size_t threads = 1);

/// Selects the top floor(fraction * U) defined units. When fewer units are
/// defined than that, all defined units are returned and k shrinks to match.
UnitSet select_top(const ContrastResult& contrast, double fraction);

UnitSet localize(const Matrix& good, const Matrix& bad, const UnitLayout& layout, double fraction,
                 std::size_t threads = 1);

/// Runs capture + localization for phenomena or folds of one model,
/// consulting an optional activation cache.
class Localizer {
 public:
  Localizer(const LanguageModel& model, SiteSet sites, std::size_t threads,
            ActivationCache* cache = nullptr);

  const LanguageModel& model() const { return model_; }
  SiteSet sites() const { return sites_; }
  std::size_t threads() const { return threads_; }
  UnitLayout layout() const { return model_.layout(sites_); }

  /// Captured activations for `pairs`, labeled by (benchmark hash, uid, fold).
  ActivationPair activations(const std::string& benchmark_hash, const Phenomenon& p,
                             const std::string& fold) const;

  /// Localization over all pairs of `p`.
  UnitSet localize(const std::string& benchmark_hash, const Phenomenon& p, double fraction) const;
  /// Localization over one fold; `fold` is recorded in the provenance.
  UnitSet localize_on_fold(const std::string& benchmark_hash, const Phenomenon& fold_pairs,
                           const std::string& fold, double fraction) const;

 private:
  const LanguageModel& model_;
  SiteSet sites_;
  std::size_t threads_;
  ActivationCache* cache_;
};

}  // namespace synloc
