#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "synloc/corpus.hpp"
#include "synloc/localizer.hpp"

namespace synloc {

struct OverlapReport {
  double value_pct = 0.0;
  std::size_t numerator = 0;    // |intersection|
  std::size_t denominator = 0;  // k (min k when the operands differ)
  bool unequal_k = false;
  std::vector<std::string> operands;  // "<phenomenon>@<fold>" per operand
};

/// 100 * |A n B| / k on unit identities. Operands must share model and sites.
OverlapReport overlap_pct(const UnitSet& a, const UnitSet& b);
/// Intersection of all sets, as a percentage of k.
OverlapReport overlap_all(const std::vector<UnitSet>& sets);

struct ConsistencyResult {
  OverlapReport overlap;
  std::vector<UnitSet> fold_sets;
  std::size_t dropped = 0;
};

/// Localizes each of `folds` folds of `p` and intersects the unit sets.
ConsistencyResult kfold_consistency(const Localizer& localizer, const std::string& benchmark_hash,
                                    const Phenomenon& p, double fraction, std::size_t folds,
                                    std::optional<std::uint64_t> seed = std::nullopt);

/// 100 * (k/U)^(f-1): the expected f-way intersection of independent uniform
/// k-subsets of U units, as a percentage of k.
double expected_random_overlap(std::size_t total, std::size_t k, std::size_t folds);
/// Exact standard deviation of the f-way intersection size under the same
/// model, in percent of k.
double random_overlap_stddev(std::size_t total, std::size_t k, std::size_t folds);

struct MonteCarloResult {
  double mean_pct = 0.0;
  double standard_error = 0.0;  // sample SE of the mean
  std::size_t trials = 0;
};

MonteCarloResult monte_carlo_overlap(std::size_t total, std::size_t k, std::size_t folds, std::size_t trials,
                                     std::uint64_t seed);

/// Symmetric overlap matrix with row/column labels.
struct OverlapMatrix {
  std::vector<std::string> labels;
  std::vector<double> values;  // n x n row-major

  std::size_t size() const { return labels.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * labels.size() + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * labels.size() + j]; }
};

OverlapMatrix pairwise_overlap_matrix(const std::vector<UnitSet>& sets);
/// Full-data localization of every phenomenon, then pairwise overlaps.
OverlapMatrix pairwise_overlap_matrix(const Localizer& localizer, const Benchmark& b, double fraction,
                                      std::vector<UnitSet>* sets_out = nullptr);

struct CategorySummary {
  std::string category;
  std::size_t members = 0;
  std::optional<double> within_mean_pct;  // absent below two members
  std::optional<double> cross_mean_pct;
  std::size_t within_pairs = 0;
  std::size_t cross_pairs = 0;
};

/// Categories in name order; `categories` maps every label to a category.
std::vector<CategorySummary> category_summary(const OverlapMatrix& m,
                                              const std::map<std::string, std::string>& categories);

struct AgreementSummary {
  std::string category;
  std::optional<double> within_pct;
  std::optional<double> cross_agreement_pct;
  std::optional<double> non_agreement_pct;
  std::size_t within_pairs = 0;
  std::size_t cross_agreement_pairs = 0;
  std::size_t non_agreement_pairs = 0;
};

std::vector<AgreementSummary> agreement_analysis(const OverlapMatrix& m,
                                                 const std::map<std::string, std::string>& categories,
                                                 const std::set<std::string>& agreement);

struct SiteBreakdown {
  struct SiteShare {
    Site site;
    std::size_t count = 0;
    double fraction = 0.0;
  };
  struct LayerBin {
    Site site;
    int layer = 0;
    double relative_depth = 0.0;  // layer / L
    std::size_t count = 0;
    double fraction = 0.0;  // of k
  };
  std::size_t k = 0;
  std::vector<SiteShare> sites;  // every site of the set's universe
  std::vector<LayerBin> layers;  // every (site, layer) of the universe
};

SiteBreakdown site_breakdown(const UnitSet& set);

struct CrossBenchmarkResult {
  double cross_mean_pct = 0.0;
  std::size_t cross_pairs = 0;
  /// Pairwise mean within a multi-phenomenon benchmark, or 2-fold
  /// consistency when it has a single phenomenon.
  std::optional<double> within_a_pct;
  std::optional<double> within_b_pct;
};

/// Mean overlap over the cartesian product of two collections of unit sets;
/// `within_*` are passed in by the caller when the comparators were computed.
CrossBenchmarkResult cross_set_overlap(const std::vector<UnitSet>& a, const std::vector<UnitSet>& b);

CrossBenchmarkResult cross_benchmark_overlap(const Localizer& localizer, const Benchmark& a, const Benchmark& b,
                                             double fraction);

/// Arithmetic mean; nullopt when empty.
std::optional<double> mean_of(const std::vector<double>& xs);

}  // namespace synloc
