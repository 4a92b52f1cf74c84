#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "synloc/analysis.hpp"
#include "synloc/localizer.hpp"

namespace synloc {

struct LanguageFeatures {
  std::string language;
  std::vector<double> features;
  std::vector<bool> missing;
  bool complete = true;
};

struct FeatureTable {
  std::vector<std::string> feature_names;
  std::vector<LanguageFeatures> languages;  // file order
  std::vector<std::string> dropped;         // incomplete rows filtered out
  std::vector<std::string> warnings;

  const LanguageFeatures* find(const std::string& language) const;
};

/// CSV or TSV: a language column then feature columns; `--` marks a missing
/// cell. With `require_complete`, rows with missing cells are dropped.
FeatureTable load_feature_vectors(const std::filesystem::path& path, bool require_complete);

/// Cosine similarity (one minus cosine distance) of two complete vectors.
double syntactic_similarity(const LanguageFeatures& a, const LanguageFeatures& b);

/// Precomputed pairwise distances (`lang_a, lang_b, distance`), as exported
/// by typology databases. Lookups are symmetric.
class DistanceTable {
 public:
  static DistanceTable load(const std::filesystem::path& path);
  void set(const std::string& a, const std::string& b, double distance);
  std::optional<double> distance(const std::string& a, const std::string& b) const;
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, double> table_;
};

struct LanguagePairPoint {
  std::string lang_a;
  std::string lang_b;
  double similarity = 0.0;
  double overlap_pct = 0.0;
  bool excluded = false;
  std::string reason;
};

/// Marks pairs whose similarity is 1 (within 1e-12) although their feature
/// vectors differ. Returns the number of newly excluded pairs.
std::size_t filter_spurious(std::vector<LanguagePairPoint>& points, const FeatureTable& features);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;
  std::size_t n = 0;
};

/// Ordinary least squares y = slope * x + intercept, plus Pearson r.
/// Throws NumericError when x or y is constant.
LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y);

struct CrossLingualResult {
  std::vector<LanguagePairPoint> points;  // lexicographic (lang_a < lang_b)
  std::size_t excluded = 0;
  std::optional<LinearFit> fit;  // absent when degenerate
  std::string degenerate;        // why, when fit is absent
};

/// Scores every unordered language pair that has both a unit set and a
/// complete feature vector. Similarity comes from `distances` when given
/// (1 - distance), otherwise from the cosine of the feature vectors.
CrossLingualResult overlap_vs_similarity(const std::map<std::string, UnitSet>& unit_sets,
                                         const FeatureTable& features,
                                         const DistanceTable* distances = nullptr);

struct AgreementBars {
  std::string category;
  std::optional<double> within;                   // pairs inside the category
  std::optional<double> cross_agreement;          // vs other agreement categories, same language
  std::optional<double> non_agreement;            // vs non-agreement phenomena, same language
  std::optional<double> reference_agreement;      // vs reference agreement phenomena
  std::optional<double> reference_non_agreement;  // vs reference non-agreement phenomena
};

struct LabeledSets {
  std::vector<UnitSet> sets;
  std::map<std::string, std::string> categories;  // uid -> category
  std::set<std::string> agreement;                // agreement category names
};

/// Five-bar comparison for each agreement category of `native`.
std::vector<AgreementBars> cross_language_agreement_report(const LabeledSets& native,
                                                           const LabeledSets& reference);

}  // namespace synloc
