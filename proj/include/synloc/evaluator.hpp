#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "synloc/corpus.hpp"
#include "synloc/engine.hpp"
#include "synloc/localizer.hpp"

namespace synloc {

struct AccuracyReport {
  double accuracy = 0.0;  // wins / n_pairs; ties count as losses
  std::size_t n_pairs = 0;
  std::size_t wins = 0;
  std::size_t ties = 0;
  std::string ablation;  // AblationSpec::summary()
};

/// Per-pair log probabilities of good and bad sentences.
struct PairScores {
  std::vector<double> good;
  std::vector<double> bad;
};

PairScores score_pairs(const LanguageModel& model, const std::vector<MinimalPair>& pairs,
                       const AblationSpec& ablation, std::size_t threads);
AccuracyReport accuracy_from(const PairScores& scores, const AblationSpec& ablation);
AccuracyReport accuracy(const LanguageModel& model, const std::vector<MinimalPair>& pairs,
                        const AblationSpec& ablation, std::size_t threads);

/// Mean of the raw final-token residual values over sentences, layers and
/// channels.
double mean_ablation_value(const LanguageModel& model, const std::vector<std::string>& sentences,
                           std::size_t threads);

struct AblationOptions {
  double fraction = 0.01;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
  AblationMode mode = AblationMode::zero;
  AblationApplication application = AblationApplication::all_positions;
};

struct AblationOutcome {
  std::string phenomenon;
  AblationMode mode = AblationMode::zero;
  std::size_t k = 0;
  double mean_value = 0.0;  // m, for mean ablation
  double baseline_accuracy = 0.0;
  double top_accuracy = 0.0;
  double top_drop = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> random_accuracies;
  std::vector<double> random_drops;
  std::size_t heldout_pairs = 0;
  std::size_t top_ties = 0;
  std::optional<UnitSet> top_units;  // absent when k = 0

  double mean_random_drop() const;
};

/// Localizes on the first half of `p`, then scores the held-out half
/// unablated, with the top units ablated and with random k-subsets of the
/// same unit universe ablated (one per seed).
AblationOutcome ablation_experiment(const Localizer& localizer, const std::string& benchmark_hash,
                                    const Phenomenon& p, const AblationOptions& options);

/// Random k-subset of the layout's units, sorted in unit order.
std::vector<UnitId> random_units(const UnitLayout& layout, std::size_t k, std::uint64_t seed,
                                 const std::string& salt);

/// Pearson correlation; throws NumericError for constant input and
/// ConfigError for mismatched or too short vectors.
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

struct ScatterPoint {
  std::string phenomenon;
  double consistency_pct = 0.0;
  double drop = 0.0;
};

struct CorrelationReport {
  double r = 0.0;
  std::size_t n = 0;
  std::vector<ScatterPoint> points;
};

CorrelationReport consistency_vs_ablation(const std::vector<ScatterPoint>& points);
double ablation_correlation(const std::vector<double>& zero_drops, const std::vector<double>& mean_drops);

}  // namespace synloc
