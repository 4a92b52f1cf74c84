#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace synloc::cli {

/// Everything a command needs. Precedence: flags > config file > defaults.
struct ExperimentConfig {
  std::string model;
  std::string tokenizer;
  std::vector<std::string> benchmarks;
  std::string reference;  // crosslingual: reference benchmark (e.g. English)
  std::string features;
  std::string distances;
  std::string lexicon;
  std::string annotations;
  std::vector<std::string> phenomena;  // optional filter by uid
  std::vector<std::string> agreement_categories;
  double fraction = 0.01;
  int folds = 2;
  std::string sites = "residual";
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
  std::string mode = "zero";  // zero | mean | both
  std::string score = "sum";
  std::string ablate_at = "all-positions";
  std::optional<std::uint64_t> split_seed;
  std::uint64_t control_seed = 0;
  std::size_t lex_per_phenomenon = 15;
  std::string out = "synloc-out";
  std::size_t threads = 0;  // 0 = available parallelism
  std::string cache;        // empty: $SYNLOC_CACHE_DIR or no cache; "off" disables
};

/// Entry point shared by the executable and the tests; returns the exit code.
int run(const std::vector<std::string>& args);

}  // namespace synloc::cli
