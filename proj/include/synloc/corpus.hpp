#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace synloc {

struct MinimalPair {
  std::string sentence_good;
  std::string sentence_bad;
  std::string pair_id;

  bool operator==(const MinimalPair&) const = default;
};

struct Phenomenon {
  std::string uid;
  std::string category;
  std::string language;
  std::vector<MinimalPair> pairs;  // file order; fold splits depend on it
};

struct Benchmark {
  std::string name;
  std::string schema;  // declared schema id shared by every phenomenon
  std::vector<Phenomenon> phenomena;
  std::string source_path;
  std::string content_hash;  // sha256 over the ingested bytes

  const Phenomenon& phenomenon(const std::string& uid) const;
  const Phenomenon* find(const std::string& uid) const;
  /// uid -> category, for every phenomenon.
  std::map<std::string, std::string> categories() const;
  std::size_t pair_count() const;
};

enum class PartOfSpeech { noun, verb };

const char* to_string(PartOfSpeech pos);
PartOfSpeech parse_part_of_speech(const std::string& s);

struct LexiconEntry {
  std::string lemma;
  PartOfSpeech pos = PartOfSpeech::noun;
  double zipf = 0.0;
  int length = 0;  // characters (code points) in lemma
};

/// First-noun / first-verb span of a grammatical sentence. Offsets count
/// Unicode code points, end exclusive.
struct SpanAnnotation {
  std::string pair_id;
  std::size_t span_start = 0;
  std::size_t span_end = 0;
  PartOfSpeech pos = PartOfSpeech::noun;
  double zipf = 0.0;
  int length = 0;
};

inline constexpr const char* kBlimpSchema = "blimp-jsonl";

struct LoadOptions {
  std::string schema = kBlimpSchema;
  /// Sidecar category map (JSON or TOML). When empty, `categories.json` or
  /// `categories.toml` next to the data is used if present, then the
  /// per-record `linguistics_term` field.
  std::optional<std::filesystem::path> category_map;
  bool require_categories = true;
  /// Used when neither records nor the category map name a language.
  std::string language = "en";
  std::string name;  // defaults to the file or directory stem
};

/// Loads a BLiMP-layout benchmark: a JSONL file or a directory of *.jsonl
/// files (read in filename order). Each record needs `sentence_good`,
/// `sentence_bad` and `UID`; `pairID` is optional.
Benchmark load_benchmark(const std::filesystem::path& path, const LoadOptions& options = {});

struct FoldSplit {
  std::vector<Phenomenon> folds;
  std::size_t dropped = 0;  // remainder pairs not assigned to any fold
};

/// Splits into `fold_count` equal blocks. Without a seed the blocks are
/// contiguous in file order; with a seed the pairs are shuffled first.
FoldSplit split_folds(const Phenomenon& p, std::size_t fold_count,
                      std::optional<std::uint64_t> seed = std::nullopt);

/// Pseudo-phenomena built from grammatical sentences only, paired at random
/// with arbitrary condition labels. uid gets a "_control" suffix.
Benchmark make_blimp_control(const Benchmark& b, std::uint64_t seed);

struct LexControl {
  Benchmark benchmark;  // a single pseudo-phenomenon
  std::size_t skipped = 0;
};

struct LexOptions {
  PartOfSpeech pos = PartOfSpeech::noun;
  std::size_t per_phenomenon = 15;
  std::uint64_t seed = 0;
  double zipf_tolerance = 1.0;
  int length_tolerance = 3;
};

/// Frequency/length matched lexical substitutions on the first noun or verb
/// of sampled grammatical sentences, pooled across phenomena and reshuffled.
LexControl make_blimp_lex(const Benchmark& b, const std::vector<LexiconEntry>& lexicon,
                          const std::vector<SpanAnnotation>& annotations,
                          const LexOptions& options);

/// TSV with header `lemma pos zipf length`.
std::vector<LexiconEntry> load_lexicon(const std::filesystem::path& path);

/// JSONL with `pair_id, span_start, span_end, pos, zipf, length`.
std::vector<SpanAnnotation> load_annotations(const std::filesystem::path& path);

/// Number of Unicode code points in a UTF-8 string (invalid bytes count 1).
std::size_t utf8_length(const std::string& s);

}  // namespace synloc
