#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace synloc {

/// Byte-level BPE in the GPT-2 layout: `vocab.json` (token -> id) and
/// `merges.txt` (one merge per line, rank = line order).
///
/// Text is split with the GPT-2 pre-tokenization rule (contractions, runs of
/// letters, digits, other symbols, whitespace), each piece is mapped byte-wise
/// onto printable code points and merged greedily by ascending merge rank.
/// Every byte has a base token, so encode/decode round-trips any input.
class BpeTokenizer {
 public:
  static BpeTokenizer load(const std::filesystem::path& vocab_json,
                           const std::filesystem::path& merges_txt);
  /// Loads `vocab.json` and `merges.txt` from a directory.
  static BpeTokenizer load_dir(const std::filesystem::path& dir);

  /// Builds from in-memory tables; merges are (left, right) in rank order.
  BpeTokenizer(std::unordered_map<std::string, int> vocab,
               std::vector<std::pair<std::string, std::string>> merges);

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  std::optional<int> token_id(const std::string& token) const;
  std::size_t vocab_size() const { return id_to_token_.size(); }
  /// Digest of vocab + merges, for provenance.
  const std::string& hash() const { return hash_; }

  /// Splits text into pre-tokenization pieces (exposed for tests).
  static std::vector<std::string> pretokenize(std::string_view text);

 private:
  void bpe(const std::string& piece, std::vector<int>& out) const;

  std::unordered_map<std::string, int> vocab_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> merge_rank_;  // "left right" -> rank
  std::string hash_;
};

}  // namespace synloc
