#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synloc/engine.hpp"
#include "synloc/localizer.hpp"

namespace synloc {

inline constexpr const char* kToolkitVersion = "1.0.0";
inline constexpr int kUnitSetVersion = 1;
inline constexpr int kManifestVersion = 1;

// ---------------------------------------------------------------------------
// Unit sets
// ---------------------------------------------------------------------------

/// JSON form with fixed field order. `digest` is the SHA-256 of the object
/// serialized without the digest field. A non-empty `run_id` is embedded.
std::string unit_set_to_json(const UnitSet& set, const std::string& run_id = "");
UnitSet unit_set_from_json(const std::string& text, std::vector<std::string>* warnings = nullptr);

void write_unit_set(const std::filesystem::path& path, const UnitSet& set);
/// Unknown fields are accepted and reported through `warnings`.
UnitSet read_unit_set(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Activation cache
// ---------------------------------------------------------------------------

struct CacheKey {
  std::string model_hash;
  std::string benchmark_hash;
  std::string phenomenon_uid;
  std::string fold;
  SiteSet sites;

  std::string digest() const;
};

/// Binary activation store under `<root>/<model>/<bench>/<key>.act`.
///
/// File layout: 8-byte magic "SYNLACT1", u64 little-endian header length,
/// JSON header (key, layout, rows, input digest, data digest), then the good
/// and bad matrices as row-major little-endian f32.
class ActivationCache {
 public:
  explicit ActivationCache(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_for(const CacheKey& key) const;

  /// Cached activations for `key`, or nullopt on a miss. A file stored under
  /// the same key for different sentences is a hard error.
  std::optional<ActivationPair> load(const CacheKey& key, const std::vector<MinimalPair>& pairs);
  void store(const CacheKey& key, const std::vector<MinimalPair>& pairs, const ActivationPair& act);

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::filesystem::path root_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Digest of the sentences a cache entry was computed from.
std::string pairs_digest(const std::vector<MinimalPair>& pairs);

/// Writes `bytes` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;  // normalized: output-neutral flags removed
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::string model_hash;
  std::map<std::string, std::string> benchmark_hashes;
  double fraction = 0.0;
  std::string sites;
  std::vector<std::uint64_t> seeds;
  std::string toolkit_version = kToolkitVersion;
  std::map<std::string, std::string> outputs;  // relative path -> sha256

  /// Digest over everything except `outputs`; names the run directory and
  /// is embedded in every report.
  std::string run_id() const;
  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::ordered_json& j);
};

/// Collects the files of one run in a staging directory and publishes them
/// as `<out>/runs/<run_id>/` in one rename. Nothing is published if commit()
/// is never reached, so a failed run leaves earlier results untouched.
class RunWriter {
 public:
  RunWriter(std::filesystem::path out_dir, RunManifest manifest);
  ~RunWriter();
  RunWriter(const RunWriter&) = delete;
  RunWriter& operator=(const RunWriter&) = delete;

  const std::string& run_id() const { return run_id_; }
  /// Adds a report file (relative path inside the run directory).
  void add(const std::string& relative, const std::string& bytes);
  /// Writes manifest.json, swaps the staging directory into place and
  /// returns the final run directory.
  std::filesystem::path commit();

 private:
  std::filesystem::path out_dir_;
  RunManifest manifest_;
  std::string run_id_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

struct VerifyReport {
  bool ok = true;
  std::string run_id;
  std::size_t files_checked = 0;
  std::vector<std::string> problems;
};

/// First line of every CSV report.
std::string csv_run_header(const std::string& run_id);

/// Checks manifest digests, the run id, embedded run ids in reports and
/// that no unlisted file sits in the run directory.
VerifyReport verify_run(const std::filesystem::path& run_dir);

}  // namespace synloc
