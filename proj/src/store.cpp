#include "synloc/store.hpp"

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "synloc/digest.hpp"
#include "synloc/error.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace synloc {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Unit sets
// ---------------------------------------------------------------------------

namespace {

ojson provenance_json(const Provenance& p) {
  ojson j;
  j["model_hash"] = p.model_hash;
  j["benchmark_hash"] = p.benchmark_hash;
  j["phenomenon"] = p.phenomenon_uid;
  j["language"] = p.language;
  j["fold"] = p.fold;
  j["sites"] = p.sites.to_string();
  j["n_layers"] = p.n_layers;
  j["hidden"] = p.hidden;
  j["zero_variance_policy"] = p.zero_variance_policy;
  return j;
}

const std::set<std::string> kUnitSetFields = {"schema",  "version",       "run_id", "provenance", "k",
                                              "fraction", "total_units", "defined_units", "units", "digest"};
const std::set<std::string> kProvenanceFields = {"model_hash", "benchmark_hash", "phenomenon", "language", "fold",
                                                 "sites",      "n_layers",       "hidden",     "zero_variance_policy"};

}  // namespace

std::string unit_set_to_json(const UnitSet& set, const std::string& run_id) {
  ojson j;
  j["schema"] = "synloc-unit-set";
  j["version"] = kUnitSetVersion;
  if (!run_id.empty()) j["run_id"] = run_id;
  j["provenance"] = provenance_json(set.provenance);
  j["k"] = set.k;
  j["fraction"] = set.fraction;
  j["total_units"] = set.total_units;
  j["defined_units"] = set.defined_units;
  ojson units = ojson::array();
  for (const auto& u : set.units) {
    ojson e;
    e["site"] = to_string(u.unit.site);
    e["layer"] = u.unit.layer;
    e["channel"] = u.unit.channel;
    e["t"] = u.t;
    units.push_back(std::move(e));
  }
  j["units"] = std::move(units);
  j["digest"] = sha256_hex(j.dump());
  return j.dump(1) + "\n";
}

UnitSet unit_set_from_json(const std::string& text, std::vector<std::string>* warnings) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw DataError("unit set file is truncated or corrupt (digest check impossible)");
  }
  if (!j.is_object() || !j.contains("digest")) throw DataError("unit set file has no digest");
  const std::string digest = j["digest"].get<std::string>();
  ojson body = j;
  body.erase("digest");
  if (sha256_hex(body.dump()) != digest) throw DataError("unit set digest mismatch");
  if (j.value("schema", std::string()) != "synloc-unit-set") throw DataError("not a unit set file");
  const int version = j.value("version", -1);
  if (version != kUnitSetVersion) {
    throw DataError("unit set version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kUnitSetVersion) + ")");
  }
  auto warn = [&](const std::string& msg) {
    if (warnings != nullptr) warnings->push_back(msg);
  };
  for (const auto& [key, _] : j.items()) {
    if (!kUnitSetFields.contains(key)) warn("ignoring unknown unit set field '" + key + "'");
  }
  UnitSet s;
  try {
    const auto& p = j.at("provenance");
    for (const auto& [key, _] : p.items()) {
      if (!kProvenanceFields.contains(key)) warn("ignoring unknown provenance field '" + key + "'");
    }
    s.provenance.model_hash = p.at("model_hash").get<std::string>();
    s.provenance.benchmark_hash = p.at("benchmark_hash").get<std::string>();
    s.provenance.phenomenon_uid = p.at("phenomenon").get<std::string>();
    s.provenance.language = p.at("language").get<std::string>();
    s.provenance.fold = p.at("fold").get<std::string>();
    s.provenance.sites = SiteSet::parse(p.at("sites").get<std::string>());
    s.provenance.n_layers = p.at("n_layers").get<int>();
    s.provenance.hidden = p.at("hidden").get<int>();
    s.provenance.zero_variance_policy = p.at("zero_variance_policy").get<std::string>();
    s.k = j.at("k").get<std::size_t>();
    s.fraction = j.at("fraction").get<double>();
    s.total_units = j.at("total_units").get<std::size_t>();
    s.defined_units = j.at("defined_units").get<std::size_t>();
    const UnitLayout layout = s.provenance.layout();
    for (const auto& e : j.at("units")) {
      for (const auto& [key, _] : e.items()) {
        if (key != "site" && key != "layer" && key != "channel" && key != "t") {
          warn("ignoring unknown unit field '" + key + "'");
        }
      }
      ScoredUnit u{{parse_site(e.at("site").get<std::string>()), e.at("layer").get<int>(),
                    e.at("channel").get<int>()},
                   e.at("t").get<double>()};
      if (!layout.valid(u.unit)) throw DataError("unit set lists a unit outside its layout");
      s.units.push_back(u);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed unit set: ") + e.what());
  }
  if (s.units.size() != s.k) throw DataError("unit set k does not match its unit count");
  return s;
}

void write_unit_set(const fs::path& path, const UnitSet& set) { write_file_atomic(path, unit_set_to_json(set)); }

UnitSet read_unit_set(const fs::path& path, std::vector<std::string>* warnings) {
  try {
    return unit_set_from_json(read_file(path), warnings);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Activation cache
// ---------------------------------------------------------------------------

namespace {

constexpr char kCacheMagic[8] = {'S', 'Y', 'N', 'L', 'A', 'C', 'T', '1'};

ojson key_json(const CacheKey& k) {
  ojson j;
  j["model_hash"] = k.model_hash;
  j["benchmark_hash"] = k.benchmark_hash;
  j["phenomenon"] = k.phenomenon_uid;
  j["fold"] = k.fold;
  j["sites"] = k.sites.to_string();
  return j;
}

std::string floats_digest(const Matrix& a, const Matrix& b) {
  Sha256 h;
  h.update(std::string_view(reinterpret_cast<const char*>(a.values.data()), a.values.size() * sizeof(float)));
  h.update(std::string_view(reinterpret_cast<const char*>(b.values.data()), b.values.size() * sizeof(float)));
  return h.hex();
}

}  // namespace

std::string CacheKey::digest() const { return sha256_hex(key_json(*this).dump()); }

std::string pairs_digest(const std::vector<MinimalPair>& pairs) {
  Sha256 h;
  for (const auto& p : pairs) {
    h.update(p.sentence_good);
    h.update(std::string_view("\0", 1));
    h.update(p.sentence_bad);
    h.update(std::string_view("\n", 1));
  }
  return h.hex();
}

ActivationCache::ActivationCache(fs::path root) : root_(std::move(root)) {}

fs::path ActivationCache::path_for(const CacheKey& key) const {
  return root_ / key.model_hash.substr(0, 16) / key.benchmark_hash.substr(0, 16) /
         (key.digest().substr(0, 32) + ".act");
}

std::optional<ActivationPair> ActivationCache::load(const CacheKey& key, const std::vector<MinimalPair>& pairs) {
  const fs::path path = path_for(key);
  if (!fs::exists(path)) {
    ++misses_;
    return std::nullopt;
  }
  const std::string bytes = read_file(path);
  auto corrupt = [&](const std::string& why) { return DataError("activation cache " + path.string() + ": " + why); };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCacheMagic, 8) != 0) throw corrupt("bad magic");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, 8);
  if (header_len > bytes.size() - 16) throw corrupt("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception&) {
    throw corrupt("unreadable header");
  }
  if (header.at("key") != nlohmann::json(key_json(key))) throw corrupt("key collision with a different key");
  if (header.at("input_digest").get<std::string>() != pairs_digest(pairs)) {
    throw corrupt("cached entry was computed from different sentences under the same key");
  }
  const UnitLayout layout{key.sites, header.at("n_layers").get<int>(), header.at("hidden").get<int>()};
  const std::size_t rows = header.at("rows").get<std::size_t>();
  const std::size_t cols = layout.total();
  const std::size_t body = 2 * rows * cols * sizeof(float);
  if (bytes.size() - 16 - header_len != body) throw corrupt("truncated data");
  ActivationPair out;
  out.layout = layout;
  out.good = Matrix(rows, cols);
  out.bad = Matrix(rows, cols);
  const char* data = bytes.data() + 16 + header_len;
  std::memcpy(out.good.values.data(), data, body / 2);
  std::memcpy(out.bad.values.data(), data + body / 2, body / 2);
  if (floats_digest(out.good, out.bad) != header.at("data_digest").get<std::string>()) {
    throw corrupt("data digest mismatch");
  }
  ++hits_;
  return out;
}

void ActivationCache::store(const CacheKey& key, const std::vector<MinimalPair>& pairs, const ActivationPair& act) {
  ojson header;
  header["key"] = key_json(key);
  header["n_layers"] = act.layout.n_layers;
  header["hidden"] = act.layout.hidden;
  header["unit_order"] = "site,layer,channel";
  header["rows"] = act.good.rows;
  header["input_digest"] = pairs_digest(pairs);
  header["data_digest"] = floats_digest(act.good, act.bad);
  const std::string h = header.dump();
  std::string bytes(kCacheMagic, 8);
  const std::uint64_t len = h.size();
  bytes.append(reinterpret_cast<const char*>(&len), 8);
  bytes += h;
  bytes.append(reinterpret_cast<const char*>(act.good.values.data()), act.good.values.size() * sizeof(float));
  bytes.append(reinterpret_cast<const char*>(act.bad.values.data()), act.bad.values.size() * sizeof(float));
  write_file_atomic(path_for(key), bytes);
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

namespace {

ojson manifest_inputs(const RunManifest& m) {
  ojson j;
  j["schema"] = "synloc-run-manifest";
  j["version"] = kManifestVersion;
  j["toolkit_version"] = m.toolkit_version;
  j["command"] = m.command;
  j["arguments"] = m.arguments;
  j["config"] = m.config;
  j["model_hash"] = m.model_hash;
  ojson b = ojson::object();
  for (const auto& [name, hash] : m.benchmark_hashes) b[name] = hash;
  j["benchmark_hashes"] = std::move(b);
  j["fraction"] = m.fraction;
  j["sites"] = m.sites;
  j["seeds"] = m.seeds;
  return j;
}

}  // namespace

std::string RunManifest::run_id() const { return sha256_hex(manifest_inputs(*this).dump()).substr(0, 16); }

ojson RunManifest::to_json() const {
  ojson j = manifest_inputs(*this);
  j["run_id"] = run_id();
  ojson o = ojson::object();
  for (const auto& [path, digest] : outputs) o[path] = digest;
  j["outputs"] = std::move(o);
  return j;
}

RunManifest RunManifest::from_json(const ojson& j) {
  RunManifest m;
  try {
    if (j.at("schema").get<std::string>() != "synloc-run-manifest") throw DataError("not a run manifest");
    if (j.at("version").get<int>() != kManifestVersion) throw DataError("unsupported manifest version");
    m.toolkit_version = j.at("toolkit_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.arguments = j.at("arguments").get<std::vector<std::string>>();
    m.config = j.at("config");
    m.model_hash = j.at("model_hash").get<std::string>();
    m.benchmark_hashes = j.at("benchmark_hashes").get<std::map<std::string, std::string>>();
    m.fraction = j.at("fraction").get<double>();
    m.sites = j.at("sites").get<std::string>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::string csv_run_header(const std::string& run_id) { return "# run_id: " + run_id + "\n"; }

RunWriter::RunWriter(fs::path out_dir, RunManifest manifest)
    : out_dir_(std::move(out_dir)), manifest_(std::move(manifest)), run_id_(manifest_.run_id()) {
  staging_ = out_dir_ / "runs" / (".staging-" + run_id_ + "-" + std::to_string(::getpid()));
  fs::remove_all(staging_);
  fs::create_directories(staging_);
}

RunWriter::~RunWriter() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void RunWriter::add(const std::string& relative, const std::string& bytes) {
  const fs::path rel(relative);
  if (rel.is_absolute() || relative.find("..") != std::string::npos || relative == "manifest.json") {
    throw ConfigError("invalid report path '" + relative + "'");
  }
  const fs::path dst = staging_ / rel;
  fs::create_directories(dst.parent_path());
  std::ofstream out(dst, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + dst.string());
  manifest_.outputs[rel.generic_string()] = sha256_hex(bytes);
}

fs::path RunWriter::commit() {
  {
    const std::string text = manifest_.to_json().dump(2) + "\n";
    std::ofstream out(staging_ / "manifest.json", std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw DataError("cannot write manifest");
  }
  const fs::path final_dir = out_dir_ / "runs" / run_id_;
  if (fs::exists(final_dir)) {
    // Same run id means same inputs; swap the old copy out only after the
    // new one is complete.
    const fs::path old = out_dir_ / "runs" / (".old-" + run_id_ + "-" + std::to_string(::getpid()));
    fs::remove_all(old);
    fs::rename(final_dir, old);
    fs::rename(staging_, final_dir);
    fs::remove_all(old);
  } else {
    fs::rename(staging_, final_dir);
  }
  committed_ = true;
  return final_dir;
}

VerifyReport verify_run(const fs::path& run_dir) {
  VerifyReport r;
  auto fail = [&](const std::string& msg) {
    r.ok = false;
    r.problems.push_back(msg);
  };
  const fs::path manifest_path = run_dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    fail("no manifest.json in " + run_dir.string());
    return r;
  }
  RunManifest m;
  try {
    m = RunManifest::from_json(ojson::parse(read_file(manifest_path)));
  } catch (const std::exception& e) {
    fail(e.what());
    return r;
  }
  r.run_id = m.run_id();
  const auto stored = nlohmann::json::parse(read_file(manifest_path)).value("run_id", std::string());
  if (stored != r.run_id) fail("manifest run_id " + stored + " does not match its contents (" + r.run_id + ")");
  if (run_dir.filename() != r.run_id) fail("run directory name does not match run id " + r.run_id);

  std::set<std::string> listed;
  for (const auto& [rel, digest] : m.outputs) {
    listed.insert(rel);
    const fs::path p = run_dir / rel;
    if (!fs::exists(p)) {
      fail("missing output " + rel);
      continue;
    }
    const std::string bytes = read_file(p);
    ++r.files_checked;
    if (sha256_hex(bytes) != digest) fail("digest mismatch for " + rel);
    std::string embedded;
    if (p.extension() == ".json") {
      try {
        embedded = nlohmann::json::parse(bytes).value("run_id", std::string());
      } catch (const nlohmann::json::exception&) {
        fail("unreadable report " + rel);
        continue;
      }
    } else if (p.extension() == ".csv") {
      const std::string prefix = "# run_id: ";
      if (bytes.rfind(prefix, 0) == 0) embedded = bytes.substr(prefix.size(), bytes.find('\n') - prefix.size());
    } else {
      continue;
    }
    if (embedded != r.run_id) fail("report " + rel + " does not embed run id " + r.run_id);
  }
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), run_dir).generic_string();
    if (rel == "manifest.json") continue;
    if (!listed.contains(rel)) fail("orphan output " + rel + " is not listed in the manifest");
  }
  return r;
}

}  // namespace synloc
