#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "synloc/digest.hpp"
#include "synloc/error.hpp"
#include "synloc/store.hpp"

using namespace synloc;
using namespace synloc::testing;
namespace fs = std::filesystem;

namespace {

UnitSet sample_set() {
  UnitSet s;
  s.provenance = {"model-hash-0123456789abcdef", "bench-hash-0123456789abcdef", "transitive", "en", "1/2",
                  SiteSet::parse("attn_out,mlp_out"), 4, 8, "exclude"};
  s.units = {{{Site::attn_out, 3, 7}, 12.5}, {{Site::mlp_out, 0, 2}, 0.1 + 0.2}, {{Site::attn_out, 0, 0}, -1e-300}};
  s.k = 3;
  s.fraction = 0.05;
  s.total_units = 64;
  s.defined_units = 63;
  return s;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

}  // namespace

TEST_CASE("unit set round trip") {
  const UnitSet s = sample_set();
  const fs::path dir = scratch_dir("unitset");
  write_unit_set(dir / "a.json", s);
  std::vector<std::string> warnings;
  CHECK(read_unit_set(dir / "a.json", &warnings) == s);
  CHECK(warnings.empty());
  // With a run id the content is still the same set.
  CHECK(unit_set_from_json(unit_set_to_json(s, "abc")) == s);
  CHECK(unit_set_to_json(s) == unit_set_to_json(s));
}

TEST_CASE("truncated or edited unit sets are rejected") {
  const std::string text = unit_set_to_json(sample_set());
  CHECK_THROWS_AS(unit_set_from_json(text.substr(0, text.size() / 2)), DataError);
  std::string edited = text;
  edited.replace(edited.find("12.5"), 4, "13.5");
  CHECK_THROWS_WITH_AS(unit_set_from_json(edited), doctest::Contains("digest"), DataError);
}

TEST_CASE("unknown fields are accepted with a warning, other versions are not") {
  auto j = nlohmann::ordered_json::parse(unit_set_to_json(sample_set()));
  j.erase("digest");
  j["x_extension"] = {{"note", "written by a newer v1 writer"}};
  j["digest"] = sha256_hex([&] {
    auto body = j;
    body.erase("digest");
    return body.dump();
  }());
  std::vector<std::string> warnings;
  CHECK(unit_set_from_json(j.dump(), &warnings) == sample_set());
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("x_extension") != std::string::npos);

  j.erase("digest");
  j["version"] = 2;
  j["digest"] = sha256_hex(j.dump());
  CHECK_THROWS_WITH_AS(unit_set_from_json(j.dump()), doctest::Contains("version"), DataError);
}

TEST_CASE("activation cache round trip, misses and collisions") {
  const fs::path root = scratch_dir("cache");
  ActivationCache cache(root);
  const std::vector<MinimalPair> pairs{{"a b", "a c", "0"}, {"d e", "d f", "1"}};
  ActivationPair act;
  act.layout = {SiteSet{Site::residual}, 2, 3};
  act.good = Matrix(2, 6);
  act.bad = Matrix(2, 6);
  for (std::size_t i = 0; i < 12; ++i) {
    act.good.values[i] = static_cast<float>(i) / 3.0f;
    act.bad.values[i] = -static_cast<float>(i) * 1e-30f;
  }
  const CacheKey key{"m1", "b1", "p", "all", SiteSet{Site::residual}};
  CHECK_FALSE(cache.load(key, pairs).has_value());
  cache.store(key, pairs, act);
  const auto hit = cache.load(key, pairs);
  REQUIRE(hit.has_value());
  CHECK(hit->good == act.good);
  CHECK(hit->bad == act.bad);
  CHECK(hit->layout == act.layout);
  CHECK(cache.hits() == 1);
  CHECK(cache.misses() == 1);

  CacheKey other_model = key;
  other_model.model_hash = "m2";
  CHECK_FALSE(cache.load(other_model, pairs).has_value());

  // Same key, different sentences.
  auto changed = pairs;
  changed[1].sentence_bad = "d g";
  CHECK_THROWS_AS(cache.load(key, changed), DataError);

  // A file for one key found under another key's path.
  CacheKey other_fold = key;
  other_fold.fold = "0/2";
  fs::create_directories(cache.path_for(other_fold).parent_path());
  fs::copy_file(cache.path_for(key), cache.path_for(other_fold));
  CHECK_THROWS_WITH_AS(cache.load(other_fold, pairs), doctest::Contains("collision"), DataError);

  // Truncated entry.
  const std::string bytes = read_file(cache.path_for(key));
  write_text(cache.path_for(key), bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(cache.load(key, pairs), DataError);
}

TEST_CASE("run manifests, commit and verify") {
  const fs::path out = scratch_dir("runs");
  RunManifest m;
  m.command = "localize";
  m.arguments = {"localize", "--fraction", "0.01"};
  m.config["fraction"] = 0.01;
  m.config["a_field_after"] = "x";
  m.model_hash = "mh";
  m.benchmark_hashes = {{"b", "bh"}};
  m.fraction = 0.01;
  m.sites = "residual";
  m.seeds = {0, 1};
  const std::string id = m.run_id();
  CHECK(id.size() == 16);

  RunManifest changed = m;
  changed.fraction = 0.05;
  CHECK(changed.run_id() != id);
  changed = m;
  changed.outputs["x"] = "y";
  CHECK(changed.run_id() == id);

  fs::path dir;
  {
    RunWriter w(out, m);
    w.add("table.csv", csv_run_header(w.run_id()) + "a,b\n1,2\n");
    w.add("sub/report.json", "{\"run_id\": \"" + w.run_id() + "\", \"x\": 1}\n");
    dir = w.commit();
  }
  CHECK(dir == out / "runs" / id);
  const RunManifest back = RunManifest::from_json(nlohmann::ordered_json::parse(read_file(dir / "manifest.json")));
  CHECK(back.run_id() == id);
  CHECK(back.outputs.size() == 2);
  VerifyReport r = verify_run(dir);
  CHECK(r.ok);
  CHECK(r.files_checked == 2);

  write_text(dir / "orphan.csv", "x\n");
  r = verify_run(dir);
  CHECK_FALSE(r.ok);
  fs::remove(dir / "orphan.csv");

  write_text(dir / "table.csv", csv_run_header(id) + "a,b\n1,3\n");
  r = verify_run(dir);
  CHECK_FALSE(r.ok);
}

TEST_CASE("an abandoned run publishes nothing and keeps earlier results") {
  const fs::path out = scratch_dir("abandon");
  RunManifest m;
  m.command = "overlap";
  {
    RunWriter w(out, m);
    w.add("a.csv", csv_run_header(w.run_id()) + "1\n");
    w.commit();
  }
  const std::string before = read_file(out / "runs" / m.run_id() / "a.csv");
  {
    RunWriter w(out, m);
    w.add("a.csv", csv_run_header(w.run_id()) + "2\n");
    // Destroyed without commit, as when a command throws.
  }
  CHECK(read_file(out / "runs" / m.run_id() / "a.csv") == before);
  for (const auto& e : fs::directory_iterator(out / "runs")) {
    CHECK(e.path().filename().string().rfind(".staging", 0) != 0);
  }
}
