#include "synloc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>
#include <toml.hpp>

#include "synloc/digest.hpp"
#include "synloc/error.hpp"
#include "synloc/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace synloc {

const Phenomenon* Benchmark::find(const std::string& uid) const {
  for (const auto& p : phenomena) {
    if (p.uid == uid) return &p;
  }
  return nullptr;
}

const Phenomenon& Benchmark::phenomenon(const std::string& uid) const {
  if (const auto* p = find(uid)) return *p;
  throw DataError("benchmark " + name + " has no phenomenon " + uid);
}

std::map<std::string, std::string> Benchmark::categories() const {
  std::map<std::string, std::string> out;
  for (const auto& p : phenomena) out[p.uid] = p.category;
  return out;
}

std::size_t Benchmark::pair_count() const {
  std::size_t n = 0;
  for (const auto& p : phenomena) n += p.pairs.size();
  return n;
}

const char* to_string(PartOfSpeech pos) { return pos == PartOfSpeech::noun ? "noun" : "verb"; }

PartOfSpeech parse_part_of_speech(const std::string& s) {
  if (s == "noun") return PartOfSpeech::noun;
  if (s == "verb") return PartOfSpeech::verb;
  throw DataError("unknown part of speech '" + s + "' (expected noun or verb)");
}

std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

namespace {

struct CategoryMap {
  std::map<std::string, std::string> categories;
  std::optional<std::string> language;
};

CategoryMap read_category_map(const fs::path& path) {
  CategoryMap out;
  if (path.extension() == ".toml") {
    toml::table tbl;
    try {
      tbl = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
      throw DataError("category map " + path.string() + ": " + std::string(e.description()));
    }
    const toml::table* cats = tbl["categories"].as_table();
    if (cats == nullptr) cats = &tbl;
    for (const auto& [key, value] : *cats) {
      if (auto s = value.value<std::string>()) out.categories[std::string(key.str())] = *s;
    }
    if (auto lang = tbl["language"].value<std::string>()) out.language = *lang;
    return out;
  }
  std::ifstream in(path);
  if (!in) throw DataError("cannot open category map " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("category map " + path.string() + ": " + e.what());
  }
  const json* cats = doc.contains("categories") && doc["categories"].is_object() ? &doc["categories"] : &doc;
  for (const auto& [key, value] : cats->items()) {
    if (value.is_string()) out.categories[key] = value.get<std::string>();
  }
  if (doc.contains("language") && doc["language"].is_string()) out.language = doc["language"].get<std::string>();
  return out;
}

std::string required_string(const json& rec, const char* field, const std::string& where) {
  auto it = rec.find(field);
  if (it == rec.end()) throw DataError(where + ": missing field '" + field + "'");
  if (!it->is_string()) throw DataError(where + ": field '" + field + "' is not a string");
  return it->get<std::string>();
}

std::string optional_id(const json& rec, const char* field) {
  auto it = rec.find(field);
  if (it == rec.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  return it->dump();
}

}  // namespace

Benchmark load_benchmark(const fs::path& path, const LoadOptions& options) {
  if (options.schema != kBlimpSchema) {
    throw ConfigError("unsupported benchmark schema '" + options.schema + "'");
  }
  if (!fs::exists(path)) throw DataError("benchmark path does not exist: " + path.string());

  std::vector<fs::path> files;
  fs::path dir;
  if (fs::is_directory(path)) {
    dir = path;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    dir = path.parent_path();
    files.push_back(path);
  }
  if (files.empty()) throw DataError(path.string() + ": no records");

  CategoryMap sidecar;
  std::optional<fs::path> map_path = options.category_map;
  if (!map_path) {
    for (const char* candidate : {"categories.json", "categories.toml"}) {
      if (fs::exists(dir / candidate)) {
        map_path = dir / candidate;
        break;
      }
    }
  }
  if (map_path) sidecar = read_category_map(*map_path);

  Benchmark b;
  b.schema = options.schema;
  b.source_path = path.string();
  b.name = options.name.empty() ? path.stem().string() : options.name;

  Sha256 hash;
  hash.update(options.schema);
  if (map_path) {
    std::ifstream map_in(*map_path, std::ios::binary);
    std::ostringstream bytes;
    bytes << map_in.rdbuf();
    hash.update(bytes.str());
  }
  std::unordered_map<std::string, std::size_t> index;  // uid -> phenomenon slot
  std::unordered_map<std::string, std::string> embedded_category;
  std::unordered_map<std::string, std::string> embedded_language;

  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open " + file.string());
    hash.update(file.filename().string());
    hash.update(std::string_view("\0", 1));
    std::string line;
    std::size_t line_no = 0;
    std::string last_uid;
    while (std::getline(in, line)) {
      ++line_no;
      hash.update(line);
      hash.update("\n");
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      const std::string where = file.string() + ":" + std::to_string(line_no);
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception& e) {
        throw DataError(where + ": malformed record: " + e.what());
      }
      if (!rec.is_object()) throw DataError(where + ": malformed record: not an object");
      MinimalPair pair;
      pair.sentence_good = required_string(rec, "sentence_good", where);
      pair.sentence_bad = required_string(rec, "sentence_bad", where);
      const std::string uid = required_string(rec, "UID", where);
      if (pair.sentence_good.empty() || pair.sentence_bad.empty()) {
        throw DataError(where + ": malformed record: empty sentence");
      }
      if (pair.sentence_good == pair.sentence_bad) {
        throw DataError(where + ": malformed record: grammatical and ungrammatical sentences are identical");
      }

      auto found = index.find(uid);
      if (found == index.end()) {
        index.emplace(uid, b.phenomena.size());
        b.phenomena.push_back(Phenomenon{uid, {}, {}, {}});
        found = index.find(uid);
      } else if (uid != last_uid) {
        throw DataError(where + ": duplicate phenomenon uid '" + uid + "'");
      }
      last_uid = uid;

      auto& ph = b.phenomena[found->second];
      std::string pid = optional_id(rec, "pairID");
      if (pid.empty()) pid = std::to_string(ph.pairs.size());
      pair.pair_id = uid + "/" + pid;
      ph.pairs.push_back(std::move(pair));

      if (auto it = rec.find("linguistics_term"); it != rec.end() && it->is_string()) {
        embedded_category.emplace(uid, it->get<std::string>());
      }
      if (auto it = rec.find("language"); it != rec.end() && it->is_string()) {
        embedded_language.emplace(uid, it->get<std::string>());
      }
    }
  }
  if (b.phenomena.empty()) throw DataError(path.string() + ": no records");

  std::set<std::string> seen_categories;
  for (auto& ph : b.phenomena) {
    if (auto it = sidecar.categories.find(ph.uid); it != sidecar.categories.end()) {
      ph.category = it->second;
    } else if (auto emb = embedded_category.find(ph.uid); emb != embedded_category.end()) {
      ph.category = emb->second;
    } else if (options.require_categories) {
      throw DataError("unknown category for phenomenon '" + ph.uid + "'");
    }
    if (auto lang = embedded_language.find(ph.uid); lang != embedded_language.end()) {
      ph.language = lang->second;
    } else {
      ph.language = sidecar.language.value_or(options.language);
    }
  }
  b.content_hash = hash.hex();
  return b;
}

FoldSplit split_folds(const Phenomenon& p, std::size_t fold_count, std::optional<std::uint64_t> seed) {
  if (fold_count < 2) throw ConfigError("fold count must be at least 2");
  if (fold_count > p.pairs.size()) {
    throw DataError("phenomenon " + p.uid + " has " + std::to_string(p.pairs.size()) +
                    " pairs, fewer than " + std::to_string(fold_count) + " folds");
  }
  std::vector<std::size_t> order(p.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (seed) {
    Rng rng(derive_seed(*seed, p.uid));
    rng.shuffle(order);
  }
  const std::size_t size = p.pairs.size() / fold_count;
  FoldSplit out;
  out.dropped = p.pairs.size() - size * fold_count;
  for (std::size_t f = 0; f < fold_count; ++f) {
    Phenomenon fold{p.uid, p.category, p.language, {}};
    fold.pairs.reserve(size);
    for (std::size_t i = 0; i < size; ++i) fold.pairs.push_back(p.pairs[order[f * size + i]]);
    out.folds.push_back(std::move(fold));
  }
  return out;
}

Benchmark make_blimp_control(const Benchmark& b, std::uint64_t seed) {
  Benchmark out;
  out.name = b.name + "-control";
  out.schema = b.schema;
  out.source_path = b.source_path;
  out.content_hash = sha256_hex(b.content_hash + ":control:" + std::to_string(seed));
  for (const auto& ph : b.phenomena) {
    std::vector<std::string> sentences;
    std::unordered_set<std::string> seen;
    for (const auto& pair : ph.pairs) {
      if (seen.insert(pair.sentence_good).second) sentences.push_back(pair.sentence_good);
    }
    if (sentences.size() < 4) {
      throw DataError("phenomenon " + ph.uid + " is too small for a control (" +
                      std::to_string(sentences.size()) + " distinct grammatical sentences, need 4)");
    }
    Rng rng(derive_seed(seed, ph.uid));
    rng.shuffle(sentences);
    Phenomenon pseudo{ph.uid + "_control", ph.category, ph.language, {}};
    const std::size_t n_pairs = sentences.size() / 2;  // an odd leftover is dropped
    for (std::size_t i = 0; i < n_pairs; ++i) {
      pseudo.pairs.push_back(MinimalPair{sentences[2 * i], sentences[2 * i + 1],
                                         pseudo.uid + "/" + std::to_string(i)});
    }
    out.phenomena.push_back(std::move(pseudo));
  }
  return out;
}

namespace {

// Byte offset of the code point with the given index.
std::size_t byte_offset(const std::string& s, std::size_t code_points) {
  std::size_t cp = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (cp == code_points) return i;
      ++cp;
    }
  }
  if (cp == code_points) return s.size();
  throw DataError("annotation span beyond end of sentence: \"" + s + "\"");
}

std::string lower_ascii(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

LexControl make_blimp_lex(const Benchmark& b, const std::vector<LexiconEntry>& lexicon,
                          const std::vector<SpanAnnotation>& annotations, const LexOptions& options) {
  if (options.per_phenomenon < 1) throw ConfigError("per_phenomenon must be at least 1");
  std::unordered_map<std::string, const SpanAnnotation*> by_pair;
  for (const auto& a : annotations) {
    if (a.pos == options.pos) by_pair.emplace(a.pair_id, &a);
  }
  std::vector<const LexiconEntry*> pool;
  for (const auto& e : lexicon) {
    if (e.pos == options.pos) pool.push_back(&e);
  }

  const std::string pos_name = to_string(options.pos);
  LexControl out;
  std::vector<MinimalPair> pairs;
  for (const auto& ph : b.phenomena) {
    Rng rng(derive_seed(options.seed, ph.uid + ":lex:" + pos_name));
    const std::size_t take = std::min(options.per_phenomenon, ph.pairs.size());
    for (std::size_t idx : rng.sample(ph.pairs.size(), take)) {
      const MinimalPair& src = ph.pairs[idx];
      auto found = by_pair.find(src.pair_id);
      if (found == by_pair.end()) {
        throw DataError("missing " + pos_name + " annotation for pair " + src.pair_id);
      }
      const SpanAnnotation& ann = *found->second;
      if (ann.span_end <= ann.span_start) throw DataError("empty annotation span for pair " + src.pair_id);
      const std::size_t begin = byte_offset(src.sentence_good, ann.span_start);
      const std::size_t end = byte_offset(src.sentence_good, ann.span_end);
      const std::string original = src.sentence_good.substr(begin, end - begin);
      const std::string original_lower = lower_ascii(original);

      std::vector<const LexiconEntry*> eligible;
      for (const auto* e : pool) {
        if (lower_ascii(e->lemma) == original_lower) continue;
        if (std::fabs(e->zipf - ann.zipf) > options.zipf_tolerance) continue;
        if (std::abs(e->length - ann.length) > options.length_tolerance) continue;
        eligible.push_back(e);
      }
      if (eligible.empty()) {
        ++out.skipped;
        continue;
      }
      std::string replacement = eligible[rng.below(eligible.size())]->lemma;
      const auto first = static_cast<unsigned char>(original.front());
      if (std::isupper(first) && !replacement.empty()) {
        replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
      }
      std::string bad = src.sentence_good;
      bad.replace(begin, end - begin, replacement);
      if (bad == src.sentence_good) {
        ++out.skipped;
        continue;
      }
      pairs.push_back(MinimalPair{src.sentence_good, std::move(bad), src.pair_id + "#lex-" + pos_name});
    }
  }
  Rng rng(derive_seed(options.seed, "lex-reshuffle:" + pos_name));
  rng.shuffle(pairs);

  out.benchmark.name = b.name + "-lex-" + pos_name;
  out.benchmark.schema = b.schema;
  out.benchmark.source_path = b.source_path;
  out.benchmark.content_hash =
      sha256_hex(b.content_hash + ":lex:" + pos_name + ":" + std::to_string(options.seed) + ":" +
                 std::to_string(options.per_phenomenon));
  const std::string language = b.phenomena.empty() ? std::string("en") : b.phenomena.front().language;
  out.benchmark.phenomena.push_back(
      Phenomenon{"blimp_lex_" + pos_name, "lexical_control", language, std::move(pairs)});
  return out;
}

std::vector<LexiconEntry> load_lexicon(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  std::vector<LexiconEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cols.push_back(cell);
    if (line_no == 1 && !cols.empty() && cols[0] == "lemma") continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cols.size() != 4) throw DataError(where + ": expected 4 tab-separated columns");
    LexiconEntry e;
    e.lemma = cols[0];
    e.pos = parse_part_of_speech(cols[1]);
    try {
      e.zipf = std::stod(cols[2]);
      e.length = std::stoi(cols[3]);
    } catch (const std::exception&) {
      throw DataError(where + ": non-numeric zipf or length");
    }
    if (!std::isfinite(e.zipf)) throw DataError(where + ": zipf is not finite");
    if (e.length < 1 || static_cast<std::size_t>(e.length) != utf8_length(e.lemma)) {
      throw DataError(where + ": length does not match the lemma's character count");
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<SpanAnnotation> load_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotations " + path.string());
  std::vector<SpanAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const json rec = json::parse(line);
      SpanAnnotation a;
      a.pair_id = rec.at("pair_id").get<std::string>();
      a.span_start = rec.at("span_start").get<std::size_t>();
      a.span_end = rec.at("span_end").get<std::size_t>();
      a.pos = parse_part_of_speech(rec.at("pos").get<std::string>());
      a.zipf = rec.at("zipf").get<double>();
      a.length = rec.at("length").get<int>();
      out.push_back(std::move(a));
    } catch (const json::exception& e) {
      throw DataError(where + ": malformed annotation: " + e.what());
    }
  }
  return out;
}

}  // namespace synloc
