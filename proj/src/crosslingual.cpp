#include "synloc/crosslingual.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "synloc/error.hpp"
#include "synloc/evaluator.hpp"

namespace synloc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_real(const std::string& cell, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": cannot parse '" + cell + "' as a number");
  }
}

}  // namespace

const LanguageFeatures* FeatureTable::find(const std::string& language) const {
  for (const auto& l : languages) {
    if (l.language == language) return &l;
  }
  return nullptr;
}

FeatureTable load_feature_vectors(const std::filesystem::path& path, bool require_complete) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty feature file");
  const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
  FeatureTable t;
  const auto header = split(line, sep);
  if (header.size() < 2) throw DataError(path.string() + ": need a language column and at least one feature");
  t.feature_names.assign(header.begin() + 1, header.end());
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto cells = split(line, sep);
    if (cells.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " columns, found " +
                      std::to_string(cells.size()));
    }
    LanguageFeatures f;
    f.language = cells[0];
    if (f.language.empty()) throw DataError(where + ": empty language code");
    if (!seen.insert(f.language).second) throw DataError(where + ": duplicate language '" + f.language + "'");
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (cells[i] == "--" || cells[i].empty()) {
        f.features.push_back(0.0);
        f.missing.push_back(true);
        f.complete = false;
      } else {
        f.features.push_back(parse_real(cells[i], where));
        f.missing.push_back(false);
      }
    }
    if (require_complete && !f.complete) {
      t.dropped.push_back(f.language);
      continue;
    }
    t.languages.push_back(std::move(f));
  }
  if (t.languages.empty()) t.warnings.push_back(path.string() + ": no language has a complete feature vector");
  return t;
}

double syntactic_similarity(const LanguageFeatures& a, const LanguageFeatures& b) {
  if (!a.complete || !b.complete) throw DataError("similarity needs complete feature vectors");
  if (a.features.size() != b.features.size()) throw DataError("feature vectors differ in length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.features.size(); ++i) {
    dot += a.features[i] * b.features[i];
    na += a.features[i] * a.features[i];
    nb += b.features[i] * b.features[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw NumericError("zero-norm feature vector for " + (na == 0.0 ? a.language : b.language));
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

DistanceTable DistanceTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open distance file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty distance file");
  const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
  const auto header = split(line, sep);
  if (header.size() != 3) throw DataError(path.string() + ": expected columns lang_a, lang_b, distance");
  DistanceTable t;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto cells = split(line, sep);
    if (cells.size() != 3) throw DataError(where + ": expected 3 columns");
    if (t.distance(cells[0], cells[1])) throw DataError(where + ": duplicate pair");
    t.set(cells[0], cells[1], parse_real(cells[2], where));
  }
  return t;
}

void DistanceTable::set(const std::string& a, const std::string& b, double distance) {
  table_[a < b ? std::make_pair(a, b) : std::make_pair(b, a)] = distance;
}

std::optional<double> DistanceTable::distance(const std::string& a, const std::string& b) const {
  auto it = table_.find(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::size_t filter_spurious(std::vector<LanguagePairPoint>& points, const FeatureTable& features) {
  std::size_t excluded = 0;
  for (auto& p : points) {
    if (p.excluded || std::fabs(p.similarity - 1.0) > 1e-12) continue;
    const auto* a = features.find(p.lang_a);
    const auto* b = features.find(p.lang_b);
    if (a == nullptr || b == nullptr) continue;
    if (a->features != b->features) {
      p.excluded = true;
      p.reason = "maximal similarity despite different feature vectors";
      ++excluded;
    }
  }
  return excluded;
}

LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ConfigError("regression inputs differ in length");
  if (x.size() < 2) throw ConfigError("regression needs at least two points");
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x)) throw NumericError("regression is degenerate: constant similarity");
  if (constant(y)) throw NumericError("regression is degenerate: constant overlap");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0) throw NumericError("regression is degenerate: constant similarity");
  if (syy == 0.0) throw NumericError("regression is degenerate: constant overlap");
  LinearFit f;
  f.n = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return f;
}

CrossLingualResult overlap_vs_similarity(const std::map<std::string, UnitSet>& unit_sets,
                                         const FeatureTable& features, const DistanceTable* distances) {
  std::vector<std::string> langs;
  for (const auto& [lang, _] : unit_sets) {
    const auto* f = features.find(lang);
    if (f != nullptr && f->complete) langs.push_back(lang);
  }
  if (langs.size() < 3) throw ConfigError("overlap-vs-similarity needs at least three languages with features");
  CrossLingualResult r;
  for (std::size_t i = 0; i < langs.size(); ++i) {
    for (std::size_t j = i + 1; j < langs.size(); ++j) {
      LanguagePairPoint p;
      p.lang_a = langs[i];
      p.lang_b = langs[j];
      if (distances != nullptr) {
        const auto d = distances->distance(p.lang_a, p.lang_b);
        if (!d) throw DataError("no distance for language pair " + p.lang_a + "/" + p.lang_b);
        p.similarity = 1.0 - *d;
      } else {
        p.similarity = syntactic_similarity(*features.find(p.lang_a), *features.find(p.lang_b));
      }
      p.overlap_pct = overlap_pct(unit_sets.at(p.lang_a), unit_sets.at(p.lang_b)).value_pct;
      r.points.push_back(std::move(p));
    }
  }
  r.excluded = filter_spurious(r.points, features);
  std::vector<double> x, y;
  for (const auto& p : r.points) {
    if (p.excluded) continue;
    x.push_back(p.similarity);
    y.push_back(p.overlap_pct);
  }
  try {
    r.fit = least_squares(x, y);
  } catch (const Error& e) {
    r.degenerate = e.what();
  }
  return r;
}

namespace {

const std::string& category_in(const LabeledSets& s, const std::string& uid) {
  auto it = s.categories.find(uid);
  if (it == s.categories.end()) throw ConfigError("phenomenon '" + uid + "' has no category");
  return it->second;
}

}  // namespace

std::vector<AgreementBars> cross_language_agreement_report(const LabeledSets& native,
                                                           const LabeledSets& reference) {
  if (native.agreement.empty()) throw ConfigError("no agreement categories given for the native benchmark");
  const auto& ns = native.sets;
  const auto& rs = reference.sets;
  std::vector<AgreementBars> out;
  for (const auto& cat : native.agreement) {
    std::vector<double> within, cross, non, ref_agr, ref_non;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      if (category_in(native, ns[i].provenance.phenomenon_uid) != cat) continue;
      for (std::size_t j = 0; j < ns.size(); ++j) {
        if (j == i) continue;
        const std::string& other = category_in(native, ns[j].provenance.phenomenon_uid);
        const double v = overlap_pct(ns[i], ns[j]).value_pct;
        if (other == cat) {
          if (j > i) within.push_back(v);  // unordered pairs once
        } else if (native.agreement.contains(other)) {
          cross.push_back(v);
        } else {
          non.push_back(v);
        }
      }
      for (const auto& r : rs) {
        const std::string& rc = category_in(reference, r.provenance.phenomenon_uid);
        // Against itself the reference comparison skips the native category,
        // so the reference bars reduce to the same-language ones.
        if (rc == cat && r.provenance.benchmark_hash == ns[i].provenance.benchmark_hash) continue;
        (reference.agreement.contains(rc) ? ref_agr : ref_non).push_back(overlap_pct(ns[i], r).value_pct);
      }
    }
    AgreementBars bars;
    bars.category = cat;
    bars.within = mean_of(within);
    bars.cross_agreement = mean_of(cross);
    bars.non_agreement = mean_of(non);
    bars.reference_agreement = mean_of(ref_agr);
    bars.reference_non_agreement = mean_of(ref_non);
    out.push_back(bars);
  }
  return out;
}

}  // namespace synloc
