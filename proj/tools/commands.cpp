#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include "synloc/analysis.hpp"
#include "synloc/crosslingual.hpp"
#include "synloc/error.hpp"
#include "synloc/evaluator.hpp"
#include "synloc/parallel.hpp"

namespace synloc::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

std::string fmt_pct(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt_real(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_real(*v) : ""; }

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join_row(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) line += ",";
    line += csv_cell(cells[i]);
  }
  return line + "\n";
}

}  // namespace

Csv::Csv(const std::string& run_id) : text_(csv_run_header(run_id)) {}

Csv& Csv::header(const std::vector<std::string>& columns) {
  text_ += join_row(columns);
  return *this;
}

Csv& Csv::row(const std::vector<std::string>& cells) {
  text_ += join_row(cells);
  return *this;
}

namespace {

std::string json_text(const ordered_json& j) { return j.dump(1) + "\n"; }

ordered_json opt_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json config_snapshot(const ExperimentConfig& c) {
  ordered_json j;
  j["model"] = c.model;
  j["tokenizer"] = c.tokenizer;
  j["benchmarks"] = c.benchmarks;
  j["reference"] = c.reference;
  j["features"] = c.features;
  j["distances"] = c.distances;
  j["lexicon"] = c.lexicon;
  j["annotations"] = c.annotations;
  j["phenomena"] = c.phenomena;
  j["agreement_categories"] = c.agreement_categories;
  j["fraction"] = c.fraction;
  j["folds"] = c.folds;
  j["sites"] = c.sites;
  j["seeds"] = c.seeds;
  j["mode"] = c.mode;
  j["score"] = c.score;
  j["ablate_at"] = c.ablate_at;
  j["split_seed"] = c.split_seed ? ordered_json(*c.split_seed) : ordered_json(nullptr);
  j["control_seed"] = c.control_seed;
  j["lex_per_phenomenon"] = c.lex_per_phenomenon;
  return j;
}

/// Agreement categories: the configured list, or every category whose name
/// mentions agreement.
std::set<std::string> agreement_set(const ExperimentConfig& c, const std::map<std::string, std::string>& cats) {
  std::set<std::string> out;
  if (!c.agreement_categories.empty()) {
    out.insert(c.agreement_categories.begin(), c.agreement_categories.end());
    return out;
  }
  for (const auto& [uid, cat] : cats) {
    if (cat.find("agreement") != std::string::npos) out.insert(cat);
  }
  return out;
}

fs::path publish(RunWriter& writer) {
  const fs::path dir = writer.commit();
  std::cout << dir.string() << "\n";
  return dir;
}

std::string category_of(const Phenomenon& p) { return p.category; }

}  // namespace

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

RunManifest Session::manifest(const std::string& command) const {
  RunManifest m;
  m.command = command;
  m.arguments = arguments;
  m.config = config_snapshot(config);
  m.model_hash = model ? model->hash() : "";
  for (const auto& b : benchmarks) m.benchmark_hashes[b.name] = b.content_hash;
  m.fraction = config.fraction;
  m.sites = SiteSet::parse(config.sites).to_string();
  m.seeds = config.seeds;
  return m;
}

Session open_session(const ExperimentConfig& config, std::vector<std::string> arguments, bool need_model) {
  Session s;
  s.config = config;
  s.arguments = std::move(arguments);
  s.threads = config.threads == 0 ? default_threads() : config.threads;
  std::set<std::string> names;
  for (const auto& path : config.benchmarks) {
    Benchmark b = load_benchmark(path);
    if (!names.insert(b.name).second) throw ConfigError("two benchmarks are named '" + b.name + "'");
    s.benchmarks.push_back(std::move(b));
  }
  if (!config.phenomena.empty()) {
    const std::set<std::string> wanted(config.phenomena.begin(), config.phenomena.end());
    std::set<std::string> found;
    for (auto& b : s.benchmarks) {
      std::vector<Phenomenon> kept;
      for (auto& p : b.phenomena) {
        if (wanted.contains(p.uid)) {
          found.insert(p.uid);
          kept.push_back(std::move(p));
        }
      }
      b.phenomena = std::move(kept);
    }
    for (const auto& uid : wanted) {
      if (!found.contains(uid)) throw ConfigError("phenomenon '" + uid + "' is not in any benchmark");
    }
  }
  if (need_model) {
    s.model = std::make_unique<LanguageModel>(LanguageModel::load(config.model, config.tokenizer));
    if (!config.cache.empty() && config.cache != "off") s.cache = std::make_unique<ActivationCache>(config.cache);
    s.localizer = std::make_unique<Localizer>(*s.model, SiteSet::parse(config.sites), s.threads, s.cache.get());
  }
  return s;
}

// ---------------------------------------------------------------------------
// localize
// ---------------------------------------------------------------------------

namespace {

void add_breakdown_rows(Csv& layers, Csv& sites, const std::string& bench, const UnitSet& set) {
  const SiteBreakdown br = site_breakdown(set);
  for (const auto& s : br.sites) {
    sites.row({bench, set.provenance.phenomenon_uid, to_string(s.site), std::to_string(s.count), fmt_real(s.fraction)});
  }
  for (const auto& l : br.layers) {
    layers.row({bench, set.provenance.phenomenon_uid, to_string(l.site), std::to_string(l.layer),
                fmt_real(l.relative_depth), std::to_string(l.count), fmt_real(l.fraction)});
  }
}

Csv layer_csv(const std::string& run_id) {
  Csv c(run_id);
  c.header({"benchmark", "phenomenon", "site", "layer", "relative_depth", "count", "fraction"});
  return c;
}

Csv site_csv(const std::string& run_id) {
  Csv c(run_id);
  c.header({"benchmark", "phenomenon", "site", "count", "fraction"});
  return c;
}

}  // namespace

int cmd_localize(Session& s) {
  RunWriter writer(s.config.out, s.manifest("localize"));
  const std::string& id = writer.run_id();
  Csv table(id);
  table.header({"benchmark", "phenomenon", "category", "language", "k", "total_units", "defined_units", "top_t",
                "kth_t", "unit_set"});
  Csv layers = layer_csv(id);
  Csv sites = site_csv(id);
  for (const auto& b : s.benchmarks) {
    for (const auto& p : b.phenomena) {
      const UnitSet set = s.localizer->localize(b.content_hash, p, s.config.fraction);
      const std::string rel = "unitsets/" + b.name + "/" + p.uid + ".json";
      writer.add(rel, unit_set_to_json(set, id));
      table.row({b.name, p.uid, p.category, p.language, std::to_string(set.k), std::to_string(set.total_units),
                 std::to_string(set.defined_units), set.units.empty() ? "" : fmt_real(set.units.front().t),
                 set.units.empty() ? "" : fmt_real(set.units.back().t), rel});
      if (!set.units.empty()) add_breakdown_rows(layers, sites, b.name, set);
    }
  }
  writer.add("localize.csv", table.str());
  writer.add("breakdown_layers.csv", layers.str());
  writer.add("breakdown_sites.csv", sites.str());
  publish(writer);
  return 0;
}

// ---------------------------------------------------------------------------
// crossval
// ---------------------------------------------------------------------------

int cmd_crossval(Session& s) {
  RunWriter writer(s.config.out, s.manifest("crossval"));
  const std::string& id = writer.run_id();
  const auto folds = static_cast<std::size_t>(s.config.folds);
  const UnitLayout layout = s.localizer->layout();
  const std::size_t total = layout.total();
  const std::size_t k = target_count(total, s.config.fraction);

  Csv table(id);
  table.header({"benchmark", "row", "kind", "category", "folds", "k", "overlap_pct", "intersection", "dropped"});
  ordered_json record;
  record["run_id"] = id;
  record["model_hash"] = s.model->hash();
  record["fraction"] = s.config.fraction;
  record["folds"] = folds;
  record["total_units"] = total;
  record["k"] = k;
  record["benchmarks"] = ordered_json::array();

  auto consistency_rows = [&](const Benchmark& b, const std::string& bench_label, const std::string& kind,
                              std::vector<double>& values, ordered_json& out) {
    for (const auto& p : b.phenomena) {
      const ConsistencyResult r = kfold_consistency(*s.localizer, b.content_hash, p, s.config.fraction, folds,
                                                    s.config.split_seed);
      values.push_back(r.overlap.value_pct);
      table.row({bench_label, p.uid, kind, category_of(p), std::to_string(folds), std::to_string(r.overlap.denominator),
                 fmt_pct(r.overlap.value_pct), std::to_string(r.overlap.numerator), std::to_string(r.dropped)});
      out.push_back({{"phenomenon", p.uid},
                     {"kind", kind},
                     {"category", p.category},
                     {"k", r.overlap.denominator},
                     {"overlap_pct", r.overlap.value_pct},
                     {"intersection", r.overlap.numerator},
                     {"dropped", r.dropped}});
    }
  };

  for (const auto& b : s.benchmarks) {
    ordered_json bj;
    bj["benchmark"] = b.name;
    bj["benchmark_hash"] = b.content_hash;
    bj["rows"] = ordered_json::array();
    std::vector<double> real;
    consistency_rows(b, b.name, "phenomenon", real, bj["rows"]);
    if (auto m = mean_of(real)) {
      table.row({b.name, "mean", "mean", "", std::to_string(folds), std::to_string(k), fmt_pct(*m), "", ""});
      bj["mean_pct"] = *m;
    }

    const Benchmark control = make_blimp_control(b, s.config.control_seed);
    std::vector<double> control_values;
    consistency_rows(control, b.name, "control", control_values, bj["rows"]);
    if (auto m = mean_of(control_values)) {
      table.row({b.name, "BLiMP-Control", "control_mean", "", std::to_string(folds), std::to_string(k), fmt_pct(*m),
                 "", ""});
      bj["control_mean_pct"] = *m;
    }

    if (!s.config.lexicon.empty()) {
      const auto lexicon = load_lexicon(s.config.lexicon);
      const auto annotations = load_annotations(s.config.annotations);
      for (PartOfSpeech pos : {PartOfSpeech::noun, PartOfSpeech::verb}) {
        LexOptions lo;
        lo.pos = pos;
        lo.per_phenomenon = s.config.lex_per_phenomenon;
        lo.seed = s.config.control_seed;
        const LexControl lex = make_blimp_lex(b, lexicon, annotations, lo);
        std::vector<double> lex_values;
        consistency_rows(lex.benchmark, b.name, "lex", lex_values, bj["rows"]);
        bj["lex_skipped_" + std::string(to_string(pos))] = lex.skipped;
      }
    }
    record["benchmarks"].push_back(std::move(bj));
  }

  const double expected = expected_random_overlap(total, k, folds);
  const double sd = random_overlap_stddev(total, k, folds);
  table.row({"", "Random", "random", "", std::to_string(folds), std::to_string(k), fmt_pct(expected), "", ""});
  record["random"] = {{"expected_pct", expected}, {"stddev_pct", sd}};

  writer.add("consistency.csv", table.str());
  writer.add("consistency.json", json_text(record));
  publish(writer);
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

int cmd_ablate(Session& s) {
  RunWriter writer(s.config.out, s.manifest("ablate"));
  const std::string& id = writer.run_id();
  std::vector<AblationMode> modes;
  if (s.config.mode == "zero" || s.config.mode == "both") modes.push_back(AblationMode::zero);
  if (s.config.mode == "mean" || s.config.mode == "both") modes.push_back(AblationMode::mean);

  Csv table(id);
  table.header({"benchmark", "phenomenon", "mode", "k", "heldout_pairs", "baseline_accuracy", "top_accuracy",
                "top_drop", "mean_random_accuracy", "mean_random_drop", "mean_value"});
  Csv random_table(id);
  random_table.header({"benchmark", "phenomenon", "mode", "seed", "random_accuracy", "random_drop"});
  Csv scatter(id);
  scatter.header({"benchmark", "phenomenon", "mode", "consistency_pct", "top_drop"});
  Csv correlation(id);
  correlation.header({"analysis", "mode", "n", "r", "status"});

  ordered_json record;
  record["run_id"] = id;
  record["model_hash"] = s.model->hash();
  record["fraction"] = s.config.fraction;
  record["seeds"] = s.config.seeds;
  record["application"] = s.config.ablate_at;
  record["outcomes"] = ordered_json::array();

  std::map<AblationMode, std::vector<ScatterPoint>> points;
  std::map<AblationMode, std::vector<double>> top_drops, random_drops;
  const bool with_units = target_count(s.localizer->layout().total(), s.config.fraction) > 0;

  for (const auto& b : s.benchmarks) {
    for (const auto& p : b.phenomena) {
      std::optional<double> consistency;
      if (with_units) {
        consistency = kfold_consistency(*s.localizer, b.content_hash, p, s.config.fraction,
                                        static_cast<std::size_t>(s.config.folds), s.config.split_seed)
                          .overlap.value_pct;
      }
      for (AblationMode mode : modes) {
        AblationOptions opt;
        opt.fraction = s.config.fraction;
        opt.seeds = s.config.seeds;
        opt.mode = mode;
        opt.application = parse_ablation_application(s.config.ablate_at);
        const AblationOutcome o = ablation_experiment(*s.localizer, b.content_hash, p, opt);
        double mean_random_acc = 0.0;
        for (double a : o.random_accuracies) mean_random_acc += a;
        mean_random_acc /= static_cast<double>(o.random_accuracies.size());
        table.row({b.name, p.uid, to_string(mode), std::to_string(o.k), std::to_string(o.heldout_pairs),
                   fmt_real(o.baseline_accuracy), fmt_real(o.top_accuracy), fmt_real(o.top_drop),
                   fmt_real(mean_random_acc), fmt_real(o.mean_random_drop()), fmt_real(o.mean_value)});
        for (std::size_t i = 0; i < o.seeds.size(); ++i) {
          random_table.row({b.name, p.uid, to_string(mode), std::to_string(o.seeds[i]),
                            fmt_real(o.random_accuracies[i]), fmt_real(o.random_drops[i])});
        }
        top_drops[mode].push_back(o.top_drop);
        random_drops[mode].push_back(o.mean_random_drop());
        if (consistency) {
          points[mode].push_back({p.uid, *consistency, o.top_drop});
          scatter.row({b.name, p.uid, to_string(mode), fmt_pct(*consistency), fmt_real(o.top_drop)});
        }
        record["outcomes"].push_back({{"benchmark", b.name},
                                      {"benchmark_hash", b.content_hash},
                                      {"phenomenon", p.uid},
                                      {"mode", to_string(mode)},
                                      {"k", o.k},
                                      {"mean_value", o.mean_value},
                                      {"heldout_pairs", o.heldout_pairs},
                                      {"baseline_accuracy", o.baseline_accuracy},
                                      {"top_accuracy", o.top_accuracy},
                                      {"top_drop", o.top_drop},
                                      {"top_ties", o.top_ties},
                                      {"seeds", o.seeds},
                                      {"random_accuracies", o.random_accuracies},
                                      {"random_drops", o.random_drops}});
      }
    }
  }

  for (AblationMode mode : modes) {
    auto mean_top = mean_of(top_drops[mode]);
    auto mean_rand = mean_of(random_drops[mode]);
    table.row({"", "mean", to_string(mode), "", "", "", "", fmt_opt(mean_top), "", fmt_opt(mean_rand), ""});
    record["mean_" + std::string(to_string(mode))] = {{"top_drop", opt_json(mean_top)},
                                                      {"random_drop", opt_json(mean_rand)}};
    // Correlations are reported, not required: a degenerate input is recorded as such.
    if (points[mode].empty()) {
      correlation.row({"consistency_vs_top_drop", to_string(mode), "0", "", "skipped: no units selected"});
      continue;
    }
    try {
      const CorrelationReport r = consistency_vs_ablation(points[mode]);
      correlation.row({"consistency_vs_top_drop", to_string(mode), std::to_string(r.n), fmt_real(r.r), "ok"});
    } catch (const Error& e) {
      correlation.row({"consistency_vs_top_drop", to_string(mode), std::to_string(points[mode].size()), "",
                       std::string("undefined: ") + e.what()});
    }
  }
  if (modes.size() == 2) {
    const auto& z = top_drops[AblationMode::zero];
    const auto& m = top_drops[AblationMode::mean];
    try {
      const double r = ablation_correlation(z, m);
      correlation.row({"zero_vs_mean_top_drop", "both", std::to_string(z.size()), fmt_real(r), "ok"});
    } catch (const Error& e) {
      correlation.row({"zero_vs_mean_top_drop", "both", std::to_string(z.size()), "",
                       std::string("undefined: ") + e.what()});
    }
  }

  writer.add("ablation.csv", table.str());
  writer.add("ablation_random.csv", random_table.str());
  writer.add("ablation.json", json_text(record));
  writer.add("scatter.csv", scatter.str());
  writer.add("correlation.csv", correlation.str());
  publish(writer);
  return 0;
}

// ---------------------------------------------------------------------------
// overlap
// ---------------------------------------------------------------------------

int cmd_overlap(Session& s) {
  RunWriter writer(s.config.out, s.manifest("overlap"));
  const std::string& id = writer.run_id();
  Csv pairwise(id);
  pairwise.header({"benchmark", "phenomenon_a", "phenomenon_b", "pct"});
  Csv categories(id);
  categories.header({"benchmark", "category", "members", "within_mean_pct", "cross_mean_pct", "within_pairs",
                     "cross_pairs"});
  Csv agreement(id);
  agreement.header({"benchmark", "category", "within_pct", "cross_agreement_pct", "non_agreement_pct",
                    "within_pairs", "cross_agreement_pairs", "non_agreement_pairs"});
  Csv layers = layer_csv(id);
  Csv sites = site_csv(id);

  std::vector<std::vector<UnitSet>> all_sets;
  for (const auto& b : s.benchmarks) {
    std::vector<UnitSet> sets;
    const OverlapMatrix m = pairwise_overlap_matrix(*s.localizer, b, s.config.fraction, &sets);
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = i + 1; j < m.size(); ++j) {
        pairwise.row({b.name, m.labels[i], m.labels[j], fmt_pct(m.at(i, j))});
      }
    }
    const auto cats = b.categories();
    for (const auto& c : category_summary(m, cats)) {
      categories.row({b.name, c.category, std::to_string(c.members), fmt_opt(c.within_mean_pct),
                      fmt_opt(c.cross_mean_pct), std::to_string(c.within_pairs), std::to_string(c.cross_pairs)});
    }
    const std::set<std::string> agr = agreement_set(s.config, cats);
    if (!agr.empty()) {
      for (const auto& a : agreement_analysis(m, cats, agr)) {
        agreement.row({b.name, a.category, fmt_opt(a.within_pct), fmt_opt(a.cross_agreement_pct),
                       fmt_opt(a.non_agreement_pct), std::to_string(a.within_pairs),
                       std::to_string(a.cross_agreement_pairs), std::to_string(a.non_agreement_pairs)});
      }
    }
    for (const auto& set : sets) add_breakdown_rows(layers, sites, b.name, set);
    all_sets.push_back(std::move(sets));
  }

  writer.add("pairwise.csv", pairwise.str());
  writer.add("categories.csv", categories.str());
  writer.add("agreement.csv", agreement.str());
  writer.add("breakdown_layers.csv", layers.str());
  writer.add("breakdown_sites.csv", sites.str());

  if (s.benchmarks.size() > 1) {
    Csv cross(id);
    cross.header({"benchmark_a", "benchmark_b", "cross_mean_pct", "cross_pairs", "within_a_pct", "within_b_pct"});
    for (std::size_t i = 0; i < s.benchmarks.size(); ++i) {
      for (std::size_t j = i + 1; j < s.benchmarks.size(); ++j) {
        const CrossBenchmarkResult r =
            cross_benchmark_overlap(*s.localizer, s.benchmarks[i], s.benchmarks[j], s.config.fraction);
        cross.row({s.benchmarks[i].name, s.benchmarks[j].name, fmt_pct(r.cross_mean_pct),
                   std::to_string(r.cross_pairs), fmt_opt(r.within_a_pct), fmt_opt(r.within_b_pct)});
      }
    }
    writer.add("cross_benchmark.csv", cross.str());
  }
  publish(writer);
  return 0;
}

// ---------------------------------------------------------------------------
// crosslingual
// ---------------------------------------------------------------------------

namespace {

LabeledSets labeled_sets(const Session& s, const Benchmark& b) {
  LabeledSets out;
  out.categories = b.categories();
  out.agreement = agreement_set(s.config, out.categories);
  for (const auto& p : b.phenomena) out.sets.push_back(s.localizer->localize(b.content_hash, p, s.config.fraction));
  return out;
}

}  // namespace

int cmd_crosslingual(Session& s) {
  RunWriter writer(s.config.out, s.manifest("crosslingual"));
  const std::string& id = writer.run_id();
  const FeatureTable features = load_feature_vectors(s.config.features, true);
  std::optional<DistanceTable> distances;
  if (!s.config.distances.empty()) distances = DistanceTable::load(s.config.distances);

  // Unit sets grouped by category, one per language.
  std::map<std::string, std::map<std::string, UnitSet>> by_category;
  std::vector<std::pair<std::string, LabeledSets>> native;
  for (const auto& b : s.benchmarks) {
    LabeledSets ls = labeled_sets(s, b);
    for (std::size_t i = 0; i < b.phenomena.size(); ++i) {
      const Phenomenon& p = b.phenomena[i];
      auto [it, inserted] = by_category[p.category].emplace(p.language, ls.sets[i]);
      if (!inserted) {
        throw ConfigError("language " + p.language + " has more than one phenomenon in category " + p.category);
      }
    }
    native.emplace_back(b.name, std::move(ls));
  }

  Csv pairs(id);
  pairs.header({"category", "lang_a", "lang_b", "similarity", "overlap_pct", "excluded", "reason"});
  Csv fits(id);
  fits.header({"category", "n", "slope", "intercept", "r", "status"});
  auto fit_row = [&](const std::string& cat, const CrossLingualResult& r) {
    if (r.fit) {
      fits.row({cat, std::to_string(r.fit->n), fmt_real(r.fit->slope), fmt_real(r.fit->intercept),
                fmt_real(r.fit->r), "ok"});
    } else {
      fits.row({cat, "", "", "", "", "degenerate: " + r.degenerate});
    }
  };

  // Mean over categories per language pair, for the pooled fit.
  std::map<std::pair<std::string, std::string>, std::pair<double, std::vector<double>>> pooled;
  std::size_t analysed = 0;
  for (const auto& [cat, sets] : by_category) {
    if (sets.size() < 3) continue;
    const CrossLingualResult r = overlap_vs_similarity(sets, features, distances ? &*distances : nullptr);
    ++analysed;
    for (const auto& pt : r.points) {
      pairs.row({cat, pt.lang_a, pt.lang_b, fmt_real(pt.similarity), fmt_pct(pt.overlap_pct),
                 pt.excluded ? "1" : "0", pt.reason});
      if (!pt.excluded) {
        auto& slot = pooled[{pt.lang_a, pt.lang_b}];
        slot.first = pt.similarity;
        slot.second.push_back(pt.overlap_pct);
      }
    }
    fit_row(cat, r);
  }
  if (analysed == 0) throw ConfigError("no category has phenomena in at least three languages with features");

  std::vector<double> xs, ys;
  for (const auto& [key, v] : pooled) {
    xs.push_back(v.first);
    ys.push_back(*mean_of(v.second));
  }
  try {
    const LinearFit f = least_squares(xs, ys);
    fits.row({"mean", std::to_string(f.n), fmt_real(f.slope), fmt_real(f.intercept), fmt_real(f.r), "ok"});
  } catch (const Error& e) {
    fits.row({"mean", std::to_string(xs.size()), "", "", "", std::string("degenerate: ") + e.what()});
  }

  writer.add("crosslingual_pairs.csv", pairs.str());
  writer.add("crosslingual_fit.csv", fits.str());

  if (!s.config.reference.empty()) {
    const Benchmark reference = load_benchmark(s.config.reference);
    const LabeledSets ref = labeled_sets(s, reference);
    Csv bars(id);
    bars.header({"benchmark", "category", "within", "cross_agreement", "non_agreement", "reference_agreement",
                 "reference_non_agreement"});
    for (const auto& [name, ls] : native) {
      if (ls.agreement.empty()) continue;
      for (const auto& a : cross_language_agreement_report(ls, ref)) {
        bars.row({name, a.category, fmt_opt(a.within), fmt_opt(a.cross_agreement), fmt_opt(a.non_agreement),
                  fmt_opt(a.reference_agreement), fmt_opt(a.reference_non_agreement)});
      }
    }
    writer.add("crosslingual_agreement.csv", bars.str());
  }
  publish(writer);
  return 0;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

int cmd_verify(const std::string& path) {
  const fs::path root(path);
  if (!fs::exists(root)) throw ConfigError("no such path: " + path);
  std::vector<fs::path> runs;
  if (fs::exists(root / "manifest.json")) {
    runs.push_back(root);
  } else if (fs::is_directory(root / "runs")) {
    for (const auto& e : fs::directory_iterator(root / "runs")) {
      if (e.is_directory()) runs.push_back(e.path());
    }
    std::sort(runs.begin(), runs.end());
  }
  if (runs.empty()) throw ConfigError("no runs found under " + path);
  bool ok = true;
  for (const auto& run : runs) {
    const std::string name = run.filename().string();
    if (name.rfind(".staging-", 0) == 0) {
      std::cout << name << ": FAIL\n  unfinished staging directory\n";
      ok = false;
      continue;
    }
    const VerifyReport r = verify_run(run);
    std::cout << name << ": " << (r.ok ? "ok" : "FAIL") << " (" << r.files_checked << " files)\n";
    for (const auto& p : r.problems) std::cout << "  " << p << "\n";
    ok = ok && r.ok;
  }
  return ok ? 0 : 3;
}

}  // namespace synloc::cli
