#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <toml.hpp>

#include "commands.hpp"
#include "synloc/error.hpp"
#include "synloc/parallel.hpp"

namespace synloc::cli {

namespace {

namespace fs = std::filesystem;

// Flag values; each is applied only when given on the command line.
struct Flags {
  std::string config_file;
  std::string model, tokenizer, reference, features, distances, lexicon, annotations;
  std::vector<std::string> benchmarks, phenomena, agreement;
  double fraction = 0;
  int folds = 0;
  std::string sites, mode, score, ablate_at, out, cache;
  std::vector<std::uint64_t> seeds;
  std::uint64_t split_seed = 0, control_seed = 0;
  std::size_t threads = 0, lex_per_phenomenon = 0;
};

void add_experiment_options(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_file, "TOML experiment config")->check(CLI::ExistingFile);
  sub->add_option("--model", f.model, "canonical weight file");
  sub->add_option("--tokenizer", f.tokenizer, "directory with vocab.json and merges.txt");
  sub->add_option("--benchmark", f.benchmarks, "benchmark file or directory (repeatable)");
  sub->add_option("--phenomena", f.phenomena, "restrict to these phenomenon uids");
  sub->add_option("--fraction", f.fraction, "fraction of units to select");
  sub->add_option("--folds", f.folds, "number of folds");
  sub->add_option("--sites", f.sites, "capture sites: residual, attn_out, mlp_out (comma separated)");
  sub->add_option("--seeds", f.seeds, "random-ablation seeds");
  sub->add_option("--mode", f.mode, "ablation mode: zero, mean or both");
  sub->add_option("--score", f.score, "sentence score: sum");
  sub->add_option("--ablate-at", f.ablate_at, "all-positions or last-position");
  sub->add_option("--split-seed", f.split_seed, "shuffle pairs before splitting folds");
  sub->add_option("--control-seed", f.control_seed, "seed for the shuffled-label control");
  sub->add_option("--lexicon", f.lexicon, "lexicon TSV for the lexical control");
  sub->add_option("--annotations", f.annotations, "span annotations for the lexical control");
  sub->add_option("--lex-per-phenomenon", f.lex_per_phenomenon, "pairs sampled per phenomenon for the lexical control");
  sub->add_option("--agreement", f.agreement, "agreement category names");
  sub->add_option("--reference", f.reference, "reference benchmark for cross-language comparisons");
  sub->add_option("--features", f.features, "syntactic feature CSV");
  sub->add_option("--distances", f.distances, "precomputed language distances CSV");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--threads", f.threads, "worker threads (results do not depend on it)");
  sub->add_option("--cache", f.cache, "activation cache directory, or 'off'");
}

template <typename T>
std::vector<T> toml_array(const toml::node& node, const std::string& key) {
  std::vector<T> out;
  if (const auto* arr = node.as_array()) {
    for (const auto& item : *arr) {
      auto v = item.value<T>();
      if (!v) throw ConfigError("config: '" + key + "' has an element of the wrong type");
      out.push_back(*v);
    }
  } else if (auto v = node.value<T>()) {
    out.push_back(*v);
  } else {
    throw ConfigError("config: '" + key + "' has the wrong type");
  }
  return out;
}

void apply_config_file(const std::string& path, ExperimentConfig& c) {
  toml::table t;
  try {
    t = toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    throw ConfigError("config " + path + ": " + std::string(e.description()));
  }
  const fs::path base = fs::path(path).parent_path();
  // Relative paths in the file are relative to the file itself.
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  for (const auto& [k, node] : t) {
    const std::string key(k.str());
    auto str = [&]() {
      auto v = node.value<std::string>();
      if (!v) throw ConfigError("config: '" + key + "' must be a string");
      return *v;
    };
    auto integer = [&]() {
      auto v = node.value<std::int64_t>();
      if (!v || *v < 0) throw ConfigError("config: '" + key + "' must be a non-negative integer");
      return *v;
    };
    if (key == "model") c.model = resolve(str());
    else if (key == "tokenizer") c.tokenizer = resolve(str());
    else if (key == "benchmark" || key == "benchmarks") {
      c.benchmarks.clear();
      for (const auto& b : toml_array<std::string>(node, key)) c.benchmarks.push_back(resolve(b));
    } else if (key == "reference") c.reference = resolve(str());
    else if (key == "features") c.features = resolve(str());
    else if (key == "distances") c.distances = resolve(str());
    else if (key == "lexicon") c.lexicon = resolve(str());
    else if (key == "annotations") c.annotations = resolve(str());
    else if (key == "phenomena") c.phenomena = toml_array<std::string>(node, key);
    else if (key == "agreement_categories") c.agreement_categories = toml_array<std::string>(node, key);
    else if (key == "fraction") {
      auto v = node.value<double>();
      if (!v) throw ConfigError("config: 'fraction' must be a number");
      c.fraction = *v;
    } else if (key == "folds") c.folds = static_cast<int>(integer());
    else if (key == "sites") c.sites = str();
    else if (key == "seeds") {
      c.seeds.clear();
      for (auto s : toml_array<std::int64_t>(node, key)) c.seeds.push_back(static_cast<std::uint64_t>(s));
    } else if (key == "mode") c.mode = str();
    else if (key == "score") c.score = str();
    else if (key == "ablate_at") c.ablate_at = str();
    else if (key == "split_seed") c.split_seed = static_cast<std::uint64_t>(integer());
    else if (key == "control_seed") c.control_seed = static_cast<std::uint64_t>(integer());
    else if (key == "lex_per_phenomenon") c.lex_per_phenomenon = static_cast<std::size_t>(integer());
    else if (key == "out") c.out = resolve(str());
    else if (key == "threads") c.threads = static_cast<std::size_t>(integer());
    else if (key == "cache") c.cache = str() == "off" ? "off" : resolve(str());
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

void apply_flags(const CLI::App* sub, const Flags& f, ExperimentConfig& c) {
  auto given = [&](const char* name) { return sub->count(name) > 0; };
  if (given("--model")) c.model = f.model;
  if (given("--tokenizer")) c.tokenizer = f.tokenizer;
  if (given("--benchmark")) c.benchmarks = f.benchmarks;
  if (given("--phenomena")) c.phenomena = f.phenomena;
  if (given("--fraction")) c.fraction = f.fraction;
  if (given("--folds")) c.folds = f.folds;
  if (given("--sites")) c.sites = f.sites;
  if (given("--seeds")) c.seeds = f.seeds;
  if (given("--mode")) c.mode = f.mode;
  if (given("--score")) c.score = f.score;
  if (given("--ablate-at")) c.ablate_at = f.ablate_at;
  if (given("--split-seed")) c.split_seed = f.split_seed;
  if (given("--control-seed")) c.control_seed = f.control_seed;
  if (given("--lexicon")) c.lexicon = f.lexicon;
  if (given("--annotations")) c.annotations = f.annotations;
  if (given("--lex-per-phenomenon")) c.lex_per_phenomenon = f.lex_per_phenomenon;
  if (given("--agreement")) c.agreement_categories = f.agreement;
  if (given("--reference")) c.reference = f.reference;
  if (given("--features")) c.features = f.features;
  if (given("--distances")) c.distances = f.distances;
  if (given("--out")) c.out = f.out;
  if (given("--threads")) c.threads = f.threads;
  if (given("--cache")) c.cache = f.cache;
}

void require_path(const std::string& what, const std::string& path) {
  if (path.empty()) throw ConfigError("missing --" + what);
  if (!fs::exists(path)) throw ConfigError(what + " path does not exist: " + path);
}

void validate(const std::string& command, const ExperimentConfig& c) {
  const bool allow_zero = command == "ablate";
  if (!(c.fraction <= 1.0 && (c.fraction > 0.0 || (allow_zero && c.fraction == 0.0)))) {
    throw ConfigError("--fraction must lie in (0, 1]" + std::string(allow_zero ? " (0 allowed for ablate)" : ""));
  }
  if (c.folds < 2) throw ConfigError("--folds must be at least 2");
  if (c.score != "sum") throw ConfigError("--score: only 'sum' (total log probability) is supported");
  if (c.mode != "zero" && c.mode != "mean" && c.mode != "both") {
    throw ConfigError("--mode must be zero, mean or both");
  }
  parse_ablation_application(c.ablate_at);
  SiteSet::parse(c.sites);
  if (command == "ablate" && c.seeds.empty()) throw ConfigError("--seeds needs at least one seed");
  require_path("model", c.model);
  require_path("tokenizer", c.tokenizer);
  if (c.benchmarks.empty()) throw ConfigError("missing --benchmark");
  for (const auto& b : c.benchmarks) require_path("benchmark", b);
  if (!c.reference.empty()) require_path("reference", c.reference);
  if (command == "crosslingual") require_path("features", c.features);
  if (!c.distances.empty()) require_path("distances", c.distances);
  if (!c.lexicon.empty() || !c.annotations.empty()) {
    require_path("lexicon", c.lexicon);
    require_path("annotations", c.annotations);
  }
}

/// Command line without flags that cannot change the outputs.
std::vector<std::string> normalized_arguments(const std::vector<std::string>& args) {
  static const std::vector<std::string> neutral = {"--threads", "--cache", "--out", "--config"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    bool skip = false;
    for (const auto& n : neutral) {
      if (a == n) {
        skip = true;
        ++i;  // value follows
      } else if (a.rfind(n + "=", 0) == 0) {
        skip = true;
      }
    }
    if (!skip) out.push_back(a);
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"synloc: locate syntax-responsive units in decoder-only language models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolkitVersion);
  Flags flags;
  std::vector<CLI::App*> experiment;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"localize", "localize units per phenomenon and write unit-set files"},
           {"crossval", "k-fold localization consistency with random and control baselines"},
           {"ablate", "zero/mean ablation of top units versus random units"},
           {"overlap", "pairwise phenomenon overlap, category and agreement summaries"},
           {"crosslingual", "cross-language overlap versus syntactic similarity"}}) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_experiment_options(sub, flags);
    experiment.push_back(sub);
  }
  std::string verify_path;
  CLI::App* verify = app.add_subcommand("verify", "audit a run directory (or every run under an output directory)");
  verify->add_option("path", verify_path, "run directory or output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (verify->parsed()) return cmd_verify(verify_path);
    CLI::App* sub = nullptr;
    for (auto* s : experiment) {
      if (s->parsed()) sub = s;
    }
    ExperimentConfig config;
    if (!flags.config_file.empty()) apply_config_file(flags.config_file, config);
    apply_flags(sub, flags, config);
    if (config.cache.empty()) {
      if (const char* env = std::getenv("SYNLOC_CACHE_DIR"); env != nullptr && *env != '\0') config.cache = env;
    }
    const std::string command = sub->get_name();
    validate(command, config);
    Session session = open_session(config, normalized_arguments(args), true);
    if (command == "localize") return cmd_localize(session);
    if (command == "crossval") return cmd_crossval(session);
    if (command == "ablate") return cmd_ablate(session);
    if (command == "overlap") return cmd_overlap(session);
    return cmd_crosslingual(session);
  } catch (const Error& e) {
    std::cerr << "synloc: error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "synloc: error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "synloc: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace synloc::cli
