#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"
#include "synloc/analysis.hpp"
#include "synloc/store.hpp"

using namespace synloc;
using namespace synloc::testing;
namespace fs = std::filesystem;

namespace {

/// Copy of a benchmark directory keeping the first `pairs` records of the
/// first `phenomena` files.
fs::path mini_benchmark(const fs::path& src, const fs::path& dst, std::size_t phenomena, std::size_t pairs) {
  fs::create_directories(dst);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(src)) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  files.resize(std::min(files.size(), phenomena));
  for (const auto& f : files) {
    std::ifstream in(f);
    std::ofstream out(dst / f.filename());
    std::string line;
    for (std::size_t i = 0; i < pairs && std::getline(in, line); ++i) out << line << "\n";
  }
  fs::copy_file(src / "categories.json", dst / "categories.json");
  return dst;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

struct Workspace {
  fs::path dir;
  fs::path english;
  std::vector<fs::path> languages;

  Workspace() : dir(scratch_dir("cli")) {
    english = mini_benchmark(fixtures() / "blimp_toy", dir / "en", 3, 40);
    for (const char* lang : {"qaa", "qab", "qac"}) {
      languages.push_back(mini_benchmark(fixtures() / "multi" / lang, dir / lang, 4, 30));
    }
  }

  std::vector<std::string> base(const std::string& command) const {
    return {command, "--model", (fixtures() / "tiny_gpt2" / "model.safetensors").string(), "--tokenizer",
            (fixtures() / "tokenizer").string()};
  }
};

const Workspace& workspace() {
  static const Workspace w;
  return w;
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<std::string> command_args(const std::string& command) {
  const Workspace& w = workspace();
  auto a = w.base(command);
  if (command == "crosslingual") {
    for (const auto& l : w.languages) a = with(a, {"--benchmark", l.string()});
    return with(a, {"--features", (fixtures() / "features.csv").string(), "--distances",
                    (fixtures() / "distances.csv").string(), "--reference", w.english.string(), "--fraction",
                    "0.02"});
  }
  a = with(a, {"--benchmark", w.english.string(), "--fraction", "0.02"});
  if (command == "ablate") a = with(a, {"--mode", "both", "--seeds", "0", "1"});
  if (command == "crossval") {
    a = with(a, {"--lexicon", (fixtures() / "lexicon.tsv").string(), "--annotations",
                 (fixtures() / "annotations.jsonl").string(), "--lex-per-phenomenon", "8"});
  }
  return a;
}

std::string single_run(const fs::path& out) {
  std::vector<fs::path> runs;
  for (const auto& e : fs::directory_iterator(out / "runs")) runs.push_back(e.path());
  REQUIRE(runs.size() == 1);
  return runs[0].string();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("every command is byte-identical across reruns and thread counts") {
  const Workspace& w = workspace();
  for (const char* command : {"localize", "crossval", "ablate", "overlap", "crosslingual"}) {
    CAPTURE(command);
    const fs::path a = w.dir / (std::string("det-a-") + command);
    const fs::path b = w.dir / (std::string("det-b-") + command);
    REQUIRE(cli::run(with(command_args(command), {"--out", a.string(), "--threads", "1", "--cache", "off"})) == 0);
    REQUIRE(cli::run(with(command_args(command), {"--out", b.string(), "--threads", "3", "--cache", "off"})) == 0);
    CHECK(tree(a) == tree(b));
    CHECK(cli::run({"verify", a.string()}) == 0);
  }
}

TEST_CASE("the cache does not change outputs and saves forward passes") {
  const Workspace& w = workspace();
  const fs::path cache = w.dir / "cache";
  const fs::path a = w.dir / "cache-a", b = w.dir / "cache-b", c = w.dir / "cache-c";
  REQUIRE(cli::run(with(command_args("overlap"), {"--out", a.string(), "--cache", "off"})) == 0);
  REQUIRE(cli::run(with(command_args("overlap"), {"--out", b.string(), "--cache", cache.string()})) == 0);
  REQUIRE(cli::run(with(command_args("overlap"), {"--out", c.string(), "--cache", cache.string()})) == 0);
  CHECK(tree(a) == tree(b));
  CHECK(tree(a) == tree(c));
  CHECK(fs::exists(cache));
}

TEST_CASE("crossval reports the analytic random baseline") {
  const Workspace& w = workspace();
  const fs::path out = w.dir / "crossval-random";
  REQUIRE(cli::run(with(command_args("crossval"), {"--out", out.string()})) == 0);
  const auto rows = csv_rows(read_file(fs::path(single_run(out)) / "consistency.csv"));
  const auto& last = rows.back();
  CHECK(last[1] == "Random");
  const std::size_t total = 8 * 128;
  CHECK(std::stod(last[6]) == doctest::Approx(expected_random_overlap(total, target_count(total, 0.02), 2)));
  std::size_t phenomena = 0, control = 0, lex = 0;
  for (const auto& r : rows) {
    phenomena += r[2] == "phenomenon";
    control += r[2] == "control";
    lex += r[2] == "lex";
  }
  CHECK(phenomena == 3);
  CHECK(control == 3);
  CHECK(lex == 2);
}

TEST_CASE("ablate with fraction zero leaves every score unchanged") {
  const Workspace& w = workspace();
  const fs::path out = w.dir / "ablate-zero";
  auto args = w.base("ablate");
  args = with(args, {"--benchmark", w.english.string(), "--fraction", "0", "--mode", "both", "--out", out.string()});
  REQUIRE(cli::run(args) == 0);
  const auto rows = csv_rows(read_file(fs::path(single_run(out)) / "ablation.csv"));
  REQUIRE(rows.size() == 1 + 6 + 2);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::stod(rows[i][7]) == 0.0);
    CHECK(std::stod(rows[i][9]) == 0.0);
  }
}

TEST_CASE("overlap emits one long-form row per unordered pair") {
  const Workspace& w = workspace();
  const fs::path out = w.dir / "overlap-rows";
  REQUIRE(cli::run(with(command_args("overlap"), {"--out", out.string()})) == 0);
  const auto rows = csv_rows(read_file(fs::path(single_run(out)) / "pairwise.csv"));
  CHECK(rows.size() == 1 + 3);
  CHECK(rows[0] == std::vector<std::string>{"benchmark", "phenomenon_a", "phenomenon_b", "pct"});
}

TEST_CASE("configuration precedence and validation") {
  const Workspace& w = workspace();
  const fs::path cfg = w.dir / "exp.toml";
  std::ofstream(cfg) << "model = \"" << (fixtures() / "tiny_gpt2" / "model.safetensors").string() << "\"\n"
                     << "tokenizer = \"" << (fixtures() / "tokenizer").string() << "\"\n"
                     << "benchmarks = [\"" << w.english.string() << "\"]\n"
                     << "fraction = 0.5\n";
  const fs::path out_file = w.dir / "cfg-file", out_flag = w.dir / "cfg-flag";
  REQUIRE(cli::run({"localize", "--config", cfg.string(), "--out", out_file.string()}) == 0);
  REQUIRE(cli::run({"localize", "--config", cfg.string(), "--fraction", "0.02", "--out", out_flag.string()}) == 0);
  const auto from_file = csv_rows(read_file(fs::path(single_run(out_file)) / "localize.csv"));
  const auto from_flag = csv_rows(read_file(fs::path(single_run(out_flag)) / "localize.csv"));
  CHECK(from_file[1][4] == "512");
  CHECK(from_flag[1][4] == "20");

  const auto base = with(w.base("localize"), {"--benchmark", w.english.string(), "--out", (w.dir / "x").string()});
  CHECK(cli::run(with(base, {"--fraction", "0"})) == 2);
  CHECK(cli::run(with(base, {"--fraction", "1.5"})) == 2);
  CHECK(cli::run(with(base, {"--folds", "1"})) == 2);
  CHECK(cli::run(with(base, {"--sites", "embedding"})) == 2);
  CHECK(cli::run(with(base, {"--score", "mean"})) == 2);
  CHECK(cli::run(with(w.base("localize"), {"--benchmark", (w.dir / "missing").string()})) == 2);
  CHECK(cli::run({"localize", "--no-such-flag"}) == 2);

  std::ofstream bad_cfg(w.dir / "bad.toml");
  bad_cfg << "fractoin = 0.1\n";
  bad_cfg.close();
  CHECK(cli::run({"localize", "--config", (w.dir / "bad.toml").string()}) == 2);

  const fs::path broken = w.dir / "broken";
  fs::create_directories(broken);
  std::ofstream(broken / "x.jsonl") << "{\"sentence_good\": 1}\n";
  CHECK(cli::run(with(w.base("localize"), {"--benchmark", broken.string(), "--out", (w.dir / "y").string()})) == 3);
  CHECK_FALSE(fs::exists(w.dir / "y" / "runs"));
}

TEST_CASE("verify rejects tampering and orphans") {
  const Workspace& w = workspace();
  const fs::path out = w.dir / "verify";
  REQUIRE(cli::run(with(command_args("localize"), {"--out", out.string()})) == 0);
  const fs::path run = single_run(out);
  CHECK(cli::run({"verify", out.string()}) == 0);
  std::ofstream(run / "extra.csv") << "x\n";
  CHECK(cli::run({"verify", run.string()}) == 3);
  fs::remove(run / "extra.csv");
  {
    std::ofstream f(run / "localize.csv", std::ios::app);
    f << "tampered\n";
  }
  CHECK(cli::run({"verify", run.string()}) == 3);
  CHECK(cli::run({"verify", (w.dir / "nothing-here").string()}) == 2);
}
