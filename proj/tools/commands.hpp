#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cli.hpp"
#include "synloc/corpus.hpp"
#include "synloc/engine.hpp"
#include "synloc/localizer.hpp"
#include "synloc/store.hpp"

namespace synloc::cli {

/// Loaded inputs shared by the analysis commands.
struct Session {
  ExperimentConfig config;
  std::vector<std::string> arguments;  // normalized command line
  std::unique_ptr<LanguageModel> model;
  std::unique_ptr<ActivationCache> cache;
  std::unique_ptr<Localizer> localizer;
  std::vector<Benchmark> benchmarks;
  std::size_t threads = 1;

  RunManifest manifest(const std::string& command) const;
};

/// Loads model, tokenizer, benchmarks and cache as configured.
Session open_session(const ExperimentConfig& config, std::vector<std::string> arguments, bool need_model);

int cmd_localize(Session& s);
int cmd_crossval(Session& s);
int cmd_ablate(Session& s);
int cmd_overlap(Session& s);
int cmd_crosslingual(Session& s);
int cmd_verify(const std::string& path);

/// Minimal CSV builder with fixed number formatting.
class Csv {
 public:
  explicit Csv(const std::string& run_id);
  Csv& header(const std::vector<std::string>& columns);
  Csv& row(const std::vector<std::string>& cells);
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

std::string fmt_pct(double v);   // 4 decimals
std::string fmt_real(double v);  // 10 significant digits
std::string fmt_opt(const std::optional<double>& v);

}  // namespace synloc::cli
