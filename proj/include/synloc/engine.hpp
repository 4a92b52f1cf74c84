#pragma once

#include <atomic>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synloc/corpus.hpp"
#include "synloc/tensor_file.hpp"
#include "synloc/tokenizer.hpp"

namespace synloc {

// ---------------------------------------------------------------------------
// Units and capture sites
// ---------------------------------------------------------------------------

/// Capture sites. Declaration order is the unit total order.
enum class Site : std::uint8_t {
  residual = 0,  // block output after its second residual addition
  attn_out = 1,  // attention output after out-projection, before residual add
  mlp_out = 2,   // MLP output after down-projection, before residual add
};

const char* to_string(Site site);
Site parse_site(const std::string& name);

struct UnitId {
  Site site = Site::residual;
  int layer = 0;
  int channel = 0;

  auto operator<=>(const UnitId&) const = default;
};

/// Non-empty set of sites, always iterated in Site order.
class SiteSet {
 public:
  SiteSet() = default;
  explicit SiteSet(std::initializer_list<Site> sites);
  /// Comma-separated names, e.g. "residual" or "attn_out,mlp_out".
  static SiteSet parse(const std::string& spec);

  bool contains(Site s) const { return (mask_ >> static_cast<unsigned>(s)) & 1U; }
  bool empty() const { return mask_ == 0; }
  std::size_t size() const;
  std::vector<Site> sites() const;
  /// Position of `s` within this set (its block index in unit order).
  std::size_t rank(Site s) const;
  std::string to_string() const;
  std::uint8_t mask() const { return mask_; }

  bool operator==(const SiteSet&) const = default;

 private:
  std::uint8_t mask_ = 0;
};

/// Column layout of a capture: sites (in order) x layers x channels.
struct UnitLayout {
  SiteSet sites;
  int n_layers = 0;
  int hidden = 0;

  std::size_t total() const { return sites.size() * static_cast<std::size_t>(n_layers) * hidden; }
  UnitId unit_at(std::size_t index) const;
  std::size_t index_of(const UnitId& u) const;
  bool valid(const UnitId& u) const;

  bool operator==(const UnitLayout&) const = default;
};

// ---------------------------------------------------------------------------
// Interventions
// ---------------------------------------------------------------------------

enum class AblationMode { none, zero, mean };
enum class AblationApplication { all_positions, last_position };

const char* to_string(AblationMode mode);
const char* to_string(AblationApplication app);
AblationMode parse_ablation_mode(const std::string& s);
AblationApplication parse_ablation_application(const std::string& s);

struct AblationSpec {
  AblationMode mode = AblationMode::none;
  float value = 0.0f;  // replacement for mode == mean
  std::vector<UnitId> targets;
  AblationApplication application = AblationApplication::all_positions;

  static AblationSpec none() { return {}; }
  static AblationSpec zero(std::vector<UnitId> targets,
                           AblationApplication app = AblationApplication::all_positions);
  static AblationSpec mean(float m, std::vector<UnitId> targets,
                           AblationApplication app = AblationApplication::all_positions);

  bool is_noop() const { return mode == AblationMode::none || targets.empty(); }
  std::string summary() const;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

enum class Activation { gelu, silu_gated };
enum class PositionScheme { learned_absolute, rotary };
enum class NormType { layernorm, rmsnorm };

struct ModelConfig {
  std::string architecture;  // informational: "gpt2", "llama", ...
  int n_layers = 0;
  int hidden = 0;
  int n_heads = 0;
  int intermediate = 0;
  int vocab_size = 0;
  int max_positions = 0;
  double layernorm_epsilon = 1e-5;
  Activation activation = Activation::gelu;  // gelu = tanh approximation
  PositionScheme position_scheme = PositionScheme::learned_absolute;
  NormType norm_type = NormType::layernorm;  // always applied pre-norm
  double rope_theta = 10000.0;
  std::optional<int> bos_token_id;
  bool use_bias = true;

  void validate() const;
  static ModelConfig from_json(const std::string& text);
  std::string to_json() const;
};

/// Row-major float matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0f) {}

  std::span<float> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  float& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  float at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  bool operator==(const Matrix&) const = default;
};

struct ForwardOutput {
  Matrix logits;                // positions x vocab; empty unless requested
  std::vector<float> captured;  // final-position values in UnitLayout order
};

/// Immutable decoder-only transformer. All methods are const and safe to
/// call concurrently; every forward pass owns its scratch buffers.
class Transformer {
 public:
  /// Loads the canonical weight file and checks every tensor shape.
  static Transformer load(const std::filesystem::path& path);
  Transformer(ModelConfig config, TensorFile weights, std::string hash);

  Transformer(Transformer&& other) noexcept;
  Transformer& operator=(Transformer&&) = delete;
  Transformer(const Transformer&) = delete;
  ~Transformer();

  const ModelConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  UnitLayout layout(SiteSet sites) const { return {sites, config_.n_layers, config_.hidden}; }

  /// Per-position logits (positions x vocab).
  Matrix forward_logits(std::span<const int> ids, const AblationSpec& ablation = {}) const;

  /// General pass: optionally computes logits and captures the final
  /// position's values at `capture` sites (after any ablation is applied).
  ForwardOutput forward(std::span<const int> ids, const AblationSpec& ablation,
                        const SiteSet* capture, bool want_logits) const;

  /// Number of forward passes executed so far (instrumentation).
  std::uint64_t forward_count() const { return forward_count_->load(); }

 private:
  struct Layer;
  void bind();

  ModelConfig config_;
  TensorFile weights_;
  std::string hash_;
  std::vector<Layer> layers_;
  const float* tok_embed_ = nullptr;
  const float* pos_embed_ = nullptr;
  const float* final_norm_w_ = nullptr;
  const float* final_norm_b_ = nullptr;
  const float* lm_head_ = nullptr;
  std::vector<float> rope_inv_freq_;
  std::unique_ptr<std::atomic<std::uint64_t>> forward_count_;
};

/// Good/bad activation matrices for a list of minimal pairs.
struct ActivationPair {
  Matrix good;
  Matrix bad;
  UnitLayout layout;
};

/// Transformer plus tokenizer: the scoring and capture backend.
class LanguageModel {
 public:
  LanguageModel(Transformer transformer, BpeTokenizer tokenizer);
  static LanguageModel load(const std::filesystem::path& weights, const std::filesystem::path& tokenizer_dir);

  const Transformer& transformer() const { return transformer_; }
  const BpeTokenizer& tokenizer() const { return tokenizer_; }
  const ModelConfig& config() const { return transformer_.config(); }
  /// Identity of weights + tokenizer.
  const std::string& hash() const { return hash_; }
  UnitLayout layout(SiteSet sites) const { return transformer_.layout(sites); }

  std::vector<int> tokenize(const std::string& text) const { return tokenizer_.encode(text); }
  /// Token ids fed to the network: BOS (when defined) + tokenize(text).
  std::vector<int> model_input(const std::string& text) const;

  /// Total log probability in nats: sum over t >= 1 of
  /// log softmax(logits[t-1])[ids[t]] on model_input(text).
  double sentence_logprob(const std::string& text, const AblationSpec& ablation = {}) const;
  std::vector<double> sentence_logprobs(const std::vector<std::string>& texts, const AblationSpec& ablation,
                                        std::size_t threads) const;

  /// Final-token activations, one row per sentence.
  Matrix capture_sentences(const std::vector<std::string>& texts, SiteSet sites, std::size_t threads,
                           const AblationSpec& ablation = {}) const;
  ActivationPair capture_activations(const std::vector<MinimalPair>& pairs, SiteSet sites,
                                     std::size_t threads) const;

 private:
  Transformer transformer_;
  BpeTokenizer tokenizer_;
  std::string hash_;
};

/// log softmax(row)[target], accumulated in double.
double log_softmax_at(std::span<const float> row, int target);

}  // namespace synloc
