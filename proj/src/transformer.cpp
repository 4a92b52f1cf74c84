#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "synloc/digest.hpp"
#include "synloc/engine.hpp"
#include "synloc/error.hpp"

namespace synloc {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (n_layers < 1 || hidden < 1 || n_heads < 1 || intermediate < 1 || vocab_size < 1 || max_positions < 1) {
    throw DataError("model config: all counts must be >= 1");
  }
  if (hidden % n_heads != 0) throw DataError("model config: hidden must be divisible by n_heads");
  if (position_scheme == PositionScheme::rotary && (hidden / n_heads) % 2 != 0) {
    throw DataError("model config: rotary positions need an even head dimension");
  }
  if (!(layernorm_epsilon > 0.0) || !std::isfinite(layernorm_epsilon)) {
    throw DataError("model config: layernorm_epsilon must be positive");
  }
  if (bos_token_id && (*bos_token_id < 0 || *bos_token_id >= vocab_size)) {
    throw DataError("model config: bos_token_id out of range");
  }
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.architecture = j.value("architecture", std::string("custom"));
    c.n_layers = j.at("n_layers").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.intermediate = j.value("intermediate", 4 * c.hidden);
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.layernorm_epsilon = j.value("layernorm_epsilon", 1e-5);
    const auto act = j.value("activation", std::string("gelu"));
    if (act == "gelu") {
      c.activation = Activation::gelu;
    } else if (act == "silu-gated") {
      c.activation = Activation::silu_gated;
    } else {
      throw DataError("model config: unsupported activation '" + act + "'");
    }
    const auto pos = j.value("position_scheme", std::string("learned-absolute"));
    if (pos == "learned-absolute") {
      c.position_scheme = PositionScheme::learned_absolute;
    } else if (pos == "rotary") {
      c.position_scheme = PositionScheme::rotary;
    } else {
      throw DataError("model config: unsupported position scheme '" + pos + "'");
    }
    if (j.value("norm_scheme", std::string("pre-norm")) != "pre-norm") {
      throw DataError("model config: only pre-norm decoders are supported");
    }
    const auto norm = j.value("norm_type", std::string("layernorm"));
    if (norm == "layernorm") {
      c.norm_type = NormType::layernorm;
    } else if (norm == "rmsnorm") {
      c.norm_type = NormType::rmsnorm;
    } else {
      throw DataError("model config: unsupported norm type '" + norm + "'");
    }
    c.rope_theta = j.value("rope_theta", 10000.0);
    if (j.contains("bos_token_id") && !j["bos_token_id"].is_null()) c.bos_token_id = j["bos_token_id"].get<int>();
    c.use_bias = j.value("use_bias", true);
    if (j.contains("n_kv_heads") && j["n_kv_heads"].get<int>() != c.n_heads) {
      throw DataError("model config: grouped-query attention is not supported");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["architecture"] = architecture;
  j["n_layers"] = n_layers;
  j["hidden"] = hidden;
  j["n_heads"] = n_heads;
  j["intermediate"] = intermediate;
  j["vocab_size"] = vocab_size;
  j["max_positions"] = max_positions;
  j["layernorm_epsilon"] = layernorm_epsilon;
  j["activation"] = activation == Activation::gelu ? "gelu" : "silu-gated";
  j["position_scheme"] = position_scheme == PositionScheme::rotary ? "rotary" : "learned-absolute";
  j["norm_scheme"] = "pre-norm";
  j["norm_type"] = norm_type == NormType::layernorm ? "layernorm" : "rmsnorm";
  j["rope_theta"] = rope_theta;
  j["bos_token_id"] = bos_token_id ? nlohmann::ordered_json(*bos_token_id) : nlohmann::ordered_json(nullptr);
  j["use_bias"] = use_bias;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace {

// Fixed-order dot product: eight interleaved partial sums combined in a fixed
// tree, so results do not depend on alignment or thread count.
inline float dot(const float* a, const float* b, std::size_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

// y[rows x out] = x[rows x in] * W^T + b, with W stored [out x in].
void linear(const float* x, std::size_t rows, std::size_t in, const float* w, const float* b, std::size_t out,
            float* y) {
  for (std::size_t t = 0; t < rows; ++t) {
    const float* xr = x + t * in;
    float* yr = y + t * out;
    for (std::size_t o = 0; o < out; ++o) yr[o] = dot(xr, w + o * in, in) + (b ? b[o] : 0.0f);
  }
}

void layer_norm(const float* x, std::size_t rows, std::size_t n, const float* w, const float* b, double eps,
                float* y) {
  for (std::size_t t = 0; t < rows; ++t) {
    const float* xr = x + t * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xr[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = xr[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    float* yr = y + t * n;
    for (std::size_t i = 0; i < n; ++i) {
      yr[i] = static_cast<float>((xr[i] - mean) * inv) * w[i] + (b ? b[i] : 0.0f);
    }
  }
}

void rms_norm(const float* x, std::size_t rows, std::size_t n, const float* w, double eps, float* y) {
  for (std::size_t t = 0; t < rows; ++t) {
    const float* xr = x + t * n;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += static_cast<double>(xr[i]) * xr[i];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    float* yr = y + t * n;
    for (std::size_t i = 0; i < n; ++i) yr[i] = w[i] * static_cast<float>(xr[i] * inv);
  }
}

inline float gelu_tanh(float v) {
  const double x = v;
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return static_cast<float>(0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x))));
}

inline float silu(float v) {
  const double x = v;
  return static_cast<float>(x / (1.0 + std::exp(-x)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Transformer
// ---------------------------------------------------------------------------

struct Transformer::Layer {
  const float* attn_norm_w = nullptr;
  const float* attn_norm_b = nullptr;
  const float* q_w = nullptr;
  const float* q_b = nullptr;
  const float* k_w = nullptr;
  const float* k_b = nullptr;
  const float* v_w = nullptr;
  const float* v_b = nullptr;
  const float* o_w = nullptr;
  const float* o_b = nullptr;
  const float* mlp_norm_w = nullptr;
  const float* mlp_norm_b = nullptr;
  const float* up_w = nullptr;
  const float* up_b = nullptr;
  const float* gate_w = nullptr;
  const float* gate_b = nullptr;
  const float* down_w = nullptr;
  const float* down_b = nullptr;
};

Transformer Transformer::load(const std::filesystem::path& path) {
  TensorFile file = TensorFile::load(path);
  auto it = file.metadata().find("config");
  if (it == file.metadata().end()) throw DataError(path.string() + ": no config in weight file metadata");
  ModelConfig config = ModelConfig::from_json(it->second);
  return Transformer(std::move(config), std::move(file), sha256_file(path));
}

Transformer::Transformer(ModelConfig config, TensorFile weights, std::string hash)
    : config_(std::move(config)),
      weights_(std::move(weights)),
      hash_(std::move(hash)),
      forward_count_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
  config_.validate();
  bind();
}

Transformer::Transformer(Transformer&& other) noexcept
    : config_(std::move(other.config_)),
      weights_(std::move(other.weights_)),
      hash_(std::move(other.hash_)),
      forward_count_(std::move(other.forward_count_)) {
  bind();
}

Transformer::~Transformer() = default;

void Transformer::bind() {
  const auto& c = config_;
  const std::int64_t h = c.hidden;
  const std::int64_t inter = c.intermediate;
  const std::int64_t v = c.vocab_size;

  auto get = [&](const std::string& name, std::vector<std::int64_t> shape) -> const float* {
    if (!weights_.contains(name)) throw DataError("weight file is missing tensor '" + name + "'");
    const Tensor& t = weights_.at(name);
    if (t.shape != shape) {
      std::string want, got;
      for (auto d : shape) want += std::to_string(d) + ",";
      for (auto d : t.shape) got += std::to_string(d) + ",";
      throw DataError("tensor '" + name + "' has shape [" + got + "], expected [" + want + "]");
    }
    for (float x : t.values) {
      if (!std::isfinite(x)) throw DataError("tensor '" + name + "' contains non-finite values");
    }
    return t.values.data();
  };
  auto bias = [&](const std::string& name, std::int64_t n) -> const float* {
    return c.use_bias ? get(name, {n}) : nullptr;
  };
  const bool layernorm = c.norm_type == NormType::layernorm;

  tok_embed_ = get("tok_embed.weight", {v, h});
  pos_embed_ = c.position_scheme == PositionScheme::learned_absolute
                   ? get("pos_embed.weight", {c.max_positions, h})
                   : nullptr;
  final_norm_w_ = get("final_norm.weight", {h});
  final_norm_b_ = layernorm ? get("final_norm.bias", {h}) : nullptr;
  lm_head_ = weights_.contains("lm_head.weight") ? get("lm_head.weight", {v, h}) : tok_embed_;

  layers_.assign(static_cast<std::size_t>(c.n_layers), Layer{});
  for (int i = 0; i < c.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    Layer& l = layers_[static_cast<std::size_t>(i)];
    l.attn_norm_w = get(p + "attn_norm.weight", {h});
    l.attn_norm_b = layernorm ? get(p + "attn_norm.bias", {h}) : nullptr;
    l.mlp_norm_w = get(p + "mlp_norm.weight", {h});
    l.mlp_norm_b = layernorm ? get(p + "mlp_norm.bias", {h}) : nullptr;
    l.q_w = get(p + "attn.q_proj.weight", {h, h});
    l.k_w = get(p + "attn.k_proj.weight", {h, h});
    l.v_w = get(p + "attn.v_proj.weight", {h, h});
    l.o_w = get(p + "attn.o_proj.weight", {h, h});
    l.q_b = bias(p + "attn.q_proj.bias", h);
    l.k_b = bias(p + "attn.k_proj.bias", h);
    l.v_b = bias(p + "attn.v_proj.bias", h);
    l.o_b = bias(p + "attn.o_proj.bias", h);
    l.up_w = get(p + "mlp.up_proj.weight", {inter, h});
    l.up_b = bias(p + "mlp.up_proj.bias", inter);
    if (c.activation == Activation::silu_gated) {
      l.gate_w = get(p + "mlp.gate_proj.weight", {inter, h});
      l.gate_b = bias(p + "mlp.gate_proj.bias", inter);
    }
    l.down_w = get(p + "mlp.down_proj.weight", {h, inter});
    l.down_b = bias(p + "mlp.down_proj.bias", h);
  }

  rope_inv_freq_.clear();
  if (c.position_scheme == PositionScheme::rotary) {
    const int dim = c.hidden / c.n_heads;
    const float base = static_cast<float>(c.rope_theta);
    for (int i = 0; i < dim; i += 2) {
      rope_inv_freq_.push_back(1.0f / std::pow(base, static_cast<float>(i) / static_cast<float>(dim)));
    }
  }
}

Matrix Transformer::forward_logits(std::span<const int> ids, const AblationSpec& ablation) const {
  return forward(ids, ablation, nullptr, true).logits;
}

namespace {

// Ablation targets grouped by (site, layer).
struct CompiledAblation {
  bool active = false;
  bool last_only = false;
  float value = 0.0f;
  std::vector<std::vector<int>> channels;  // [site * n_layers + layer]

  const std::vector<int>& at(Site s, int layer, int n_layers) const {
    return channels[static_cast<std::size_t>(s) * n_layers + layer];
  }
};

CompiledAblation compile(const AblationSpec& spec, const ModelConfig& c) {
  CompiledAblation out;
  if (spec.is_noop()) return out;
  if (spec.mode == AblationMode::mean && !std::isfinite(spec.value)) {
    throw NumericError("mean ablation value must be finite");
  }
  out.active = true;
  out.last_only = spec.application == AblationApplication::last_position;
  out.value = spec.mode == AblationMode::zero ? 0.0f : spec.value;
  out.channels.assign(3 * static_cast<std::size_t>(c.n_layers), {});
  for (const UnitId& u : spec.targets) {
    if (u.layer < 0 || u.layer >= c.n_layers || u.channel < 0 || u.channel >= c.hidden) {
      throw ConfigError("ablation target (" + std::string(to_string(u.site)) + "," + std::to_string(u.layer) +
                        "," + std::to_string(u.channel) + ") is outside the model");
    }
    out.channels[static_cast<std::size_t>(u.site) * c.n_layers + u.layer].push_back(u.channel);
  }
  return out;
}

}  // namespace

ForwardOutput Transformer::forward(std::span<const int> ids, const AblationSpec& ablation, const SiteSet* capture,
                                   bool want_logits) const {
  const auto& c = config_;
  const std::size_t T = ids.size();
  const std::size_t H = static_cast<std::size_t>(c.hidden);
  const std::size_t I = static_cast<std::size_t>(c.intermediate);
  const std::size_t V = static_cast<std::size_t>(c.vocab_size);
  const std::size_t n_heads = static_cast<std::size_t>(c.n_heads);
  const std::size_t hd = H / n_heads;
  if (T == 0) throw DataError("empty token sequence");
  if (T > static_cast<std::size_t>(c.max_positions)) {
    throw DataError("sequence too long: " + std::to_string(T) + " tokens > max_positions " +
                    std::to_string(c.max_positions));
  }
  for (int id : ids) {
    if (id < 0 || id >= c.vocab_size) throw DataError("token id " + std::to_string(id) + " out of range");
  }
  const CompiledAblation ab = compile(ablation, c);
  forward_count_->fetch_add(1, std::memory_order_relaxed);

  ForwardOutput out;
  if (capture != nullptr) out.captured.assign(capture->size() * c.n_layers * H, 0.0f);

  auto hook = [&](Site site, int layer, float* data) {
    if (ab.active) {
      const auto& chans = ab.at(site, layer, c.n_layers);
      if (!chans.empty()) {
        for (std::size_t t = ab.last_only ? T - 1 : 0; t < T; ++t) {
          for (int ch : chans) data[t * H + static_cast<std::size_t>(ch)] = ab.value;
        }
      }
    }
    if (capture != nullptr && capture->contains(site)) {
      const std::size_t offset = (capture->rank(site) * c.n_layers + static_cast<std::size_t>(layer)) * H;
      std::copy_n(data + (T - 1) * H, H, out.captured.begin() + static_cast<std::ptrdiff_t>(offset));
    }
  };

  std::vector<float> x(T * H);
  for (std::size_t t = 0; t < T; ++t) {
    const float* e = tok_embed_ + static_cast<std::size_t>(ids[t]) * H;
    for (std::size_t i = 0; i < H; ++i) x[t * H + i] = e[i] + (pos_embed_ ? pos_embed_[t * H + i] : 0.0f);
  }

  std::vector<float> normed(T * H), q(T * H), k(T * H), v(T * H), attn(T * H), proj(T * H);
  std::vector<float> up(T * I), gate(c.activation == Activation::silu_gated ? T * I : 0);
  std::vector<float> scores(T);
  std::vector<float> cos_table, sin_table;
  if (c.position_scheme == PositionScheme::rotary) {
    const std::size_t half = hd / 2;
    cos_table.resize(T * half);
    sin_table.resize(T * half);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t i = 0; i < half; ++i) {
        const float angle = static_cast<float>(t) * rope_inv_freq_[i];
        cos_table[t * half + i] = std::cos(angle);
        sin_table[t * half + i] = std::sin(angle);
      }
    }
  }
  auto rotate = [&](std::vector<float>& m) {
    const std::size_t half = hd / 2;
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t h = 0; h < n_heads; ++h) {
        float* r = m.data() + t * H + h * hd;
        for (std::size_t i = 0; i < half; ++i) {
          const float cs = cos_table[t * half + i];
          const float sn = sin_table[t * half + i];
          const float a = r[i];
          const float b = r[i + half];
          r[i] = a * cs - b * sn;
          r[i + half] = b * cs + a * sn;
        }
      }
    }
  };
  auto norm = [&](const float* w, const float* b, float* dst) {
    if (c.norm_type == NormType::layernorm) {
      layer_norm(x.data(), T, H, w, b, c.layernorm_epsilon, dst);
    } else {
      rms_norm(x.data(), T, H, w, c.layernorm_epsilon, dst);
    }
  };
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  for (int li = 0; li < c.n_layers; ++li) {
    const Layer& l = layers_[static_cast<std::size_t>(li)];

    norm(l.attn_norm_w, l.attn_norm_b, normed.data());
    linear(normed.data(), T, H, l.q_w, l.q_b, H, q.data());
    linear(normed.data(), T, H, l.k_w, l.k_b, H, k.data());
    linear(normed.data(), T, H, l.v_w, l.v_b, H, v.data());
    if (c.position_scheme == PositionScheme::rotary) {
      rotate(q);
      rotate(k);
    }
    std::fill(attn.begin(), attn.end(), 0.0f);
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        const float* qt = q.data() + t * H + h * hd;
        float mx = -INFINITY;
        for (std::size_t s = 0; s <= t; ++s) {  // causal: keys at positions <= t
          scores[s] = dot(qt, k.data() + s * H + h * hd, hd) * scale;
          mx = std::max(mx, scores[s]);
        }
        double denom = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          scores[s] = std::exp(scores[s] - mx);
          denom += scores[s];
        }
        const float inv = static_cast<float>(1.0 / denom);
        float* ot = attn.data() + t * H + h * hd;
        for (std::size_t s = 0; s <= t; ++s) {
          const float p = scores[s] * inv;
          const float* vs = v.data() + s * H + h * hd;
          for (std::size_t i = 0; i < hd; ++i) ot[i] += p * vs[i];
        }
      }
    }
    linear(attn.data(), T, H, l.o_w, l.o_b, H, proj.data());
    hook(Site::attn_out, li, proj.data());
    for (std::size_t i = 0; i < T * H; ++i) x[i] += proj[i];

    norm(l.mlp_norm_w, l.mlp_norm_b, normed.data());
    linear(normed.data(), T, H, l.up_w, l.up_b, I, up.data());
    if (c.activation == Activation::silu_gated) {
      linear(normed.data(), T, H, l.gate_w, l.gate_b, I, gate.data());
      for (std::size_t i = 0; i < T * I; ++i) up[i] = silu(gate[i]) * up[i];
    } else {
      for (std::size_t i = 0; i < T * I; ++i) up[i] = gelu_tanh(up[i]);
    }
    linear(up.data(), T, I, l.down_w, l.down_b, H, proj.data());
    hook(Site::mlp_out, li, proj.data());
    for (std::size_t i = 0; i < T * H; ++i) x[i] += proj[i];

    hook(Site::residual, li, x.data());
  }

  if (want_logits) {
    norm(final_norm_w_, final_norm_b_, normed.data());
    out.logits = Matrix(T, V);
    linear(normed.data(), T, H, lm_head_, nullptr, V, out.logits.values.data());
  }
  return out;
}

double log_softmax_at(std::span<const float> row, int target) {
  double mx = -INFINITY;
  for (float x : row) mx = std::max(mx, static_cast<double>(x));
  double sum = 0.0;
  for (float x : row) sum += std::exp(static_cast<double>(x) - mx);
  return static_cast<double>(row[static_cast<std::size_t>(target)]) - mx - std::log(sum);
}

}  // namespace synloc
