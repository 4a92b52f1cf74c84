#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "synloc/engine.hpp"
#include "synloc/random.hpp"

namespace synloc::testing {

inline std::filesystem::path fixtures() { return SYNLOC_FIXTURE_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("synloc-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline const LanguageModel& gpt2_fixture() {
  static const LanguageModel model =
      LanguageModel::load(fixtures() / "tiny_gpt2" / "model.safetensors", fixtures() / "tokenizer");
  return model;
}

inline const LanguageModel& llama_fixture() {
  static const LanguageModel model =
      LanguageModel::load(fixtures() / "tiny_llama" / "model.safetensors", fixtures() / "tokenizer");
  return model;
}

struct ToyOptions {
  float scale = 0.3f;
  bool zero_blocks = false;  // every block parameter zero, norm gains one
};

/// Random-weight toy in the canonical layout.
inline Transformer make_toy(ModelConfig c, std::uint64_t seed, ToyOptions opt = {}) {
  Rng rng(seed);
  TensorFile f;
  auto& t = f.mutable_tensors();
  auto random = [&](std::vector<std::int64_t> shape, float scale) {
    Tensor x;
    x.shape = shape;
    x.values.resize(static_cast<std::size_t>(x.numel()));
    for (auto& v : x.values) v = static_cast<float>((rng.uniform() * 2.0 - 1.0) * scale);
    return x;
  };
  auto fill = [](std::vector<std::int64_t> shape, float value) {
    Tensor x;
    x.shape = shape;
    x.values.assign(static_cast<std::size_t>(x.numel()), value);
    return x;
  };
  const std::int64_t h = c.hidden, v = c.vocab_size, inter = c.intermediate;
  const bool ln = c.norm_type == NormType::layernorm;
  auto weight = [&](std::vector<std::int64_t> shape) { return opt.zero_blocks ? fill(shape, 0.0f) : random(shape, opt.scale); };
  auto gain = [&]() { return opt.zero_blocks ? fill({h}, 1.0f) : random({h}, 0.5f); };
  t["tok_embed.weight"] = random({v, h}, 1.0f);
  if (c.position_scheme == PositionScheme::learned_absolute) t["pos_embed.weight"] = random({c.max_positions, h}, 0.5f);
  t["final_norm.weight"] = random({h}, 0.5f);
  for (auto& x : t["final_norm.weight"].values) x += 1.0f;
  if (ln) t["final_norm.bias"] = random({h}, 0.5f);
  t["lm_head.weight"] = random({v, h}, 1.0f);
  for (int i = 0; i < c.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    t[p + "attn_norm.weight"] = gain();
    t[p + "mlp_norm.weight"] = gain();
    if (!opt.zero_blocks) {
      for (auto& x : t[p + "attn_norm.weight"].values) x += 1.0f;
      for (auto& x : t[p + "mlp_norm.weight"].values) x += 1.0f;
    }
    if (ln) {
      t[p + "attn_norm.bias"] = weight({h});
      t[p + "mlp_norm.bias"] = weight({h});
    }
    for (const char* n : {"q", "k", "v", "o"}) {
      t[p + "attn." + n + "_proj.weight"] = weight({h, h});
      if (c.use_bias) t[p + "attn." + n + "_proj.bias"] = weight({h});
    }
    t[p + "mlp.up_proj.weight"] = weight({inter, h});
    if (c.use_bias) t[p + "mlp.up_proj.bias"] = weight({inter});
    if (c.activation == Activation::silu_gated) {
      t[p + "mlp.gate_proj.weight"] = weight({inter, h});
      if (c.use_bias) t[p + "mlp.gate_proj.bias"] = weight({inter});
    }
    t[p + "mlp.down_proj.weight"] = weight({h, inter});
    if (c.use_bias) t[p + "mlp.down_proj.bias"] = weight({h});
  }
  return Transformer(c, std::move(f), "toy-" + std::to_string(seed));
}

inline ModelConfig toy_config(int layers = 2, int hidden = 8, int vocab = 11) {
  ModelConfig c;
  c.architecture = "toy";
  c.n_layers = layers;
  c.hidden = hidden;
  c.n_heads = 2;
  c.intermediate = 2 * hidden;
  c.vocab_size = vocab;
  c.max_positions = 16;
  c.bos_token_id = 0;
  return c;
}

inline ModelConfig toy_rotary_config() {
  ModelConfig c = toy_config();
  c.activation = Activation::silu_gated;
  c.position_scheme = PositionScheme::rotary;
  c.norm_type = NormType::rmsnorm;
  c.use_bias = false;
  c.layernorm_epsilon = 1e-6;
  return c;
}

}  // namespace synloc::testing
