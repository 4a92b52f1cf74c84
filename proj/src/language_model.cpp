#include <cmath>

#include "synloc/digest.hpp"
#include "synloc/engine.hpp"
#include "synloc/error.hpp"
#include "synloc/parallel.hpp"

namespace synloc {

LanguageModel::LanguageModel(Transformer transformer, BpeTokenizer tokenizer)
    : transformer_(std::move(transformer)), tokenizer_(std::move(tokenizer)) {
  if (tokenizer_.vocab_size() > static_cast<std::size_t>(transformer_.config().vocab_size)) {
    throw DataError("tokenizer has " + std::to_string(tokenizer_.vocab_size()) + " tokens but the model only " +
                    std::to_string(transformer_.config().vocab_size));
  }
  hash_ = sha256_hex(transformer_.hash() + ":" + tokenizer_.hash());
}

LanguageModel LanguageModel::load(const std::filesystem::path& weights, const std::filesystem::path& tokenizer_dir) {
  return LanguageModel(Transformer::load(weights), BpeTokenizer::load_dir(tokenizer_dir));
}

std::vector<int> LanguageModel::model_input(const std::string& text) const {
  std::vector<int> ids;
  if (config().bos_token_id) ids.push_back(*config().bos_token_id);
  const auto body = tokenizer_.encode(text);
  ids.insert(ids.end(), body.begin(), body.end());
  if (ids.empty()) throw DataError("sentence produced no tokens: '" + text + "'");
  return ids;
}

double LanguageModel::sentence_logprob(const std::string& text, const AblationSpec& ablation) const {
  const auto ids = model_input(text);
  if (ids.size() < 2) throw DataError("sentence too short to score: '" + text + "'");
  const Matrix logits = transformer_.forward_logits(ids, ablation);
  double total = 0.0;
  for (std::size_t t = 1; t < ids.size(); ++t) total += log_softmax_at(logits.row(t - 1), ids[t]);
  if (!std::isfinite(total)) throw NumericError("non-finite log probability for '" + text + "'");
  return total;
}

std::vector<double> LanguageModel::sentence_logprobs(const std::vector<std::string>& texts,
                                                     const AblationSpec& ablation, std::size_t threads) const {
  std::vector<double> out(texts.size());
  parallel_for(texts.size(), threads, [&](std::size_t i) { out[i] = sentence_logprob(texts[i], ablation); });
  return out;
}

Matrix LanguageModel::capture_sentences(const std::vector<std::string>& texts, SiteSet sites, std::size_t threads,
                                        const AblationSpec& ablation) const {
  if (sites.empty()) throw ConfigError("no capture sites");
  const std::size_t width = layout(sites).total();
  Matrix out(texts.size(), width);
  parallel_for(texts.size(), threads, [&](std::size_t i) {
    const auto ids = model_input(texts[i]);
    const auto fwd = transformer_.forward(ids, ablation, &sites, false);
    for (float v : fwd.captured) {
      if (!std::isfinite(v)) throw NumericError("non-finite activation for '" + texts[i] + "'");
    }
    std::copy(fwd.captured.begin(), fwd.captured.end(), out.row(i).begin());
  });
  return out;
}

ActivationPair LanguageModel::capture_activations(const std::vector<MinimalPair>& pairs, SiteSet sites,
                                                  std::size_t threads) const {
  std::vector<std::string> texts;
  texts.reserve(2 * pairs.size());
  for (const auto& p : pairs) texts.push_back(p.sentence_good);
  for (const auto& p : pairs) texts.push_back(p.sentence_bad);
  Matrix all = capture_sentences(texts, sites, threads);
  ActivationPair out;
  out.layout = layout(sites);
  out.good = Matrix(pairs.size(), all.cols);
  out.bad = Matrix(pairs.size(), all.cols);
  const std::size_t half = pairs.size() * all.cols;
  std::copy(all.values.begin(), all.values.begin() + static_cast<std::ptrdiff_t>(half), out.good.values.begin());
  std::copy(all.values.begin() + static_cast<std::ptrdiff_t>(half), all.values.end(), out.bad.values.begin());
  return out;
}

}  // namespace synloc
