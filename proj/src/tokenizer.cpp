#include "synloc/tokenizer.hpp"

#include <unicode/uchar.h>

#include <array>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "synloc/digest.hpp"
#include "synloc/error.hpp"

namespace synloc {

namespace {

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// One decoded code point with its byte range. Invalid UTF-8 bytes become
// single-byte units with cp = -1 so that no input byte is ever lost.
struct Unit {
  std::size_t begin;
  std::size_t end;
  std::int32_t cp;
};

std::vector<Unit> decode_units(std::string_view s) {
  std::vector<Unit> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::int32_t cp = -1;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    bool valid = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; valid && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) {
        valid = false;
      } else {
        cp = (cp << 6) | (cc & 0x3F);
      }
    }
    if (valid) {
      static constexpr std::array<std::int32_t, 5> kMin{0, 0, 0x80, 0x800, 0x10000};
      if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) valid = false;
    }
    if (!valid) {
      out.push_back({i, i + 1, -1});
      ++i;
    } else {
      out.push_back({i, i + len, cp});
      i += len;
    }
  }
  return out;
}

enum class Cls { letter, number, space, other };

Cls classify(std::int32_t cp) {
  if (cp < 0) return Cls::other;
  if (u_isUWhiteSpace(cp)) return Cls::space;
  switch (u_charType(cp)) {
    case U_UPPERCASE_LETTER:
    case U_LOWERCASE_LETTER:
    case U_TITLECASE_LETTER:
    case U_MODIFIER_LETTER:
    case U_OTHER_LETTER:
      return Cls::letter;
    case U_DECIMAL_DIGIT_NUMBER:
    case U_LETTER_NUMBER:
    case U_OTHER_NUMBER:
      return Cls::number;
    default:
      return Cls::other;
  }
}

// GPT-2 byte -> printable code point table.
struct ByteTable {
  std::array<std::string, 256> byte_to_text;
  std::unordered_map<char32_t, unsigned char> cp_to_byte;

  ByteTable() {
    std::array<bool, 256> printable{};
    for (int b = '!'; b <= '~'; ++b) printable[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) printable[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) printable[b] = true;
    char32_t extra = 256;
    for (int b = 0; b < 256; ++b) {
      const char32_t cp = printable[b] ? static_cast<char32_t>(b) : extra++;
      append_utf8(byte_to_text[b], cp);
      cp_to_byte[cp] = static_cast<unsigned char>(b);
    }
  }
};

const ByteTable& byte_table() {
  static const ByteTable table;
  return table;
}

std::string pair_key(const std::string& a, const std::string& b) {
  std::string key;
  key.reserve(a.size() + b.size() + 1);
  key += a;
  key += ' ';
  key += b;
  return key;
}

}  // namespace

std::vector<std::string> BpeTokenizer::pretokenize(std::string_view text) {
  const auto units = decode_units(text);
  const std::size_t n = units.size();
  std::vector<Cls> cls(n);
  for (std::size_t i = 0; i < n; ++i) cls[i] = classify(units[i].cp);
  auto cp_is = [&](std::size_t i, char c) { return i < n && units[i].cp == c; };

  std::vector<std::string> out;
  std::size_t i = 0;
  auto emit = [&](std::size_t from, std::size_t to) {
    out.emplace_back(text.substr(units[from].begin, units[to - 1].end - units[from].begin));
    i = to;
  };
  auto run = [&](std::size_t from, Cls c) {
    std::size_t j = from;
    while (j < n && cls[j] == c) ++j;
    return j;
  };

  while (i < n) {
    // contractions
    if (cp_is(i, '\'')) {
      if (cp_is(i + 1, 's') || cp_is(i + 1, 't') || cp_is(i + 1, 'm') || cp_is(i + 1, 'd')) {
        emit(i, i + 2);
        continue;
      }
      if ((cp_is(i + 1, 'r') && cp_is(i + 2, 'e')) || (cp_is(i + 1, 'v') && cp_is(i + 2, 'e')) ||
          (cp_is(i + 1, 'l') && cp_is(i + 2, 'l'))) {
        emit(i, i + 3);
        continue;
      }
    }
    // optional single space followed by a letter / number / symbol run
    const std::size_t head = (cp_is(i, ' ') && i + 1 < n && cls[i + 1] != Cls::space) ? i + 1 : i;
    if (cls[head] != Cls::space) {
      emit(i, run(head, cls[head]));
      continue;
    }
    // whitespace: leave the last one to prefix the next word
    const std::size_t j = run(i, Cls::space);
    if (j == n) {
      emit(i, j);
    } else if (j - i >= 2) {
      emit(i, j - 1);
    } else {
      emit(i, j);
    }
  }
  return out;
}

BpeTokenizer::BpeTokenizer(std::unordered_map<std::string, int> vocab,
                           std::vector<std::pair<std::string, std::string>> merges)
    : vocab_(std::move(vocab)) {
  int max_id = -1;
  for (const auto& [tok, id] : vocab_) {
    if (id < 0) throw DataError("tokenizer vocab has a negative id for '" + tok + "'");
    max_id = std::max(max_id, id);
  }
  id_to_token_.assign(static_cast<std::size_t>(max_id + 1), std::string());
  for (const auto& [tok, id] : vocab_) id_to_token_[static_cast<std::size_t>(id)] = tok;
  for (int b = 0; b < 256; ++b) {
    if (!vocab_.count(byte_table().byte_to_text[b])) {
      throw DataError("tokenizer vocab is missing the base token for byte " + std::to_string(b));
    }
  }
  Sha256 h;
  for (std::size_t id = 0; id < id_to_token_.size(); ++id) {
    h.update(id_to_token_[id]);
    h.update(std::string_view("\0", 1));
  }
  for (std::size_t r = 0; r < merges.size(); ++r) {
    merge_rank_.emplace(pair_key(merges[r].first, merges[r].second), static_cast<int>(r));
    h.update(merges[r].first + " " + merges[r].second + "\n");
  }
  hash_ = h.hex();
}

BpeTokenizer BpeTokenizer::load(const std::filesystem::path& vocab_json,
                                const std::filesystem::path& merges_txt) {
  std::ifstream vin(vocab_json);
  if (!vin) throw DataError("cannot open tokenizer vocab " + vocab_json.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(vin);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(vocab_json.string() + ": " + e.what());
  }
  std::unordered_map<std::string, int> vocab;
  for (const auto& [tok, id] : doc.items()) {
    if (!id.is_number_integer()) throw DataError(vocab_json.string() + ": non-integer id for '" + tok + "'");
    vocab.emplace(tok, id.get<int>());
  }
  std::ifstream min(merges_txt);
  if (!min) throw DataError("cannot open tokenizer merges " + merges_txt.string());
  std::vector<std::pair<std::string, std::string>> merges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(min, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("#version", 0) == 0) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 == line.size()) {
      throw DataError(merges_txt.string() + ":" + std::to_string(line_no) + ": malformed merge");
    }
    merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return BpeTokenizer(std::move(vocab), std::move(merges));
}

BpeTokenizer BpeTokenizer::load_dir(const std::filesystem::path& dir) {
  return load(dir / "vocab.json", dir / "merges.txt");
}

std::optional<int> BpeTokenizer::token_id(const std::string& token) const {
  auto it = vocab_.find(token);
  if (it == vocab_.end()) return std::nullopt;
  return it->second;
}

void BpeTokenizer::bpe(const std::string& piece, std::vector<int>& out) const {
  const auto& table = byte_table();
  std::vector<std::string> symbols;
  symbols.reserve(piece.size());
  for (unsigned char c : piece) symbols.push_back(table.byte_to_text[c]);

  while (symbols.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    std::size_t best = 0;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      auto it = merge_rank_.find(pair_key(symbols[k], symbols[k + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = k;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const std::string left = symbols[best];
    const std::string right = symbols[best + 1];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t k = 0; k < symbols.size();) {
      if (k + 1 < symbols.size() && symbols[k] == left && symbols[k + 1] == right) {
        merged.push_back(left + right);
        k += 2;
      } else {
        merged.push_back(std::move(symbols[k]));
        ++k;
      }
    }
    symbols = std::move(merged);
  }

  for (const auto& sym : symbols) {
    if (auto it = vocab_.find(sym); it != vocab_.end()) {
      out.push_back(it->second);
      continue;
    }
    // merged symbol missing from vocab: fall back to its byte tokens
    for (const auto& unit : decode_units(sym)) {
      const std::string ch = sym.substr(unit.begin, unit.end - unit.begin);
      out.push_back(vocab_.at(ch));
    }
  }
}

std::vector<int> BpeTokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& piece : pretokenize(text)) bpe(piece, ids);
  return ids;
}

std::string BpeTokenizer::decode(const std::vector<int>& ids) const {
  std::string joined;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
      throw DataError("token id " + std::to_string(id) + " out of range");
    }
    joined += id_to_token_[static_cast<std::size_t>(id)];
  }
  const auto& table = byte_table();
  std::string out;
  out.reserve(joined.size());
  for (const auto& unit : decode_units(joined)) {
    auto it = unit.cp >= 0 ? table.cp_to_byte.find(static_cast<char32_t>(unit.cp)) : table.cp_to_byte.end();
    if (it != table.cp_to_byte.end()) {
      out.push_back(static_cast<char>(it->second));
    } else {
      out.append(joined, unit.begin, unit.end - unit.begin);
    }
  }
  return out;
}

}  // namespace synloc
