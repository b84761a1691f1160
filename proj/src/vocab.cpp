#include "pbg2p/vocab.hpp"

#include <algorithm>

#include "pbg2p/errors.hpp"
#include "pbg2p/utf8.hpp"

namespace pbg2p {

VocabMap VocabMap::build(std::vector<std::string> base_tokens, const Lexicon& lexicon) {
  if (base_tokens.size() < special::kCount) {
    throw ConfigError("base vocabulary must start with the special tokens");
  }
  VocabMap v;
  for (std::size_t i = 0; i < special::kCount; ++i) {
    if (base_tokens[i] != special::kNames[i]) {
      throw ConfigError("base token " + std::to_string(i) + " must be " +
                        std::string(special::kNames[i]) + ", got " + base_tokens[i]);
    }
    v.special_ids_.emplace(base_tokens[i], static_cast<TokenId>(i));
  }
  for (std::size_t i = special::kCount; i < base_tokens.size(); ++i) {
    std::u32string chars;
    try {
      chars = utf8::decode(base_tokens[i]);
    } catch (const ParseError&) {
      throw ConfigError("base token " + std::to_string(i) + " is not valid UTF-8");
    }
    if (chars.size() != 1) continue;  // multi-character tokens are never emitted by encode
    if (!v.char_ids_.emplace(chars[0], static_cast<TokenId>(i)).second) {
      throw ConfigError("duplicate base token '" + base_tokens[i] + "'");
    }
  }
  v.base_tokens_ = std::move(base_tokens);

  auto next = static_cast<TokenId>(v.base_tokens_.size());
  for (const auto& [c, entry] : lexicon.entries()) {
    if (!v.char_ids_.count(c)) {
      throw ConfigError("polyphone '" + utf8::encode(c) + "' is not in the base vocabulary");
    }
    auto& cands = v.candidates_[c];
    for (std::size_t r = 0; r < entry.readings.size(); ++r) {
      v.ncmcs_.push_back({c, r, entry.readings[r]});
      cands.push_back({entry.readings[r], next++});
    }
  }
  return v;
}

std::vector<std::string> VocabMap::base_tokens_for(std::u32string chars) {
  std::sort(chars.begin(), chars.end());
  chars.erase(std::unique(chars.begin(), chars.end()), chars.end());
  std::vector<std::string> tokens(std::begin(special::kNames), std::end(special::kNames));
  for (char32_t c : chars) tokens.push_back(utf8::encode(c));
  return tokens;
}

std::optional<TokenId> VocabMap::find_char(char32_t c) const {
  const auto it = char_ids_.find(c);
  if (it == char_ids_.end()) return std::nullopt;
  return it->second;
}

bool VocabMap::is_ncmc(TokenId id) const noexcept {
  return id >= static_cast<TokenId>(base_size()) && id < static_cast<TokenId>(size());
}

const std::vector<Candidate>& VocabMap::candidates(char32_t scpc) const {
  const auto it = candidates_.find(scpc);
  if (it == candidates_.end()) {
    throw LookupError("'" + utf8::encode(scpc) + "' is not a polyphone");
  }
  return it->second;
}

TokenId VocabMap::ncmc_id(char32_t scpc, const Pinyin& pinyin) const {
  for (const auto& c : candidates(scpc)) {
    if (c.pinyin == pinyin) return c.id;
  }
  throw LookupError("'" + utf8::encode(scpc) + "' has no reading " + pinyin.str());
}

const NcmcDescriptor& VocabMap::ncmc(TokenId id) const {
  if (!is_ncmc(id)) throw RangeError("token " + std::to_string(id) + " is not an NCMC");
  return ncmcs_[static_cast<std::size_t>(id) - base_size()];
}

std::vector<TokenId> VocabMap::encode(std::u32string_view text, bool parse_display) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size() + 2);
  ids.push_back(special::kCls);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char32_t c = text[i];
    if (parse_display && i + 1 < text.size() && text[i + 1] >= U'1' && text[i + 1] <= U'9') {
      const auto it = candidates_.find(c);
      const auto n = static_cast<std::size_t>(text[i + 1] - U'0');
      if (it != candidates_.end() && n <= it->second.size()) {
        ids.push_back(it->second[n - 1].id);
        ++i;
        continue;
      }
    }
    const auto id = find_char(c);
    ids.push_back(id ? *id : special::kUnk);
  }
  ids.push_back(special::kSep);
  return ids;
}

std::vector<TokenId> VocabMap::encode(std::string_view utf8_text, bool parse_display) const {
  return encode(utf8::decode(utf8_text), parse_display);
}

std::string VocabMap::token_text(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= size()) {
    throw RangeError("token id " + std::to_string(id) + " out of range [0, " +
                     std::to_string(size()) + ")");
  }
  if (static_cast<std::size_t>(id) < base_size()) return base_tokens_[static_cast<std::size_t>(id)];
  const auto& d = ncmc(id);
  return utf8::encode(d.scpc) + std::to_string(d.reading_index + 1);
}

std::string VocabMap::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += token_text(id);
  return out;
}

VocabMap VocabMap::base_only() const { return build(base_tokens_, Lexicon{}); }

Lexicon VocabMap::lexicon() const {
  Lexicon lex;
  for (const auto& [c, cands] : candidates_) {
    PolyphoneEntry e{c, {}};
    for (const auto& cand : cands) e.readings.push_back(cand.pinyin);
    lex.add_entry(std::move(e));
  }
  return lex;
}

bool operator==(const VocabMap& a, const VocabMap& b) {
  if (a.base_tokens_ != b.base_tokens_ || a.ncmcs_.size() != b.ncmcs_.size()) return false;
  for (std::size_t i = 0; i < a.ncmcs_.size(); ++i) {
    const auto& x = a.ncmcs_[i];
    const auto& y = b.ncmcs_[i];
    if (x.scpc != y.scpc || x.reading_index != y.reading_index || !(x.pinyin == y.pinyin)) {
      return false;
    }
  }
  return true;
}

}  // namespace pbg2p
