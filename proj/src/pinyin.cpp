#include "pbg2p/pinyin.hpp"

#include "pbg2p/errors.hpp"

namespace pbg2p {

namespace {

bool valid_syllable(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < 'a' || c > 'z') return false;
  }
  return true;
}

}  // namespace

Pinyin::Pinyin(std::string syllable, int tone)
    : syllable_(std::move(syllable)), tone_(tone) {
  if (!valid_syllable(syllable_) || tone_ < 1 || tone_ > 5) {
    throw ParseError("invalid pinyin '" + syllable_ + std::to_string(tone_) + "'", 0);
  }
}

std::optional<Pinyin> Pinyin::try_parse(std::string_view text) {
  if (text.size() < 2) return std::nullopt;
  const char tone = text.back();
  const auto syllable = text.substr(0, text.size() - 1);
  if (tone < '1' || tone > '5' || !valid_syllable(syllable)) return std::nullopt;
  return Pinyin(std::string(syllable), tone - '0');
}

Pinyin Pinyin::parse(std::string_view text) {
  auto p = try_parse(text);
  if (!p) throw ParseError("malformed pinyin '" + std::string(text) + "'", 0);
  return *p;
}

std::string Pinyin::str() const { return syllable_ + static_cast<char>('0' + tone_); }

}  // namespace pbg2p
