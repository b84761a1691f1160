#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace pbg2p {

// A romanized syllable plus tone digit, canonical text "bo2". Tone 5 is the
// neutral tone.
class Pinyin {
 public:
  Pinyin(std::string syllable, int tone);

  static Pinyin parse(std::string_view text);
  static std::optional<Pinyin> try_parse(std::string_view text);

  const std::string& syllable() const noexcept { return syllable_; }
  int tone() const noexcept { return tone_; }
  std::string str() const;

  friend auto operator<=>(const Pinyin&, const Pinyin&) = default;
  friend bool operator==(const Pinyin&, const Pinyin&) = default;

 private:
  std::string syllable_;
  int tone_;
};

}  // namespace pbg2p
