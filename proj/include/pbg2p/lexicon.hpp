#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pbg2p/pinyin.hpp"

namespace pbg2p {

// A source polyphonic character (SCPC) and its readings in file order.
struct PolyphoneEntry {
  char32_t scpc;
  std::vector<Pinyin> readings;
};

// Polyphone entries keyed by code point plus an optional monophone
// dictionary. Each polyphone reading becomes one new monophonic token.
class Lexicon {
 public:
  Lexicon() = default;

  // Lexicon TSV: "<char>\t<pinyin>,<pinyin>[,...]", '#' starts a comment line.
  static Lexicon parse(std::string_view text);
  static Lexicon load(const std::filesystem::path& path);

  // Monophone TSV: "<char>\t<pinyin>".
  void parse_monophones(std::string_view text);
  void load_monophones(const std::filesystem::path& path);

  void add_entry(PolyphoneEntry entry);
  void add_monophone(char32_t c, Pinyin reading);

  const std::map<char32_t, PolyphoneEntry>& entries() const noexcept { return entries_; }
  const std::map<char32_t, Pinyin>& monophones() const noexcept { return monophones_; }

  const PolyphoneEntry* find(char32_t c) const;
  bool is_polyphone(char32_t c) const { return entries_.count(c) != 0; }
  std::optional<Pinyin> monophone(char32_t c) const;

  // Total number of (character, reading) pairs across all entries.
  std::size_t ncmc_count() const noexcept;

  std::string to_tsv() const;
  std::string monophones_to_tsv() const;

 private:
  std::map<char32_t, PolyphoneEntry> entries_;
  std::map<char32_t, Pinyin> monophones_;
};

}  // namespace pbg2p
