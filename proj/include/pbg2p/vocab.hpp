#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pbg2p/lexicon.hpp"
#include "pbg2p/pinyin.hpp"

namespace pbg2p {

using TokenId = std::int32_t;

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr std::size_t kCount = 5;
inline constexpr std::string_view kNames[kCount] = {"[PAD]", "[UNK]", "[CLS]",
                                                    "[SEP]", "[MASK]"};
}  // namespace special

// One new monophonic token: the reading_index-th reading of scpc.
struct NcmcDescriptor {
  char32_t scpc;
  std::size_t reading_index;
  Pinyin pinyin;
};

struct Candidate {
  Pinyin pinyin;
  TokenId id;
};

// Base token inventory followed by a contiguous block of NCMC tokens.
// NCMC ids are assigned in SCPC code-point order, then lexicon reading order.
// Immutable after construction.
class VocabMap {
 public:
  // base_tokens must begin with the five special tokens in canonical order and
  // must contain every SCPC of the lexicon. Throws ConfigError otherwise.
  static VocabMap build(std::vector<std::string> base_tokens,
                        const Lexicon& lexicon);

  // Specials followed by the given characters sorted by code point, deduped.
  static std::vector<std::string> base_tokens_for(std::u32string chars);

  std::size_t size() const noexcept { return base_tokens_.size() + ncmcs_.size(); }
  std::size_t base_size() const noexcept { return base_tokens_.size(); }
  std::size_t ncmc_count() const noexcept { return ncmcs_.size(); }

  const std::vector<std::string>& base_tokens() const noexcept { return base_tokens_; }
  const std::vector<NcmcDescriptor>& ncmcs() const noexcept { return ncmcs_; }

  std::optional<TokenId> find_char(char32_t c) const;
  bool is_scpc(char32_t c) const { return candidates_.count(c) != 0; }
  bool is_ncmc(TokenId id) const noexcept;

  TokenId ncmc_id(char32_t scpc, const Pinyin& pinyin) const;
  const std::vector<Candidate>& candidates(char32_t scpc) const;
  const NcmcDescriptor& ncmc(TokenId id) const;

  // [CLS], one id per scalar ([UNK] when out of vocabulary), [SEP]. With
  // parse_display set, "<scpc><n>" is read as the n-th NCMC of scpc.
  std::vector<TokenId> encode(std::u32string_view text,
                              bool parse_display = false) const;
  std::vector<TokenId> encode(std::string_view utf8_text,
                              bool parse_display = false) const;
  std::string decode(std::span<const TokenId> ids) const;
  std::string token_text(TokenId id) const;

  // The same vocabulary without the NCMC block.
  VocabMap base_only() const;
  // Polyphone entries recovered from the NCMC block (no monophones).
  Lexicon lexicon() const;

  friend bool operator==(const VocabMap& a, const VocabMap& b);

 private:
  std::vector<std::string> base_tokens_;
  std::vector<NcmcDescriptor> ncmcs_;
  std::unordered_map<char32_t, TokenId> char_ids_;
  std::unordered_map<std::string, TokenId> special_ids_;
  std::map<char32_t, std::vector<Candidate>> candidates_;
};

}  // namespace pbg2p
