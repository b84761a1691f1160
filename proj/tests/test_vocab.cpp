#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "pbg2p/errors.hpp"
#include "pbg2p/lexicon.hpp"
#include "pbg2p/pinyin.hpp"
#include "pbg2p/random.hpp"
#include "pbg2p/utf8.hpp"
#include "pbg2p/vocab.hpp"
#include "support.hpp"

using namespace pbg2p;
using namespace pbg2p::test;

TEST(Utf8, RoundTripsMixedText) {
  const std::string s = "a泊é\U0001F600";
  const auto d = utf8::decode(s);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d[1], U'泊');
  EXPECT_EQ(utf8::encode(d), s);
}

TEST(Utf8, RejectsMalformedInput) {
  EXPECT_THROW(utf8::decode("\xC0\xAF"), ParseError);          // overlong
  EXPECT_THROW(utf8::decode("\xED\xA0\x80"), ParseError);      // surrogate
  EXPECT_THROW(utf8::decode("\xE6\xB3"), ParseError);          // truncated
  EXPECT_THROW(utf8::decode("\x80"), ParseError);              // stray continuation
  EXPECT_THROW(utf8::decode("\xF4\x90\x80\x80"), ParseError);  // above U+10FFFF
}

TEST(PinyinText, CanonicalFormRoundTrips) {
  for (const char* s : {"bo2", "po1", "zha1", "de5", "lv4"}) {
    EXPECT_EQ(Pinyin::parse(s).str(), s);
  }
  const auto p = Pinyin::parse("bo2");
  EXPECT_EQ(p.syllable(), "bo");
  EXPECT_EQ(p.tone(), 2);
}

TEST(PinyinText, RejectsNonCanonicalForms) {
  for (const char* s : {"", "bo", "bo0", "bo6", "Bo2", "b o2", "2", "bo22", "bō"}) {
    EXPECT_FALSE(Pinyin::try_parse(s).has_value()) << s;
    EXPECT_THROW(Pinyin::parse(s), ParseError) << s;
  }
  EXPECT_THROW(Pinyin("bo", 0), ParseError);
}

TEST(LexiconFile, ParsesEntryInFileOrder) {
  const auto lex = Lexicon::parse("泊\tpo1,bo2\n");
  ASSERT_EQ(lex.entries().size(), 1u);
  const auto* e = lex.find(U'泊');
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->readings, (std::vector<Pinyin>{py("po1"), py("bo2")}));
}

TEST(LexiconFile, EmptyAndCommentOnlyInputs) {
  EXPECT_TRUE(Lexicon::parse("").entries().empty());
  EXPECT_TRUE(Lexicon::parse("# nothing here\n\n").entries().empty());
  EXPECT_EQ(Lexicon::parse("# c\r\n泊\tpo1,bo2\r\n").ncmc_count(), 2u);
}

TEST(LexiconFile, ErrorsNameTheLine) {
  auto line_of = [](std::string_view text) -> std::size_t {
    try {
      Lexicon::parse(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("泊\tpo1\n"), 1u);                       // one reading
  EXPECT_EQ(line_of("# x\n泊\tpo1,bo2\n泊\tbo2,po1\n"), 3u);  // duplicate char
  EXPECT_EQ(line_of("泊\tpo1,bo\n"), 1u);                    // malformed pinyin
  EXPECT_EQ(line_of("扎\tzha1,zha2\n泊\tpo1,po1\n"), 2u);     // repeated reading
  EXPECT_EQ(line_of("泊 po1,bo2\n"), 1u);                    // no tab
}

TEST(LexiconFile, MonophonesAndPolyphonesAreDisjoint) {
  auto lex = Lexicon::parse("泊\tpo1,bo2\n");
  lex.parse_monophones("湖\thu2\n");
  EXPECT_EQ(lex.monophone(U'湖'), py("hu2"));
  EXPECT_FALSE(lex.monophone(U'泊').has_value());
  EXPECT_THROW(lex.add_monophone(U'泊', py("bo2")), ConfigError);
  EXPECT_THROW(lex.add_entry({U'湖', {py("hu2"), py("hu3")}}), ConfigError);
}

TEST(LexiconFile, TsvRoundTrip) {
  const auto lex = toy_lexicon();
  const auto again = Lexicon::parse(lex.to_tsv());
  EXPECT_EQ(again.to_tsv(), lex.to_tsv());
  EXPECT_EQ(again.ncmc_count(), 7u);
}

namespace {

std::vector<std::string> ten_base_tokens(std::u32string chars) {
  auto t = VocabMap::base_tokens_for(std::move(chars));
  EXPECT_EQ(t.size(), 10u);
  return t;
}

}  // namespace

TEST(VocabBuild, SinglePolyphoneGetsTheNextIds) {
  const auto v = VocabMap::build(ten_base_tokens(u32("泊湖小船里")), Lexicon::parse("泊\tpo1,bo2\n"));
  EXPECT_EQ(v.base_size(), 10u);
  EXPECT_EQ(v.size(), 12u);
  EXPECT_EQ(v.ncmc_id(U'泊', py("po1")), 10);
  EXPECT_EQ(v.ncmc_id(U'泊', py("bo2")), 11);
}

TEST(VocabBuild, EntriesOrderedByCodePoint) {
  ASSERT_LT(U'乙', U'甲');
  // Listed in the file in the opposite order on purpose.
  const auto lex = Lexicon::parse("甲\tc1,d1,e1\n乙\ta1,b1\n");
  const auto v = VocabMap::build(ten_base_tokens(u32("甲乙丙丁戊")), lex);
  EXPECT_EQ(v.ncmc_id(U'乙', py("a1")), 10);
  EXPECT_EQ(v.ncmc_id(U'乙', py("b1")), 11);
  EXPECT_EQ(v.ncmc_id(U'甲', py("c1")), 12);
  EXPECT_EQ(v.ncmc_id(U'甲', py("d1")), 13);
  EXPECT_EQ(v.ncmc_id(U'甲', py("e1")), 14);
}

TEST(VocabBuild, MissingPolyphoneIsAConfigError) {
  EXPECT_THROW(VocabMap::build(VocabMap::base_tokens_for(u32("湖")), toy_lexicon()), ConfigError);
}

TEST(VocabBuild, SpecialsMustComeFirst) {
  auto tokens = toy_base_tokens();
  std::swap(tokens[0], tokens[1]);
  EXPECT_THROW(VocabMap::build(tokens, Lexicon{}), ConfigError);
  auto dup = toy_base_tokens();
  dup.push_back(dup.back());
  EXPECT_THROW(VocabMap::build(dup, Lexicon{}), ConfigError);
}

TEST(VocabBuild, FullScaleAccounting) {
  // 21,123 synthetic characters plus the five specials, and 354 polyphones
  // whose readings add up to 741.
  std::u32string chars;
  for (char32_t c = 0x4E00; chars.size() < 21123; ++c) chars.push_back(c);
  const auto base = VocabMap::base_tokens_for(chars);
  ASSERT_EQ(base.size(), 21128u);
  Lexicon lex;
  std::size_t readings = 0;
  for (std::size_t i = 0; i < 354; ++i) {
    const std::size_t k = i < 33 ? 3 : 2;  // 33*3 + 321*2 = 741
    std::vector<Pinyin> rs;
    for (std::size_t r = 0; r < k; ++r) rs.emplace_back("a", static_cast<int>(r + 1));
    readings += k;
    lex.add_entry({chars[i * 7], rs});
  }
  ASSERT_EQ(readings, 741u);
  const auto v = VocabMap::build(base, lex);
  EXPECT_EQ(v.size(), 21869u);
  EXPECT_EQ(v.ncmc_count(), 741u);
}

TEST(VocabProperties, BijectionAndContiguity) {
  const auto v = toy_vocab();
  const auto lex = toy_lexicon();
  std::set<TokenId> seen;
  for (const auto& [c, entry] : lex.entries()) {
    const auto& cands = v.candidates(c);
    ASSERT_EQ(cands.size(), entry.readings.size());
    for (std::size_t r = 0; r < cands.size(); ++r) {
      EXPECT_EQ(cands[r].pinyin, entry.readings[r]);
      const auto id = v.ncmc_id(c, entry.readings[r]);
      EXPECT_EQ(id, cands[r].id);
      EXPECT_EQ(v.ncmc(id).scpc, c);
      EXPECT_EQ(v.ncmc(id).pinyin, entry.readings[r]);
      if (r > 0) {
        EXPECT_EQ(cands[r].id, cands[r - 1].id + 1);
      }
      seen.insert(id);
    }
  }
  std::vector<TokenId> ids(seen.begin(), seen.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    EXPECT_EQ(ids[i], static_cast<TokenId>(v.base_size() + i));
  }
  EXPECT_EQ(ids.size(), v.ncmc_count());
}

TEST(VocabLookup, UnknownReadingOrCharacterFails) {
  const auto v = toy_vocab();
  EXPECT_THROW(v.ncmc_id(U'泊', py("zhi4")), LookupError);
  EXPECT_THROW(v.candidates(U'湖'), LookupError);
  EXPECT_THROW(v.ncmc(special::kCls), RangeError);
}

TEST(VocabEncode, EmptyAndPlainText) {
  const auto v = toy_vocab();
  EXPECT_EQ(v.encode(std::u32string_view()), (std::vector<TokenId>{special::kCls, special::kSep}));
  const auto ids = v.encode(std::u32string_view(u32("湖泊")));
  ASSERT_EQ(ids.size(), 4u);
  EXPECT_EQ(ids[1], *v.find_char(U'湖'));
  EXPECT_EQ(ids[2], *v.find_char(U'泊'));
  EXPECT_EQ(ids[3], special::kSep);
}

TEST(VocabEncode, OutOfVocabularyIsUnk) {
  const auto v = toy_vocab();
  const auto ids = v.encode(std::u32string_view(u32("湖X")));
  EXPECT_EQ(ids[2], special::kUnk);
}

TEST(VocabEncode, DecodeInvertsEncode) {
  const auto v = toy_vocab();
  for (const char* s : {"小船漂泊在湖泊里", "", "鱼拼命挣扎"}) {
    const auto ids = v.encode(std::string_view(s));
    EXPECT_EQ(v.decode(ids), std::string("[CLS]") + s + "[SEP]");
  }
}

TEST(VocabEncode, DisplayFormRoundTrip) {
  const auto v = toy_vocab();
  const auto bo2 = v.ncmc_id(U'泊', py("bo2"));
  EXPECT_EQ(v.token_text(bo2), "泊2");
  const auto ids = v.encode(std::string_view("湖泊2里泊1"), true);
  ASSERT_EQ(ids.size(), 6u);
  EXPECT_EQ(ids[2], bo2);
  EXPECT_EQ(ids[4], v.ncmc_id(U'泊', py("po1")));
  EXPECT_EQ(v.decode(ids), "[CLS]湖泊2里泊1[SEP]");
  EXPECT_THROW(v.token_text(static_cast<TokenId>(v.size())), RangeError);
}

TEST(VocabEncode, RandomDisplayRoundTrip) {
  const auto v = toy_vocab();
  Rng rng(5);
  std::vector<std::string> pieces;
  for (std::size_t id = special::kCount; id < v.size(); ++id) pieces.push_back(v.token_text(static_cast<TokenId>(id)));
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    const auto n = rng.uniform_index(12);
    for (std::uint64_t i = 0; i < n; ++i) s += pieces[rng.uniform_index(pieces.size())];
    const auto ids = v.encode(std::string_view(s), true);
    EXPECT_EQ(v.decode(ids), "[CLS]" + s + "[SEP]");
  }
}

TEST(VocabDerived, BaseOnlyAndLexiconRecovery) {
  const auto v = toy_vocab();
  const auto b = v.base_only();
  EXPECT_EQ(b.size(), v.base_size());
  EXPECT_EQ(b.ncmc_count(), 0u);
  EXPECT_EQ(v.lexicon().to_tsv(), toy_lexicon().to_tsv());
  EXPECT_TRUE(VocabMap::build(v.base_tokens(), v.lexicon()) == v);
}
