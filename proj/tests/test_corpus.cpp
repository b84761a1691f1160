#include <gtest/gtest.h>

#include <algorithm>

#include "pbg2p/corpus.hpp"
#include "pbg2p/errors.hpp"
#include "pbg2p/random.hpp"
#include "pbg2p/synth.hpp"
#include "support.hpp"

using namespace pbg2p;
using namespace pbg2p::test;

namespace {

// The test-set-4 style sentence: 扎 three times, read zha2, zha1, za1.
LabeledSentence fish_sentence() {
  return {u32("鱼拼命挣扎，鱼刺扎破了手，他随意包扎一下"),
          {{4, py("zha2")}, {8, py("zha1")}, {17, py("za1")}}};
}

VocabMap fish_vocab() {
  auto tokens = VocabMap::base_tokens_for(u32("鱼拼命挣扎，刺破了手他随意包一下泊乐"));
  return VocabMap::build(tokens, toy_lexicon());
}

}  // namespace

TEST(CorpusNcmc, BoatSentence) {
  const auto v = toy_vocab();
  const auto s = boat_sentence();
  const auto ids = to_ncmc(v, s);
  const auto plain = v.encode(s.text);
  ASSERT_EQ(ids.size(), plain.size());
  const char32_t bo = ch("泊");
  EXPECT_EQ(ids[4], v.ncmc_id(bo, py("bo2")));
  EXPECT_EQ(ids[7], v.ncmc_id(bo, py("po1")));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i != 4 && i != 7) {
      EXPECT_EQ(ids[i], plain[i]) << i;
    }
  }
  EXPECT_EQ(from_ncmc(v, ids), s);
}

TEST(CorpusNcmc, NoPolyphoneIsIdentity) {
  const auto v = toy_vocab();
  const LabeledSentence s{u32("小船在湖里"), {}};
  EXPECT_EQ(to_ncmc(v, s), v.encode(s.text));
  const auto back = from_ncmc(v, v.encode(s.text));
  EXPECT_EQ(back.text, s.text);
  EXPECT_TRUE(back.labels.empty());
}

TEST(CorpusNcmc, FromNcmcRejectsMaskAndRange) {
  const auto v = toy_vocab();
  std::vector<TokenId> ids{special::kCls, special::kMask, special::kSep};
  EXPECT_THROW(from_ncmc(v, ids), RangeError);
  ids[1] = static_cast<TokenId>(v.size());
  EXPECT_THROW(from_ncmc(v, ids), Error);
}

TEST(CorpusNcmc, RandomNcmcSequencesRoundTrip) {
  const auto v = toy_vocab();
  Rng rng{99};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<TokenId> ids{special::kCls};
    const auto n = 1 + rng.uniform_index(20);
    for (std::size_t i = 0; i < n; ++i) {
      TokenId id;
      do {
        id = static_cast<TokenId>(special::kCount + rng.uniform_index(v.size() - special::kCount));
      } while (!v.is_ncmc(id) && v.is_scpc(u32(v.token_text(id))[0]));
      ids.push_back(id);
    }
    ids.push_back(special::kSep);
    const auto s = from_ncmc(v, ids);
    EXPECT_NO_THROW(validate(v, s));
    EXPECT_EQ(to_ncmc(v, s), ids);
  }
}

TEST(CorpusValidate, Errors) {
  const auto v = toy_vocab();
  auto s = boat_sentence();
  EXPECT_NO_THROW(validate(v, s));

  auto missing = s;
  missing.labels.pop_back();
  try {
    validate(v, missing);
    FAIL();
  } catch (const LabelError& e) {
    EXPECT_EQ(e.position(), 6u);
  }

  auto unsorted = s;
  std::swap(unsorted.labels[0], unsorted.labels[1]);
  EXPECT_THROW(validate(v, unsorted), LabelError);

  auto not_poly = s;
  not_poly.labels.insert(not_poly.labels.begin(), Label{0, py("xiao3")});
  EXPECT_THROW(validate(v, not_poly), LabelError);

  auto wrong_reading = s;
  wrong_reading.labels[1].pinyin = py("le4");
  try {
    to_ncmc(v, wrong_reading);
    FAIL();
  } catch (const LabelError& e) {
    EXPECT_EQ(e.position(), 6u);
  }

  auto past_end = s;
  past_end.labels.push_back({8, py("bo2")});
  EXPECT_THROW(validate(v, past_end), LabelError);
}

TEST(CorpusExample, BoatTargets) {
  const auto v = toy_vocab();
  const auto s = boat_sentence();
  const auto ex = make_example(v, s);
  EXPECT_EQ(ex.input_ids, v.encode(s.text));
  ASSERT_EQ(ex.target_positions, (std::vector<std::size_t>{4, 7}));
  const char32_t bo = ch("泊");
  EXPECT_EQ(ex.target_ids[0], v.ncmc_id(bo, py("bo2")));
  EXPECT_EQ(ex.target_ids[1], v.ncmc_id(bo, py("po1")));
  // Both inputs remain the polyphone itself.
  EXPECT_EQ(ex.input_ids[4], *v.find_char(bo));
  EXPECT_EQ(ex.input_ids[7], *v.find_char(bo));
}

TEST(CorpusExample, ZeroLabelSentence) {
  const auto v = toy_vocab();
  const auto ex = make_example(v, {u32("小船"), {}});
  EXPECT_TRUE(ex.target_positions.empty());
  EXPECT_TRUE(ex.target_ids.empty());
}

TEST(CorpusExample, SyntheticPropertiesHold) {
  const SynthSpec spec;
  const auto lang = make_language(spec);
  const auto v = VocabMap::build(VocabMap::base_tokens_for(lang.alphabet()), lang.lexicon);
  for (auto kind : {SentenceKind::standard, SentenceKind::repeated}) {
    const auto corpus = generate_split(spec, {"x", 1000, kind}, 77);
    for (const auto& s : corpus) {
      const auto ex = make_example(v, s);
      EXPECT_EQ(ex.input_ids, v.encode(s.text));
      EXPECT_EQ(std::count(ex.input_ids.begin(), ex.input_ids.end(), special::kMask), 0);
      EXPECT_TRUE(std::none_of(ex.input_ids.begin(), ex.input_ids.end(),
                               [&](TokenId id) { return v.is_ncmc(id); }));
      ASSERT_EQ(ex.target_positions.size(), s.labels.size());
      for (std::size_t k = 0; k < s.labels.size(); ++k) {
        EXPECT_EQ(ex.target_positions[k], s.labels[k].index + 1);
        const auto& cands = v.candidates(s.text[s.labels[k].index]);
        EXPECT_TRUE(std::any_of(cands.begin(), cands.end(),
                                [&](const Candidate& c) { return c.id == ex.target_ids[k]; }));
      }
      EXPECT_EQ(from_ncmc(v, to_ncmc(v, s)), s);
    }
  }
}

TEST(CorpusRecord, FishSentenceParses) {
  const auto line =
      R"({"text":"鱼拼命挣扎，鱼刺扎破了手，他随意包扎一下","labels":[[4,"zha2"],[8,"zha1"],[17,"za1"]]})";
  const auto s = parse_record(line);
  EXPECT_EQ(s, fish_sentence());
  EXPECT_NO_THROW(validate(fish_vocab(), s));
  EXPECT_EQ(parse_record(format_record(s)), s);
}

TEST(CorpusRecord, MalformedLines) {
  EXPECT_THROW(parse_record("{"), ParseError);
  EXPECT_THROW(parse_record(R"({"text":1,"labels":[]})"), ParseError);
  EXPECT_THROW(parse_record(R"({"text":"a","labels":[[0]]})"), ParseError);
  EXPECT_THROW(parse_record(R"({"text":"a","labels":[["0","le4"]]})"), ParseError);
  EXPECT_THROW(parse_record(R"({"text":"a","labels":[[0,"xx9"]]})"), Error);
}

TEST(CorpusFile, ErrorCarriesLineNumber) {
  const auto dir = temp_dir("corpus_err");
  spit(dir / "c.jsonl", format_record(boat_sentence()) + "\n\n{bad}\n");
  CorpusReader reader(dir / "c.jsonl");
  EXPECT_TRUE(reader.next().has_value());
  try {
    reader.next();
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::filesystem::remove_all(dir);
}

TEST(CorpusFile, EmptyFile) {
  const auto dir = temp_dir("corpus_empty");
  spit(dir / "e.jsonl", "");
  EXPECT_TRUE(read_corpus(dir / "e.jsonl").empty());
  EXPECT_THROW(read_corpus(dir / "missing.jsonl"), Error);
  std::filesystem::remove_all(dir);
}

TEST(CorpusFile, RoundTripIsByteIdentical) {
  const auto dir = temp_dir("corpus_rt");
  auto corpus = generate_split(SynthSpec{}, {"x", 10000, SentenceKind::standard}, 5);
  corpus.push_back(fish_sentence());
  write_corpus(dir / "a.jsonl", corpus);
  const auto back = read_corpus(dir / "a.jsonl");
  EXPECT_EQ(back, corpus);
  write_corpus(dir / "b.jsonl", back);
  EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
  std::filesystem::remove_all(dir);
}
