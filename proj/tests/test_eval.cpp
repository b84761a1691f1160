#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "pbg2p/errors.hpp"
#include "pbg2p/eval.hpp"
#include "pbg2p/random.hpp"
#include "pbg2p/synth.hpp"
#include "support.hpp"

using namespace pbg2p;
using namespace pbg2p::test;

namespace {

LabeledSentence fish_sentence() {
  return {u32("鱼拼命挣扎，鱼刺扎破了手，他随意包扎一下"),
          {{4, py("zha2")}, {8, py("zha1")}, {17, py("za1")}}};
}

// A report that chooses the given readings at the gold positions.
PredictionReport report_for(const LabeledSentence& gold, const std::vector<Pinyin>& chosen) {
  PredictionReport r{gold.text, {}};
  for (std::size_t k = 0; k < gold.labels.size(); ++k) {
    r.predictions.push_back({gold.labels[k].index, gold.text[gold.labels[k].index], chosen[k], {}, {}});
  }
  return r;
}

PredictionReport oracle(const LabeledSentence& gold) {
  std::vector<Pinyin> chosen;
  for (const auto& l : gold.labels) chosen.push_back(l.pinyin);
  return report_for(gold, chosen);
}

SplitResult split_with(std::string name, std::size_t correct, std::size_t scored) {
  SplitResult s;
  s.name = std::move(name);
  s.correct = correct;
  s.scored = scored;
  s.accuracy = static_cast<double>(correct) / static_cast<double>(scored);
  return s;
}

}  // namespace

TEST(Score, RepeatedPolyphoneCountsEachOccurrence) {
  const std::vector<LabeledSentence> gold{fish_sentence()};
  const std::vector<PredictionReport> preds{report_for(gold[0], {py("zha2"), py("zha1"), py("zha1")})};
  const auto r = score("t4", preds, gold);
  EXPECT_EQ(r.sentences, 1u);
  EXPECT_EQ(r.scored, 3u);
  EXPECT_EQ(r.correct, 2u);
  EXPECT_EQ(r.accuracy, 2.0 / 3.0);
  EXPECT_EQ(r.per_scpc.at(ch("扎")).scored, 3u);
  EXPECT_EQ(r.per_scpc.at(ch("扎")).correct, 2u);
}

TEST(Score, OracleIsExactlyOne) {
  for (auto kind : {SentenceKind::standard, SentenceKind::repeated}) {
    const auto gold = generate_split(SynthSpec{}, {"x", 500, kind}, 12);
    std::vector<PredictionReport> preds;
    for (const auto& g : gold) preds.push_back(oracle(g));
    const auto r = score("x", preds, gold);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.correct, r.scored);
  }
}

TEST(Score, AlignmentErrorsNameTheSentence) {
  const std::vector<LabeledSentence> gold{boat_sentence(), fish_sentence()};
  std::vector<PredictionReport> preds{oracle(gold[0]), oracle(gold[1])};

  EXPECT_THROW(score("s", std::span(preds).first(1), gold), Error);

  auto wrong_text = preds;
  wrong_text[1].text = u32("别的句子");
  try {
    score("s", wrong_text, gold);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("sentence 1"), std::string::npos) << e.what();
  }

  auto missing = preds;
  missing[1].predictions.pop_back();
  EXPECT_THROW(score("s", missing, gold), Error);

  auto shifted = preds;
  shifted[0].predictions[0].char_index = 2;
  EXPECT_THROW(score("s", shifted, gold), Error);
}

TEST(Score, OrderIndependent) {
  const auto gold = generate_split(SynthSpec{}, {"x", 300, SentenceKind::standard}, 13);
  Rng rng{1};
  std::vector<PredictionReport> preds;
  for (const auto& g : gold) {
    std::vector<Pinyin> chosen;
    for (const auto& l : g.labels) {
      chosen.push_back(rng.bernoulli(0.7) ? l.pinyin : py("wrong1"));
    }
    preds.push_back(report_for(g, chosen));
  }
  const auto a = score("x", preds, gold);
  std::vector<std::size_t> order(gold.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  std::vector<LabeledSentence> gold2;
  std::vector<PredictionReport> preds2;
  for (auto i : order) {
    gold2.push_back(gold[i]);
    preds2.push_back(preds[i]);
  }
  const auto b = score("x", preds2, gold2);
  EXPECT_EQ(a.correct, b.correct);
  EXPECT_EQ(a.scored, b.scored);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(to_json(summarize("s", {a})).dump(), to_json(summarize("s", {b})).dump());
}

TEST(Summary, MacroAverageOfFourSplits) {
  // Four split accuracies 99.9, 96.9, 93.0, 87.2 average to 94.25.
  const auto r = summarize("sys", {split_with("test1", 999, 1000), split_with("test2", 969, 1000),
                                   split_with("test3", 930, 1000), split_with("test4", 872, 1000)});
  EXPECT_NEAR(r.average, 0.9425, 1e-12);
  // Unweighted even when split sizes differ.
  const auto u = summarize("sys", {split_with("a", 1, 1), split_with("b", 0, 99)});
  EXPECT_EQ(u.average, 0.5);
  EXPECT_EQ(summarize("none", {}).average, 0.0);
}

TEST(Summary, TableAndJson) {
  const auto r = summarize("polyphone", {split_with("test1", 974, 1000), split_with("test4", 19, 20)});
  const auto table = format_table(r);
  EXPECT_NE(table.find("System"), std::string::npos);
  EXPECT_NE(table.find("test4"), std::string::npos);
  EXPECT_NE(table.find("Average"), std::string::npos);
  EXPECT_NE(table.find("97.40"), std::string::npos);
  EXPECT_NE(table.find("96.20"), std::string::npos);
  const auto j = to_json(r);
  EXPECT_EQ(j["system"], "polyphone");
  EXPECT_EQ(j["splits"].size(), 2u);
  EXPECT_EQ(j["splits"][1]["correct"], 19);
  EXPECT_NEAR(j["average"].get<double>(), 0.962, 1e-12);
}

TEST(RandomPredictor, WithinThreeSigmaOfExpectation) {
  SynthSpec spec;
  const auto lang = make_language(spec);
  const auto gold = generate_split(spec, {"t", 2000, SentenceKind::standard}, 14);
  Rng rng{15};
  std::vector<PredictionReport> preds;
  double expected = 0, variance = 0;
  std::size_t n = 0;
  for (const auto& g : gold) {
    std::vector<Pinyin> chosen;
    for (const auto& l : g.labels) {
      const auto& readings = lang.lexicon.find(g.text[l.index])->readings;
      chosen.push_back(readings[rng.uniform_index(readings.size())]);
      const double p = 1.0 / static_cast<double>(readings.size());
      expected += p;
      variance += p * (1 - p);
      ++n;
    }
    preds.push_back(report_for(g, chosen));
  }
  const auto r = score("t", preds, gold);
  const double mean = expected / static_cast<double>(n);
  const double sigma = std::sqrt(variance) / static_cast<double>(n);
  EXPECT_LE(std::abs(r.accuracy - mean), 3 * sigma) << r.accuracy << " vs " << mean;
}

TEST(Stats, CountsAddUp) {
  const auto corpus = generate_split(SynthSpec{}, {"train", 700, SentenceKind::standard}, 16);
  const auto s = dataset_stats("train", corpus);
  EXPECT_EQ(s.sentences, 700u);
  std::size_t labels = 0;
  for (const auto& c : corpus) labels += c.labels.size();
  EXPECT_EQ(s.occurrences, labels);
  std::size_t summed = 0;
  for (const auto& [c, readings] : s.readings) {
    std::size_t per_char = 0;
    for (const auto& [p, count] : readings) per_char += count;
    std::size_t direct = 0;
    for (const auto& sent : corpus) {
      for (const auto& l : sent.labels) direct += sent.text[l.index] == c;
    }
    EXPECT_EQ(per_char, direct);
    summed += per_char;
  }
  EXPECT_EQ(summed, labels);
  const std::vector<SplitStats> all{s, dataset_stats("test1", std::span(corpus).first(10))};
  const auto table = format_stats_table(all);
  EXPECT_NE(table.find("train"), std::string::npos);
  EXPECT_NE(table.find("700"), std::string::npos);
  EXPECT_EQ(stats_to_json(all)[1]["sentences"], 10);
}

TEST(Probe, SiblingsEqualUnderBothInits) {
  const auto base = toy_base_vocab();
  const auto v = toy_vocab();
  ModelConfig c;
  c.vocab_size = base.size();
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_len = 24;
  c.seed = 17;
  auto p = init_random<float>(c);
  Rng rng{18};
  p.for_each([&](std::string_view, Matrix<float>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += float(rng.normal(0.0, 0.3));
  });
  const auto scpc = extend_and_init(p, base, v, InitMode::scpc);
  const auto unk = extend_and_init(p, base, v, InitMode::unk);
  const std::vector<std::u32string> sentences{u32("小船漂泊在湖泊里"), u32("鱼拼命挣扎"), u32("小船")};
  const auto rows = init_probe(scpc, unk, v, sentences);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].sentence, 1u);
  EXPECT_EQ(rows[2].readings.size(), 3u);
  for (const auto& r : rows) {
    for (std::size_t i = 1; i < r.readings.size(); ++i) {
      EXPECT_NEAR(r.scpc_init[i], r.scpc_init[0], 1e-6);
      EXPECT_NEAR(r.unk_init[i], r.unk_init[0], 1e-6);
    }
  }
  EXPECT_FALSE(format_probe_table(rows).empty());
}
