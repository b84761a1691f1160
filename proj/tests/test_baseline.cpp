#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>

#include "pbg2p/baseline.hpp"
#include "pbg2p/errors.hpp"
#include "pbg2p/log.hpp"
#include "pbg2p/synth.hpp"
#include "support.hpp"

using namespace pbg2p;
using namespace pbg2p::test;

namespace {

bool same_bits(const Matrix<float>& a, const Matrix<float>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

bool encoders_identical(const Parameters<float>& a, const Parameters<float>& b) {
  std::vector<const Matrix<float>*> left;
  a.for_each([&](std::string_view, const Matrix<float>& m) { left.push_back(&m); });
  std::size_t i = 0;
  bool same = true;
  b.for_each([&](std::string_view, const Matrix<float>& m) { same = same && same_bits(*left[i++], m); });
  return same;
}

struct Setup {
  SynthLanguage language;
  VocabMap vocab;  // base tokens only
  std::vector<LabeledSentence> train, dev;
  Parameters<float> encoder;
};

Setup make_setup() {
  SynthSpec spec;
  auto lang = make_language(spec);
  auto vocab = VocabMap::build(VocabMap::base_tokens_for(lang.alphabet()), Lexicon{});
  ModelConfig c;
  c.vocab_size = vocab.size();
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_len = 32;
  c.dropout = 0.1;
  c.seed = 31;
  return {lang, vocab, generate_split(spec, {"t", 300, SentenceKind::standard}, 2),
          generate_split(spec, {"d", 40, SentenceKind::standard}, 3), init_random<float>(c)};
}

TrainConfig quick() {
  TrainConfig t;
  t.learning_rate = 3e-3;
  t.batch_size = 16;
  t.epochs = 2;
  t.seed = 4;
  return t;
}

}  // namespace

TEST(LabelSet, UnionInCodePointOrder) {
  EXPECT_EQ(global_label_set(toy_lexicon()),
            (std::vector<Pinyin>{py("le4"), py("yue4"), py("zha1"), py("zha2"), py("za1"), py("po1"),
                                 py("bo2")}));
  const auto shared = Lexicon::parse("长\tchang2,zhang3\n涨\tzhang3,zhang4\n");
  // 涨 (U+6DA8) precedes 长 (U+957F).
  EXPECT_EQ(global_label_set(shared), (std::vector<Pinyin>{py("zhang3"), py("zhang4"), py("chang2")}));
  EXPECT_TRUE(global_label_set(Lexicon{}).empty());
}

TEST(Head, ShapesAndLabelIndex) {
  const auto s = make_setup();
  const auto head = init_classifier_head(16, s.language.lexicon, 64, 0.5, 1);
  const auto labels = global_label_set(s.language.lexicon);
  EXPECT_EQ(head.labels, labels);
  EXPECT_EQ(head.hidden(), 64u);
  EXPECT_EQ(head.fc2_w.cols(), static_cast<Eigen::Index>(labels.size()));
  const auto logits = classifier_logits(head, Matrix<float>::Ones(3, 16));
  EXPECT_EQ(logits.rows(), 3);
  EXPECT_EQ(logits.cols(), static_cast<Eigen::Index>(labels.size()));
  EXPECT_THROW(head.label_index(py("xyz1")), LookupError);
  // Every gold label of the corpus exists in the label set.
  for (const auto& sent : s.train) {
    for (const auto& l : sent.labels) EXPECT_NO_THROW(head.label_index(l.pinyin));
  }
  EXPECT_THROW(init_classifier_head(16, Lexicon{}, 8, 0.5, 1), ConfigError);
}

TEST(Classify, SameSchemaAndContainment) {
  const auto s = make_setup();
  const auto head = init_classifier_head(16, s.language.lexicon, 32, 0.5, 2);
  std::vector<std::u32string> texts;
  for (const auto& sent : s.train) texts.push_back(sent.text);
  const auto reports = classify_many(s.encoder, head, s.vocab, s.language.lexicon, texts, 7);
  ASSERT_EQ(reports.size(), texts.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    ASSERT_EQ(reports[i].predictions.size(), s.train[i].labels.size());
    for (const auto& pred : reports[i].predictions) {
      const auto& readings = s.language.lexicon.find(pred.scpc)->readings;
      EXPECT_NE(std::find(readings.begin(), readings.end(), pred.chosen), readings.end());
      ASSERT_EQ(pred.candidate_probs.size(), readings.size());
      double sum = 0;
      for (const auto& c : pred.candidate_probs) sum += c.probability;
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
  const auto one = classify(s.encoder, head, s.vocab, s.language.lexicon, texts[5]);
  EXPECT_EQ(one.predictions[0].chosen, reports[5].predictions[0].chosen);
}

TEST(Freeze, EncoderBitwiseUnchanged) {
  log::set_level(log::Level::warn);
  const auto s = make_setup();
  const auto head = init_classifier_head(16, s.language.lexicon, 32, 0.5, 5);
  const double before = classifier_loss(s.encoder, head, s.vocab, s.language.lexicon, s.train);
  const auto r = train_classifier(s.train, s.vocab, s.language.lexicon, s.encoder, head, true, quick(), s.dev);
  EXPECT_TRUE(encoders_identical(r.encoder, s.encoder));
  EXPECT_FALSE(same_bits(r.head.fc2_w, head.fc2_w));
  EXPECT_LT(classifier_loss(r.encoder, r.head, s.vocab, s.language.lexicon, s.train), before);
  std::size_t dev_records = 0;
  for (const auto& rec : r.log.records()) dev_records += rec.split == "dev";
  EXPECT_EQ(dev_records, 2u);

  // A different head seed trains a different head on the very same encoder.
  const auto other = init_classifier_head(16, s.language.lexicon, 32, 0.5, 6);
  const auto r2 = train_classifier(s.train, s.vocab, s.language.lexicon, s.encoder, other, true, quick());
  EXPECT_TRUE(encoders_identical(r2.encoder, r.encoder));
  EXPECT_FALSE(same_bits(r2.head.fc1_w, r.head.fc1_w));
}

TEST(Freeze, TrainableEncoderMoves) {
  log::set_level(log::Level::warn);
  const auto s = make_setup();
  const auto head = init_classifier_head(16, s.language.lexicon, 32, 0.5, 5);
  const auto r = train_classifier(s.train, s.vocab, s.language.lexicon, s.encoder, head, false, quick());
  EXPECT_FALSE(same_bits(r.encoder.layers[0].query_w, s.encoder.layers[0].query_w));
  EXPECT_FALSE(same_bits(r.encoder.token_embedding, s.encoder.token_embedding));
  // The MLM head is not part of the baseline and stays put.
  EXPECT_TRUE(same_bits(r.encoder.head_transform_w, s.encoder.head_transform_w));
  EXPECT_TRUE(same_bits(r.encoder.output_bias, s.encoder.output_bias));
  const auto again = train_classifier(s.train, s.vocab, s.language.lexicon, s.encoder, head, false, quick());
  EXPECT_TRUE(encoders_identical(again.encoder, r.encoder));
  EXPECT_EQ(again.log.to_jsonl(), r.log.to_jsonl());
}

TEST(Freeze, RejectsCorpusWithoutLabels) {
  log::set_level(log::Level::error);
  const auto s = make_setup();
  const auto head = init_classifier_head(16, s.language.lexicon, 8, 0.5, 5);
  const std::vector<LabeledSentence> empty{{s.train[0].text.substr(0, 0), {}}};
  EXPECT_THROW(train_classifier(empty, s.vocab, s.language.lexicon, s.encoder, head, true, quick()),
               ConfigError);
}

TEST(BaselineFile, RoundTrip) {
  const auto s = make_setup();
  const auto head = init_classifier_head(16, s.language.lexicon, 32, 0.5, 9);
  const auto dir = temp_dir("baseline");
  save_baseline(dir / "b.ckpt", s.encoder, s.vocab, s.language.lexicon, head);
  EXPECT_TRUE(is_baseline(read_checkpoint(dir / "b.ckpt")));
  const auto loaded = load_baseline(dir / "b.ckpt");
  EXPECT_TRUE(encoders_identical(loaded.encoder, s.encoder));
  EXPECT_EQ(loaded.vocab, s.vocab);
  EXPECT_EQ(loaded.head.labels, head.labels);
  EXPECT_EQ(loaded.head.dropout, head.dropout);
  EXPECT_TRUE(same_bits(loaded.head.fc1_w, head.fc1_w));
  EXPECT_TRUE(same_bits(loaded.head.fc2_b, head.fc2_b));
  Lexicon polyphones;
  for (const auto& [c, e] : s.language.lexicon.entries()) polyphones.add_entry(e);
  EXPECT_EQ(loaded.lexicon.to_tsv(), polyphones.to_tsv());

  save_model(dir / "m.ckpt", s.encoder, s.vocab);
  EXPECT_FALSE(is_baseline(read_checkpoint(dir / "m.ckpt")));
  EXPECT_THROW(load_baseline(dir / "m.ckpt"), FormatError);
  std::filesystem::remove_all(dir);
}
