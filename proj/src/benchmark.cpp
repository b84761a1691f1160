#include "pbg2p/benchmark.hpp"

namespace pbg2p {

BenchmarkSpec benchmark_spec() {
  BenchmarkSpec s;
  s.language = SynthSpec{};
  s.language.seed = 1;

  s.model.d_model = 128;
  s.model.n_layers = 2;
  s.model.n_heads = 4;
  s.model.d_ff = 256;
  s.model.max_len = 32;
  s.model.dropout = 0.1;
  s.model.seed = 1;

  s.pretrain.learning_rate = 1e-3;
  s.pretrain.batch_size = 64;
  s.pretrain.steps = 1500;
  s.pretrain.clip_norm = 1.0;
  s.pretrain.seed = 11;
  s.pretrain.eval_every = 250;

  s.polyphone.learning_rate = 1e-3;
  s.polyphone.batch_size = 64;
  s.polyphone.steps = 0;
  s.polyphone.epochs = 5;
  s.polyphone.clip_norm = 1.0;
  s.polyphone.seed = 12;

  s.baseline = s.polyphone;
  s.baseline.learning_rate = 1e-3;
  s.baseline.epochs = 3;
  s.baseline.seed = 13;
  return s;
}

BenchmarkData make_benchmark_data(const BenchmarkSpec& spec) {
  BenchmarkData d;
  d.language = make_language(spec.language);
  for (auto& s : generate_split(spec.language, {"pretrain", spec.pretrain_sentences, SentenceKind::standard},
                                streams::kPretrain)) {
    d.pretrain_text.push_back(std::move(s.text));
  }
  d.train = generate_split(spec.language, {"train", spec.train_sentences, SentenceKind::standard},
                           streams::kTrain);
  d.dev = generate_split(spec.language, {"dev", spec.dev_sentences, SentenceKind::standard},
                         streams::kDev);
  d.test = generate_split(spec.language, {"test1", spec.test_sentences, SentenceKind::standard},
                          streams::kTest);
  d.repeated = generate_split(spec.language, {"test4", spec.repeated_sentences, SentenceKind::repeated},
                              streams::kRepeated);
  return d;
}

VocabMap pretraining_vocab(std::span<const std::u32string> corpus, const Lexicon& lexicon) {
  std::u32string chars;
  for (const auto& s : corpus) chars += s;
  for (const auto& [c, entry] : lexicon.entries()) chars.push_back(c);
  return VocabMap::build(VocabMap::base_tokens_for(std::move(chars)), Lexicon{});
}

}  // namespace pbg2p
