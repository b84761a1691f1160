#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pbg2p/corpus.hpp"
#include "pbg2p/model.hpp"
#include "pbg2p/synth.hpp"
#include "pbg2p/training.hpp"
#include "pbg2p/vocab.hpp"

namespace pbg2p {

// The fixed synthetic benchmark: language, split sizes, model and schedules.
struct BenchmarkSpec {
  SynthSpec language;
  std::size_t pretrain_sentences = 20000;
  std::size_t train_sentences = 20000;
  std::size_t dev_sentences = 500;
  std::size_t test_sentences = 2000;
  std::size_t repeated_sentences = 200;

  ModelConfig model;
  TrainConfig pretrain;
  TrainConfig polyphone;
  TrainConfig baseline;
  std::size_t classifier_hidden = 64;
  double classifier_dropout = 0.5;
};

BenchmarkSpec benchmark_spec();

// Stream ids of the benchmark splits; the generator keeps streams independent.
namespace streams {
inline constexpr std::uint64_t kPretrain = 1;
inline constexpr std::uint64_t kTrain = 2;
inline constexpr std::uint64_t kDev = 3;
inline constexpr std::uint64_t kTest = 4;
inline constexpr std::uint64_t kRepeated = 5;
}  // namespace streams

struct BenchmarkData {
  SynthLanguage language;
  std::vector<std::u32string> pretrain_text;
  std::vector<LabeledSentence> train, dev, test, repeated;
};

BenchmarkData make_benchmark_data(const BenchmarkSpec& spec);

// Base vocabulary for pre-training: every character of the corpus plus every
// polyphone of the lexicon.
VocabMap pretraining_vocab(std::span<const std::u32string> corpus, const Lexicon& lexicon);

}  // namespace pbg2p
