#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pbg2p/checkpoint.hpp"
#include "pbg2p/inference.hpp"
#include "pbg2p/lexicon.hpp"
#include "pbg2p/model.hpp"
#include "pbg2p/training.hpp"

namespace pbg2p {

// Every reading of every polyphone, deduplicated, in order of first
// appearance when entries are walked by code point.
std::vector<Pinyin> global_label_set(const Lexicon& lexicon);

// Two-layer classifier over encoder states, shared by all polyphones.
struct ClassifierHead {
  std::vector<Pinyin> labels;
  double dropout = 0.5;
  Matrix<float> fc1_w, fc1_b;  // d x h, 1 x h
  Matrix<float> fc2_w, fc2_b;  // h x |labels|, 1 x |labels|

  std::size_t hidden() const noexcept { return static_cast<std::size_t>(fc1_w.cols()); }
  std::size_t label_index(const Pinyin& p) const;  // throws LookupError

  template <class Fn>
  void for_each(Fn&& fn) {
    fn(std::string_view("classifier.fc1.weight"), fc1_w);
    fn(std::string_view("classifier.fc1.bias"), fc1_b);
    fn(std::string_view("classifier.fc2.weight"), fc2_w);
    fn(std::string_view("classifier.fc2.bias"), fc2_b);
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    fn(std::string_view("classifier.fc1.weight"), fc1_w);
    fn(std::string_view("classifier.fc1.bias"), fc1_b);
    fn(std::string_view("classifier.fc2.weight"), fc2_w);
    fn(std::string_view("classifier.fc2.bias"), fc2_b);
  }
};

// N(0, 0.02) weights and zero biases drawn from seed.
ClassifierHead init_classifier_head(std::size_t d_model, const Lexicon& lexicon,
                                    std::size_t hidden, double dropout, std::uint64_t seed);

// Eval-mode label-set logits for each row of hidden states.
Matrix<float> classifier_logits(const ClassifierHead& head, const Matrix<float>& hidden);

// Eval-mode classification. Polyphones are the lexicon's entries; the encoder
// runs over the base vocabulary. Each distribution over the label set is
// restricted to the character's readings and renormalized, exactly as in
// predict, and reported in the same schema.
std::vector<PredictionReport> classify_many(const Parameters<float>& encoder,
                                            const ClassifierHead& head, const VocabMap& vocab,
                                            const Lexicon& lexicon,
                                            std::span<const std::u32string> texts,
                                            std::size_t batch_size = 32);
PredictionReport classify(const Parameters<float>& encoder, const ClassifierHead& head,
                          const VocabMap& vocab, const Lexicon& lexicon, std::u32string_view text);

struct ClassifierTrainResult {
  Parameters<float> encoder;
  ClassifierHead head;
  MetricsLog log;
  std::size_t skipped_sentences = 0;
};

// Cross-entropy over the full label set at every labeled polyphone. With
// freeze set the encoder runs in eval mode and none of its tensors is touched.
ClassifierTrainResult train_classifier(std::span<const LabeledSentence> corpus,
                                       const VocabMap& vocab, const Lexicon& lexicon,
                                       Parameters<float> encoder, ClassifierHead head, bool freeze,
                                       const TrainConfig& train,
                                       std::span<const LabeledSentence> dev = {});

// Mean eval-mode classifier loss.
double classifier_loss(const Parameters<float>& encoder, const ClassifierHead& head,
                       const VocabMap& vocab, const Lexicon& lexicon,
                       std::span<const LabeledSentence> sentences);

// Encoder plus head in the model container: the vocab block carries the base
// tokens and the polyphone lexicon, the head travels as extra records.
void save_baseline(const std::filesystem::path& path, const Parameters<float>& encoder,
                   const VocabMap& vocab, const Lexicon& lexicon, const ClassifierHead& head);

struct LoadedBaseline {
  Parameters<float> encoder;
  VocabMap vocab;  // base tokens only
  Lexicon lexicon;
  ClassifierHead head;
};

bool is_baseline(const Checkpoint& ckpt);
LoadedBaseline baseline_from(Checkpoint ckpt);
LoadedBaseline load_baseline(const std::filesystem::path& path);

}  // namespace pbg2p
