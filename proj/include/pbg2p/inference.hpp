#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbg2p/lexicon.hpp"
#include "pbg2p/model.hpp"
#include "pbg2p/vocab.hpp"

namespace pbg2p {

struct CandidateProbability {
  Pinyin pinyin;
  double probability;
};

struct Prediction {
  std::size_t char_index;
  char32_t scpc;
  Pinyin chosen;
  std::vector<CandidateProbability> candidate_probs;  // renormalized over candidates
  std::vector<CandidateProbability> raw_probs;        // before renormalization
};

struct PredictionReport {
  std::u32string text;
  std::vector<Prediction> predictions;  // one per polyphone occurrence, in text order
};

// Renormalizes raw candidate probabilities and picks the argmax; ties go to
// the earliest candidate (the lexicon's first-listed reading).
Prediction decide(std::size_t char_index, char32_t scpc, std::vector<CandidateProbability> raw);

// One eval-mode forward pass; for each polyphone occurrence the softmax row at
// its position is restricted to the NCMCs of that character. Text without
// polyphones yields an empty report. Throws RangeError when text + 2 > max_len.
PredictionReport predict(const Parameters<float>& params, const VocabMap& vocab,
                         std::u32string_view text);

// predict over many sentences, batch_size at a time in padded batches.
std::vector<PredictionReport> predict_many(const Parameters<float>& params, const VocabMap& vocab,
                                           std::span<const std::u32string> texts,
                                           std::size_t batch_size = 32);

// Per-character pinyin: dictionary lookup for monophones, predict for
// polyphones, nullopt for characters the lexicon does not know.
std::vector<std::optional<Pinyin>> g2p_annotate(const Parameters<float>& params,
                                                const VocabMap& vocab, const Lexicon& lexicon,
                                                std::u32string_view text);

nlohmann::ordered_json report_to_json(const PredictionReport& report);

}  // namespace pbg2p
