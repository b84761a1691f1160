#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbg2p/corpus.hpp"
#include "pbg2p/inference.hpp"
#include "pbg2p/model.hpp"

namespace pbg2p {

struct Tally {
  std::size_t scored = 0;
  std::size_t correct = 0;
};

struct SplitResult {
  std::string name;
  std::size_t sentences = 0;
  std::size_t scored = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // correct / scored, 0 when nothing was scored
  std::map<char32_t, Tally> per_scpc;
};

struct EvalResult {
  std::string system;
  std::vector<SplitResult> splits;
  double average = 0.0;  // unweighted mean of split accuracies
};

// Scores each polyphone occurrence independently. Reports must align 1:1 with
// the gold sentences (same text, a prediction for every gold label); throws
// Error naming the first misaligned sentence otherwise.
SplitResult score(std::string name, std::span<const PredictionReport> predictions,
                  std::span<const LabeledSentence> gold);

EvalResult summarize(std::string system, std::vector<SplitResult> splits);

std::string format_table(const EvalResult& result, bool per_scpc = false);
nlohmann::ordered_json to_json(const EvalResult& result);

struct SplitStats {
  std::string name;
  std::size_t sentences = 0;
  std::size_t occurrences = 0;
  // polyphone -> reading -> occurrences
  std::map<char32_t, std::map<std::string, std::size_t>> readings;
};

SplitStats dataset_stats(std::string name, std::span<const LabeledSentence> corpus);
std::string format_stats_table(std::span<const SplitStats> stats);
nlohmann::ordered_json stats_to_json(std::span<const SplitStats> stats);

// Raw (unrestricted) probability of each candidate NCMC for every polyphone
// occurrence, under two models that differ only in how the NCMCs were
// initialized.
struct ProbeRow {
  std::size_t sentence;
  std::size_t char_index;
  char32_t scpc;
  std::vector<Pinyin> readings;
  std::vector<double> scpc_init;
  std::vector<double> unk_init;
};

std::vector<ProbeRow> init_probe(const Parameters<float>& scpc_init,
                                 const Parameters<float>& unk_init, const VocabMap& vocab,
                                 std::span<const std::u32string> sentences);
std::string format_probe_table(std::span<const ProbeRow> rows);

}  // namespace pbg2p
