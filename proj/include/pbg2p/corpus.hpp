#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pbg2p/pinyin.hpp"
#include "pbg2p/vocab.hpp"

namespace pbg2p {

// Character indices count Unicode scalars from 0; the matching token position
// is index + 1 because of the leading [CLS].
struct Label {
  std::size_t index;
  Pinyin pinyin;

  friend bool operator==(const Label&, const Label&) = default;
};

struct LabeledSentence {
  std::u32string text;
  std::vector<Label> labels;

  friend bool operator==(const LabeledSentence&, const LabeledSentence&) = default;
};

// Every polyphone occurrence labeled once with one of its readings, labels
// sorted, nothing else labeled. Throws LabelError naming the first offence.
void validate(const VocabMap& vocab, const LabeledSentence& s);

// encode(text) with each labeled polyphone replaced by its NCMC token.
std::vector<TokenId> to_ncmc(const VocabMap& vocab, const LabeledSentence& s);

// Inverse of to_ncmc. Special tokens are dropped; [MASK] is rejected.
LabeledSentence from_ncmc(const VocabMap& vocab, std::span<const TokenId> ids);

// Polyphone training item: the plain encoded sentence as input, the NCMC of
// every labeled polyphone as target at its own position.
struct TrainingExample {
  std::vector<TokenId> input_ids;
  std::vector<std::size_t> target_positions;
  std::vector<TokenId> target_ids;
};

TrainingExample make_example(const VocabMap& vocab, const LabeledSentence& s);

// One JSON record per line: {"text": ..., "labels": [[index, "pinyin"], ...]}
LabeledSentence parse_record(std::string_view line);
std::string format_record(const LabeledSentence& s);

class CorpusReader {
 public:
  explicit CorpusReader(const std::filesystem::path& path);
  // Blank lines are skipped; malformed lines throw ParseError with the line.
  std::optional<LabeledSentence> next();

 private:
  std::ifstream in_;
  std::size_t line_ = 0;
};

class CorpusWriter {
 public:
  explicit CorpusWriter(const std::filesystem::path& path);
  void write(const LabeledSentence& s);

 private:
  std::ofstream out_;
};

std::vector<LabeledSentence> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, std::span<const LabeledSentence> corpus);

}  // namespace pbg2p
