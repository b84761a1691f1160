#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pbg2p/corpus.hpp"
#include "pbg2p/lexicon.hpp"
#include "pbg2p/random.hpp"

namespace pbg2p {

// Parameters of the synthetic polyphone language.
//
// Every polyphone p with readings 0..k-1 owns k-1 trigger characters. The
// reading of an occurrence at index i is the smallest r >= 1 whose trigger
// appears at some j with 0 < |i - j| <= window, or 0 when none does. Filler
// text follows a sparse random bigram chain. With probability noise_rate a
// label is replaced by a uniformly drawn reading of the same polyphone.
struct SynthSpec {
  std::size_t alphabet_size = 40;
  std::size_t polyphone_count = 8;
  std::size_t min_readings = 2;
  std::size_t max_readings = 3;
  std::size_t window = 3;
  std::size_t min_length = 8;
  std::size_t max_length = 24;
  double noise_rate = 0.0;
  // Probability that a standard sentence holds a second polyphone occurrence.
  double second_occurrence_rate = 0.3;
  // Probability of planting a trigger outside every window of its polyphone.
  double distractor_rate = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

// Character inventory and rule tables, a pure function of the spec.
struct SynthLanguage {
  Lexicon lexicon;  // polyphones, plus a monophone reading for every other character
  std::vector<char32_t> polyphones;
  std::vector<std::vector<char32_t>> triggers;  // triggers[p][r - 1] selects reading r
  std::vector<char32_t> fillers;
  std::vector<std::vector<std::size_t>> successors;  // preferred next fillers
  std::map<char32_t, std::size_t> polyphone_index;
  std::size_t window = 0;

  std::u32string alphabet() const;
};

SynthLanguage make_language(const SynthSpec& spec);

// Reading index the trigger rule assigns to the polyphone at text[index].
std::size_t rule_reading(const SynthLanguage& language, std::u32string_view text,
                         std::size_t index);

enum class SentenceKind {
  standard,  // one or two polyphone occurrences
  repeated,  // one polyphone several times with distinct readings
};

// Deterministic sentence stream. Streams with different ids are independent.
class SynthGenerator {
 public:
  SynthGenerator(const SynthSpec& spec, std::uint64_t stream, SentenceKind kind);

  const SynthLanguage& language() const noexcept { return language_; }
  LabeledSentence next();

 private:
  std::u32string filler_text(std::size_t length);
  void finish(LabeledSentence& s, const std::vector<std::size_t>& positions);

  SynthSpec spec_;
  SynthLanguage language_;
  SentenceKind kind_;
  Rng rng_;
};

struct SplitSpec {
  std::string name;
  std::size_t sentences;
  SentenceKind kind;
};

std::vector<LabeledSentence> generate_split(const SynthSpec& spec, const SplitSpec& split,
                                            std::uint64_t stream);

}  // namespace pbg2p
