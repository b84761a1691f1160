#include "pbg2p/synth.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "pbg2p/errors.hpp"

namespace pbg2p {

namespace {

constexpr char32_t kCodePointBase = 0x4E00;
constexpr std::size_t kCodePointPool = 4000;
constexpr std::size_t kSuccessors = 3;
constexpr double kBigramStickiness = 0.75;

constexpr std::array<std::string_view, 16> kOnsets = {
    "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "zh", "ch", "sh", "z", "s"};
constexpr std::array<std::string_view, 12> kRimes = {
    "a", "o", "e", "ai", "ei", "ao", "ou", "an", "en", "ang", "eng", "ong"};

Pinyin random_pinyin(Rng& rng) {
  std::string syllable(kOnsets[rng.uniform_index(kOnsets.size())]);
  syllable += kRimes[rng.uniform_index(kRimes.size())];
  return Pinyin(std::move(syllable), static_cast<int>(rng.uniform_index(5)) + 1);
}

}  // namespace

void SynthSpec::validate() const {
  if (window < 1) throw ConfigError("trigger window must be at least 1");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("noise rate must lie in [0, 1)");
  if (min_readings < 2 || max_readings < min_readings || max_readings > 9) {
    throw ConfigError("readings per polyphone must satisfy 2 <= min <= max <= 9");
  }
  if (alphabet_size < 1) throw ConfigError("alphabet must hold at least one filler");
  if (min_length < 1 || max_length < min_length) throw ConfigError("bad sentence length range");
  if (polyphone_count > 0 && max_length < max_readings * (2 * window + 1)) {
    throw ConfigError("max_length too short for repeated-occurrence sentences");
  }
  if (polyphone_count * max_readings + alphabet_size > kCodePointPool) {
    throw ConfigError("synthetic alphabet too large");
  }
}

std::u32string SynthLanguage::alphabet() const {
  std::u32string out(polyphones.begin(), polyphones.end());
  for (const auto& t : triggers) out.append(t.begin(), t.end());
  out.append(fillers.begin(), fillers.end());
  std::sort(out.begin(), out.end());
  return out;
}

SynthLanguage make_language(const SynthSpec& spec) {
  spec.validate();
  Rng rng{spec.seed, 0x1A46};
  std::vector<char32_t> pool(kCodePointPool);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = kCodePointBase + static_cast<char32_t>(i);
  rng.shuffle(pool.begin(), pool.end());
  auto take = pool.begin();

  SynthLanguage lang;
  lang.window = spec.window;
  for (std::size_t p = 0; p < spec.polyphone_count; ++p) {
    const char32_t c = *take++;
    const auto k = spec.min_readings + rng.uniform_index(spec.max_readings - spec.min_readings + 1);
    PolyphoneEntry entry{c, {}};
    while (entry.readings.size() < k) {
      auto reading = random_pinyin(rng);
      if (std::find(entry.readings.begin(), entry.readings.end(), reading) == entry.readings.end()) {
        entry.readings.push_back(std::move(reading));
      }
    }
    lang.lexicon.add_entry(std::move(entry));
    lang.polyphone_index.emplace(c, p);
    lang.polyphones.push_back(c);
    lang.triggers.emplace_back();
    for (std::size_t r = 1; r < k; ++r) {
      lang.triggers.back().push_back(*take);
      lang.lexicon.add_monophone(*take++, random_pinyin(rng));
    }
  }
  for (std::size_t i = 0; i < spec.alphabet_size; ++i) {
    lang.fillers.push_back(*take);
    lang.lexicon.add_monophone(*take++, random_pinyin(rng));
    std::vector<std::size_t> next(kSuccessors);
    for (auto& n : next) n = rng.uniform_index(spec.alphabet_size);
    lang.successors.push_back(std::move(next));
  }
  return lang;
}

std::size_t rule_reading(const SynthLanguage& language, std::u32string_view text,
                         std::size_t index) {
  const auto& triggers = language.triggers.at(language.polyphone_index.at(text[index]));
  const std::size_t lo = index >= language.window ? index - language.window : 0;
  const std::size_t hi = std::min(text.size() - 1, index + language.window);
  for (std::size_t r = 0; r < triggers.size(); ++r) {
    for (std::size_t j = lo; j <= hi; ++j) {
      if (j != index && text[j] == triggers[r]) return r + 1;
    }
  }
  return 0;
}

SynthGenerator::SynthGenerator(const SynthSpec& spec, std::uint64_t stream, SentenceKind kind)
    : spec_(spec), language_(make_language(spec)), kind_(kind), rng_{spec.seed, stream} {}

std::u32string SynthGenerator::filler_text(std::size_t length) {
  std::u32string text;
  std::size_t prev = rng_.uniform_index(language_.fillers.size());
  for (std::size_t i = 0; i < length; ++i) {
    text.push_back(language_.fillers[prev]);
    prev = rng_.bernoulli(kBigramStickiness)
               ? language_.successors[prev][rng_.uniform_index(kSuccessors)]
               : rng_.uniform_index(language_.fillers.size());
  }
  return text;
}

LabeledSentence SynthGenerator::next() {
  const std::size_t w = spec_.window;
  std::size_t length = spec_.min_length + rng_.uniform_index(spec_.max_length - spec_.min_length + 1);
  if (language_.polyphones.empty()) return {filler_text(length), {}};

  std::vector<std::size_t> positions;
  std::vector<std::size_t> owners;     // polyphone of each occurrence
  std::vector<std::size_t> intended;   // reading each occurrence aims for
  if (kind_ == SentenceKind::standard) {
    const std::size_t k = rng_.bernoulli(spec_.second_occurrence_rate) && length > 1 ? 2 : 1;
    while (positions.size() < k) {
      const auto pos = rng_.uniform_index(length);
      if (std::find(positions.begin(), positions.end(), pos) == positions.end()) {
        positions.push_back(pos);
      }
    }
    for (std::size_t i = 0; i < k; ++i) {
      const auto p = rng_.uniform_index(language_.polyphones.size());
      owners.push_back(p);
      intended.push_back(rng_.uniform_index(language_.triggers[p].size() + 1));
    }
  } else {
    const auto p = rng_.uniform_index(language_.polyphones.size());
    const std::size_t k = language_.triggers[p].size() + 1;
    length = std::max(length, k * (2 * w + 1));
    // Occurrences more than 2w apart so windows never overlap.
    for (bool ok = false; !ok;) {
      positions.clear();
      for (std::size_t i = 0; i < k; ++i) positions.push_back(rng_.uniform_index(length));
      std::sort(positions.begin(), positions.end());
      ok = true;
      for (std::size_t i = 1; i < k; ++i) ok = ok && positions[i] - positions[i - 1] > 2 * w;
    }
    owners.assign(k, p);
    for (std::size_t r = 0; r < k; ++r) intended.push_back(r);
    rng_.shuffle(intended.begin(), intended.end());
  }

  LabeledSentence s{filler_text(length), {}};
  std::set<std::size_t> planted(positions.begin(), positions.end());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    s.text[positions[i]] = language_.polyphones[owners[i]];
  }
  auto in_window_of_owner = [&](std::size_t j, std::size_t owner) {
    for (std::size_t i = 0; i < positions.size(); ++i) {
      const auto d = j > positions[i] ? j - positions[i] : positions[i] - j;
      if (owners[i] == owner && d <= w) return true;
    }
    return false;
  };
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto p = owners[i];
    const auto& triggers = language_.triggers[p];
    if (intended[i] > 0) {
      std::vector<std::size_t> slots;
      const std::size_t lo = positions[i] >= w ? positions[i] - w : 0;
      const std::size_t hi = std::min(length - 1, positions[i] + w);
      for (std::size_t j = lo; j <= hi; ++j) {
        if (!planted.count(j)) slots.push_back(j);
      }
      if (!slots.empty()) {
        const auto j = slots[rng_.uniform_index(slots.size())];
        s.text[j] = triggers[intended[i] - 1];
        planted.insert(j);
      }
    }
    if (kind_ == SentenceKind::standard && rng_.bernoulli(spec_.distractor_rate)) {
      std::vector<std::size_t> slots;
      for (std::size_t j = 0; j < length; ++j) {
        if (!planted.count(j) && !in_window_of_owner(j, p)) slots.push_back(j);
      }
      const auto r = rng_.uniform_index(triggers.size());
      if (!slots.empty()) {
        const auto j = slots[rng_.uniform_index(slots.size())];
        s.text[j] = triggers[r];
        planted.insert(j);
      }
    }
  }
  finish(s, positions);
  return s;
}

void SynthGenerator::finish(LabeledSentence& s, const std::vector<std::size_t>& positions) {
  std::vector<std::size_t> sorted = positions;
  std::sort(sorted.begin(), sorted.end());
  for (auto pos : sorted) {
    const auto& entry = *language_.lexicon.find(s.text[pos]);
    std::size_t reading = rule_reading(language_, s.text, pos);
    if (spec_.noise_rate > 0.0 && rng_.bernoulli(spec_.noise_rate)) {
      reading = rng_.uniform_index(entry.readings.size());
    }
    s.labels.push_back({pos, entry.readings[reading]});
  }
}

std::vector<LabeledSentence> generate_split(const SynthSpec& spec, const SplitSpec& split,
                                            std::uint64_t stream) {
  SynthGenerator gen(spec, stream, split.kind);
  std::vector<LabeledSentence> out;
  out.reserve(split.sentences);
  for (std::size_t i = 0; i < split.sentences; ++i) out.push_back(gen.next());
  return out;
}

}  // namespace pbg2p
