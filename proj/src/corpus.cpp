#include "pbg2p/corpus.hpp"

#include <nlohmann/json.hpp>

#include "pbg2p/errors.hpp"
#include "pbg2p/utf8.hpp"

namespace pbg2p {

void validate(const VocabMap& vocab, const LabeledSentence& s) {
  std::size_t next = 0;
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    const auto& label = s.labels[i];
    if (i > 0 && label.index <= s.labels[i - 1].index) {
      throw LabelError("labels must be sorted and unique", label.index);
    }
    if (label.index >= s.text.size()) throw LabelError("label past end of text", label.index);
    for (; next < label.index; ++next) {
      if (vocab.is_scpc(s.text[next])) throw LabelError("unlabeled polyphone", next);
    }
    const char32_t c = s.text[label.index];
    if (!vocab.is_scpc(c)) {
      throw LabelError("'" + utf8::encode(c) + "' is not a polyphone", label.index);
    }
    bool known = false;
    for (const auto& cand : vocab.candidates(c)) known = known || cand.pinyin == label.pinyin;
    if (!known) {
      throw LabelError("'" + utf8::encode(c) + "' has no reading " + label.pinyin.str(),
                       label.index);
    }
    next = label.index + 1;
  }
  for (; next < s.text.size(); ++next) {
    if (vocab.is_scpc(s.text[next])) throw LabelError("unlabeled polyphone", next);
  }
}

std::vector<TokenId> to_ncmc(const VocabMap& vocab, const LabeledSentence& s) {
  validate(vocab, s);
  auto ids = vocab.encode(std::u32string_view(s.text));
  for (const auto& label : s.labels) {
    ids[label.index + 1] = vocab.ncmc_id(s.text[label.index], label.pinyin);
  }
  return ids;
}

LabeledSentence from_ncmc(const VocabMap& vocab, std::span<const TokenId> ids) {
  LabeledSentence s;
  for (TokenId id : ids) {
    if (id == special::kMask) throw RangeError("[MASK] cannot be converted back to text");
    if (id == special::kPad || id == special::kCls || id == special::kSep) continue;
    if (vocab.is_ncmc(id)) {
      const auto& d = vocab.ncmc(id);
      s.labels.push_back({s.text.size(), d.pinyin});
      s.text.push_back(d.scpc);
      continue;
    }
    const auto text = utf8::decode(vocab.token_text(id));
    s.text += id == special::kUnk ? std::u32string(U"�") : text;
  }
  return s;
}

TrainingExample make_example(const VocabMap& vocab, const LabeledSentence& s) {
  validate(vocab, s);
  TrainingExample ex;
  ex.input_ids = vocab.encode(std::u32string_view(s.text));
  for (const auto& label : s.labels) {
    ex.target_positions.push_back(label.index + 1);
    ex.target_ids.push_back(vocab.ncmc_id(s.text[label.index], label.pinyin));
  }
  return ex;
}

LabeledSentence parse_record(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), 0);
  }
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string() ||
      !j.contains("labels") || !j["labels"].is_array()) {
    throw ParseError("record needs a string \"text\" and an array \"labels\"", 0);
  }
  LabeledSentence s;
  s.text = utf8::decode(j["text"].get<std::string>());
  for (const auto& item : j["labels"]) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_number_unsigned() ||
        !item[1].is_string()) {
      throw ParseError("label must be [<char-index>, \"<pinyin>\"]", 0);
    }
    s.labels.push_back({item[0].get<std::size_t>(), Pinyin::parse(item[1].get<std::string>())});
  }
  return s;
}

std::string format_record(const LabeledSentence& s) {
  nlohmann::ordered_json j;
  j["text"] = utf8::encode(s.text);
  j["labels"] = nlohmann::ordered_json::array();
  for (const auto& label : s.labels) {
    j["labels"].push_back({label.index, label.pinyin.str()});
  }
  return j.dump();
}

CorpusReader::CorpusReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw Error("cannot open corpus " + path.string());
}

std::optional<LabeledSentence> CorpusReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      return parse_record(line);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_);
    }
  }
  return std::nullopt;
}

CorpusWriter::CorpusWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
  if (!out_) throw Error("cannot write corpus " + path.string());
}

void CorpusWriter::write(const LabeledSentence& s) { out_ << format_record(s) << '\n'; }

std::vector<LabeledSentence> read_corpus(const std::filesystem::path& path) {
  CorpusReader reader(path);
  std::vector<LabeledSentence> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const LabeledSentence> corpus) {
  CorpusWriter writer(path);
  for (const auto& s : corpus) writer.write(s);
}

}  // namespace pbg2p
