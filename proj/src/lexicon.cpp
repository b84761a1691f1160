#include "pbg2p/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pbg2p/errors.hpp"
#include "pbg2p/utf8.hpp"

namespace pbg2p {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Calls fn(line_number, line) for every non-blank, non-comment line.
template <class Fn>
void for_each_record(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    fn(line_no, line);
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::pair<char32_t, std::string_view> split_record(std::size_t line_no,
                                                   std::string_view line) {
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) throw ParseError("expected <char>\\t<pinyin>", line_no);
  std::u32string chars;
  try {
    chars = utf8::decode(line.substr(0, tab));
  } catch (const ParseError& e) {
    throw ParseError(e.what(), line_no);
  }
  if (chars.size() != 1) throw ParseError("first field must be one character", line_no);
  return {chars[0], line.substr(tab + 1)};
}

Pinyin parse_reading(std::size_t line_no, std::string_view text) {
  auto p = Pinyin::try_parse(trim(text));
  if (!p) throw ParseError("malformed pinyin '" + std::string(text) + "'", line_no);
  return *p;
}

}  // namespace

Lexicon Lexicon::parse(std::string_view text) {
  Lexicon lex;
  for_each_record(text, [&](std::size_t line_no, std::string_view line) {
    auto [c, rest] = split_record(line_no, line);
    PolyphoneEntry entry{c, {}};
    std::size_t start = 0;
    while (true) {
      const auto comma = rest.find(',', start);
      entry.readings.push_back(parse_reading(line_no, rest.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    try {
      lex.add_entry(std::move(entry));
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
  });
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void Lexicon::parse_monophones(std::string_view text) {
  for_each_record(text, [&](std::size_t line_no, std::string_view line) {
    auto [c, rest] = split_record(line_no, line);
    try {
      add_monophone(c, parse_reading(line_no, rest));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
  });
}

void Lexicon::load_monophones(const std::filesystem::path& path) {
  parse_monophones(read_file(path));
}

void Lexicon::add_entry(PolyphoneEntry entry) {
  const std::string ch = utf8::encode(entry.scpc);
  if (entry.readings.size() < 2) {
    throw ConfigError("polyphone '" + ch + "' needs at least two readings");
  }
  for (std::size_t i = 0; i < entry.readings.size(); ++i) {
    for (std::size_t j = i + 1; j < entry.readings.size(); ++j) {
      if (entry.readings[i] == entry.readings[j]) {
        throw ConfigError("polyphone '" + ch + "' lists reading " +
                          entry.readings[i].str() + " twice");
      }
    }
  }
  if (entries_.count(entry.scpc)) throw ConfigError("duplicate polyphone '" + ch + "'");
  if (monophones_.count(entry.scpc)) {
    throw ConfigError("'" + ch + "' is already a monophone");
  }
  const char32_t key = entry.scpc;
  entries_.emplace(key, std::move(entry));
}

void Lexicon::add_monophone(char32_t c, Pinyin reading) {
  const std::string ch = utf8::encode(c);
  if (entries_.count(c)) throw ConfigError("'" + ch + "' is already a polyphone");
  if (monophones_.count(c)) throw ConfigError("duplicate monophone '" + ch + "'");
  monophones_.emplace(c, std::move(reading));
}

const PolyphoneEntry* Lexicon::find(char32_t c) const {
  const auto it = entries_.find(c);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<Pinyin> Lexicon::monophone(char32_t c) const {
  const auto it = monophones_.find(c);
  if (it == monophones_.end()) return std::nullopt;
  return it->second;
}

std::size_t Lexicon::ncmc_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [c, e] : entries_) n += e.readings.size();
  return n;
}

std::string Lexicon::to_tsv() const {
  std::string out;
  for (const auto& [c, e] : entries_) {
    out += utf8::encode(c);
    out += '\t';
    for (std::size_t i = 0; i < e.readings.size(); ++i) {
      if (i) out += ',';
      out += e.readings[i].str();
    }
    out += '\n';
  }
  return out;
}

std::string Lexicon::monophones_to_tsv() const {
  std::string out;
  for (const auto& [c, p] : monophones_) {
    out += utf8::encode(c) + '\t' + p.str() + '\n';
  }
  return out;
}

}  // namespace pbg2p
